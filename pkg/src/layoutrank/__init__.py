"""Learned layout ranking for quantum circuits on noisy devices."""

from .circuit import Circuit, CircuitBuilder, Instruction, ScheduledCircuit, schedule
from .dataset import Batch, RankingDataset, generate_dataset
from .device import DeviceModel, load_calibration, synthesize_device
from .ensembles import EnsembleConfig, sample_ensemble
from .evaluation import LearnedMethod, MapomaticMethod, RandomMethod, Report, evaluate
from .layouts import Layout, circuit_graph, enumerate_layouts
from .losses import LossConfig
from .score import ScoreParams, mapomatic_score, total_score
from .simulator import hellinger_fidelity, ideal_distribution, noisy_counts
from .trainer import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "Batch", "Circuit", "CircuitBuilder", "DeviceModel", "EnsembleConfig", "Instruction", "Layout",
    "LearnedMethod", "LossConfig", "MapomaticMethod", "RandomMethod", "RankingDataset", "Report",
    "ScheduledCircuit", "ScoreParams", "TrainConfig", "TrainResult", "circuit_graph", "enumerate_layouts",
    "evaluate", "generate_dataset", "hellinger_fidelity", "ideal_distribution", "load_calibration",
    "mapomatic_score", "noisy_counts", "sample_ensemble", "schedule", "synthesize_device", "total_score",
    "train",
]

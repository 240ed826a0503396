from pathlib import Path

import numpy as np
import pytest

from layoutrank.circuit import CircuitBuilder
from layoutrank.device import load_calibration, synthesize_device

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def device7():
    """7-qubit heavy-hex cell shipped as a calibration fixture."""
    return load_calibration(DATA / "device7.json")


@pytest.fixture(scope="session")
def line7():
    return synthesize_device(7, "line", 3.0, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bell_pair():
    b = CircuitBuilder(2)
    b.rz(np.pi / 2, 0).sx(0).rz(np.pi / 2, 0).cx(0, 1)
    return b.measure_all().build()


def make_device(Q, edges, f1=1.0, f2=1.0, fm=1.0, t1_us=float("inf"), zz_khz=0.0, name="test"):
    """Hand-specified device: uniform values unless a dict keyed like the calibration is given."""
    from layoutrank.device import DeviceModel

    edges = [tuple(sorted(e)) for e in edges]
    fid, dur = {}, {}
    for q in range(Q):
        for g in ("X", "SX", "RZ"):
            fid[(g, (q,))] = f1[(g, (q,))] if isinstance(f1, dict) else f1
            dur[(g, (q,))] = 35
    for e in edges:
        fid[("CX", e)] = f2[e] if isinstance(f2, dict) else f2
        dur[("CX", e)] = 300
    fm = tuple(fm) if isinstance(fm, (list, tuple)) else (fm,) * Q
    t1 = tuple(t1_us) if isinstance(t1_us, (list, tuple)) else (t1_us,) * Q
    zz = {e: (zz_khz[e] if isinstance(zz_khz, dict) else zz_khz) for e in edges}
    return DeviceModel(Q, frozenset(edges), fid, dur, fm, (700,) * Q, t1, zz, "test", name)


def hidden_params(device, seed=0, sharing="per-qubit"):
    """A random feasible parameter point away from the initialization."""
    from layoutrank.score import ScoreParams, gate_param_key

    rng = np.random.default_rng(seed)
    keys = sorted({gate_param_key(k, sharing) for k in device.gate_fidelity})
    a, b = rng.dirichlet([2.0, 2.0, 2.0])[:2]
    return ScoreParams(
        lambda_gate={k: float(rng.uniform(0.3, 3.0)) for k in keys},
        lambda_msmt={q: float(rng.uniform(0.3, 3.0)) for q in range(device.Q)},
        a=float(a), b=float(b), c=float(rng.uniform(0.2, 0.9)),
        xi1=float(rng.uniform(0.2, 1.3)), xi2=float(rng.uniform(0.2, 1.3)), eta=float(rng.uniform(0.2, 1.3)),
        sharing=sharing,
    )


def relabel(dataset, params):
    """Replace every batch's fidelities with the scores under ``params``."""
    from layoutrank.dataset import RankingDataset
    from layoutrank.evaluation import LearnedMethod

    m = LearnedMethod(params)
    return RankingDataset([b.with_fidelities(np.clip(np.exp(m.scores(b)), 0.0, 1.0)) for b in dataset],
                          dict(dataset.meta))


def scored_dataset(circuits, device, params):
    """Batches of every layout with fidelities equal to the scores under ``params`` (no simulation)."""
    from layoutrank.dataset import Batch, RankingDataset
    from layoutrank.layouts import circuit_graph, enumerate_layouts

    batches = []
    for i, c in enumerate(circuits):
        lays = enumerate_layouts(circuit_graph(c), device)
        if len(lays) >= 2:
            batches.append(Batch(f"c{i:05d}", c, lays, np.full(len(lays), 0.5), device))
    return relabel(RankingDataset(batches), params)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)

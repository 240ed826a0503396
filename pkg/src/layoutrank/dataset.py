"""Ranking datasets: every valid layout of each initial circuit with its fidelity.

On disk a dataset is a directory::

    index.json              composition, seeds, batch file list, dropped circuits
    device.json             calibration snapshot the batches refer to
    batches/batch_00000.json  {initial_circuit, device_ref, layouts, counts, hellinger, ideal}
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import Circuit, ScheduledCircuit, schedule
from .device import DeviceModel, load_calibration
from .layouts import Layout, circuit_graph, enumerate_layouts
from .score import LayoutFeatures, layout_features
from .simulator import (DEFAULT_SHOTS, WIDTH_BOUND, BitstringDistribution, ShotCounts,
                        hellinger_fidelity, ideal_distribution, noisy_counts)

log = logging.getLogger(__name__)
INDEX_FILE = "index.json"
DATASET_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class Batch:
    """All layouts of one initial circuit on one calibration snapshot."""

    batch_id: str
    circuit: Circuit
    layouts: list
    hellinger: np.ndarray
    device: DeviceModel
    device_ref: str = "device.json"
    counts: list | None = None
    ideal: BitstringDistribution | None = None
    _sched: list | None = field(default=None, repr=False)
    _feats: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.hellinger = np.asarray(self.hellinger, dtype=float)
        if len(self.layouts) < 2:
            raise DatasetError(f"batch {self.batch_id} has {len(self.layouts)} layouts; need >= 2")
        if len(self.hellinger) != len(self.layouts):
            raise DatasetError(f"batch {self.batch_id}: fidelity count does not match layouts")
        if np.any(self.hellinger < 0) or np.any(self.hellinger > 1):
            raise DatasetError(f"batch {self.batch_id}: fidelities outside [0, 1]")

    @property
    def L(self) -> int:
        return len(self.layouts)

    @property
    def scheduled(self) -> list[ScheduledCircuit]:
        if self._sched is None:
            self._sched = [schedule(self.circuit, self.device, lay) for lay in self.layouts]
        return self._sched

    def features(self, sharing: str = "per-qubit") -> list[LayoutFeatures]:
        if sharing not in self._feats:
            self._feats[sharing] = [
                layout_features(self.circuit, lay, self.device, s, sharing)
                for lay, s in zip(self.layouts, self.scheduled)
            ]
        return self._feats[sharing]

    def with_fidelities(self, hellinger) -> "Batch":
        b = Batch(self.batch_id, self.circuit, self.layouts, hellinger, self.device, self.device_ref)
        b._sched, b._feats = self._sched, self._feats
        return b

    def to_dict(self) -> dict:
        d = {
            "batch_id": self.batch_id,
            "initial_circuit": self.circuit.to_dict(),
            "device_ref": self.device_ref,
            "layouts": [list(l.mapping) for l in self.layouts],
            "hellinger": [float(h) for h in self.hellinger],
        }
        if self.counts is not None:
            d["counts"] = [dict(sorted(c.counts.items())) for c in self.counts]
            d["n_shots"] = self.counts[0].N_shots
        if self.ideal is not None:
            d["ideal"] = dict(sorted(self.ideal.probabilities.items()))
        return d

    @classmethod
    def from_dict(cls, d: dict, device: DeviceModel) -> "Batch":
        circ = Circuit.from_dict(d["initial_circuit"])
        layouts = [Layout(tuple(m), device.name) for m in d["layouts"]]
        counts = ideal = None
        if "counts" in d:
            m = len(circ.measured_qubits or range(circ.n))
            counts = [ShotCounts(m, c, int(d["n_shots"])) for c in d["counts"]]
        if "ideal" in d:
            m = len(circ.measured_qubits or range(circ.n))
            ideal = BitstringDistribution(m, d["ideal"])
        return cls(d["batch_id"], circ, layouts, d["hellinger"], device, d.get("device_ref", "device.json"),
                   counts, ideal)


@dataclass
class RankingDataset:
    batches: list
    meta: dict = field(default_factory=dict)

    @property
    def N_B(self) -> int:
        return len(self.batches)

    def __len__(self):
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)

    def subset(self, indices) -> "RankingDataset":
        return RankingDataset([self.batches[i] for i in indices], dict(self.meta))

    @property
    def devices(self) -> list[DeviceModel]:
        seen = {}
        for b in self.batches:
            seen.setdefault(b.device_ref, b.device)
        return list(seen.values())

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        (out / "batches").mkdir(parents=True, exist_ok=True)
        devices = {}
        for b in self.batches:
            devices.setdefault(b.device_ref, b.device)
        for ref, dev in devices.items():
            dev.save(out / ref)
        files = []
        for i, b in enumerate(self.batches):
            name = f"batches/batch_{i:05d}.json"
            _write_json(out / name, b.to_dict())
            files.append(name)
        index = dict(self.meta)
        index.update({"version": DATASET_VERSION, "N_B": self.N_B, "batches": files})
        _write_json(out / INDEX_FILE, index, indent=1)

    @classmethod
    def load(cls, data_dir) -> "RankingDataset":
        root = Path(data_dir)
        try:
            with open(root / INDEX_FILE) as fh:
                index = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"cannot read dataset index in {root}: {exc}") from None
        devices: dict = {}
        batches = []
        for name in index["batches"]:
            with open(root / name) as fh:
                d = json.load(fh)
            ref = d.get("device_ref", "device.json")
            if ref not in devices:
                devices[ref] = load_calibration(root / ref)
            batches.append(Batch.from_dict(d, devices[ref]))
        meta = {k: v for k, v in index.items() if k not in ("batches", "N_B", "version")}
        return cls(batches, meta)


def _write_json(path, obj, indent=None):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=indent)
        fh.write("\n")
    os.replace(tmp, path)


def generate_dataset(circuits, device: DeviceModel, N_shots: int = DEFAULT_SHOTS, seed: int = 0,
                     out_dir=None, over_rotation: float = 0.0, progress=None) -> RankingDataset:
    """Simulate every layout of every circuit and collect the Hellinger fidelities.

    ``circuits`` is a list of circuits or an :class:`~layoutrank.ensembles.EnsembleConfig`.
    Layout ``j`` of circuit ``i`` is simulated with seed ``[seed, i, j]``, so
    regeneration is byte-identical. Circuits with fewer than two layouts are
    dropped with a warning.
    """
    from .ensembles import EnsembleConfig, composition, sample_ensemble

    meta: dict = {"n_shots": N_shots, "seed": seed, "device": device.name, "over_rotation": over_rotation}
    if isinstance(circuits, EnsembleConfig):
        meta["ensemble"] = circuits.to_dict()
        circuits = sample_ensemble(circuits, device)
    device.validate()
    batches, dropped = [], []
    for i, circ in enumerate(circuits):
        if circ.n > WIDTH_BOUND or circ.n > device.Q:
            raise DatasetError(f"circuit {i} of width {circ.n} does not fit the device/width bound")
        layouts = enumerate_layouts(circuit_graph(circ), device)
        if len(layouts) < 2:
            log.warning("dropping circuit %d (%s, width %d): %d layout(s)", i, circ.label, circ.n, len(layouts))
            dropped.append({"index": i, "label": circ.label, "n": circ.n, "layouts": len(layouts)})
            continue
        ideal = ideal_distribution(circ)
        counts, fids = [], []
        for j, lay in enumerate(layouts):
            sc = noisy_counts(schedule(circ, device, lay), lay, device, N_shots, [seed, i, j], over_rotation)
            counts.append(sc)
            fids.append(hellinger_fidelity(ideal, sc))
        batches.append(Batch(f"c{i:05d}", circ, layouts, fids, device, "device.json", counts, ideal))
        if progress is not None:
            progress(i, len(circuits))
    meta["composition"] = composition(b.circuit for b in batches)
    meta["dropped"] = dropped
    ds = RankingDataset(batches, meta)
    if out_dir is not None:
        ds.save(out_dir)
    return ds

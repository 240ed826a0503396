"""Device coupling graphs and calibration snapshots."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import MEASURE, CalibrationIncomplete

SCHEMA_KEYS = ("Q", "edges", "gates", "measurement", "t1_us", "zz_khz", "timestamp")

# (low, high) bands of the default synthetic calibration; the heterogeneity
# ratio sets how far above `low` a draw may land.
DEFAULT_BANDS = {
    "err_1q": (1e-4, 1e-3),
    "err_2q": (5e-3, 2e-2),
    "err_msmt": (1e-2, 4e-2),
    "t1_us": (50.0, 150.0),
    "zz_khz": (30.0, 120.0),
}
DURATION_1Q = 35
DURATION_2Q = 300
DURATION_MSMT = 700
TOPOLOGIES = ("line", "ring", "heavy-hex-cell", "grid")


class CalibrationError(ValueError):
    pass


def _edge(i, j) -> tuple[int, int]:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class DeviceModel:
    Q: int
    edges: frozenset
    gate_fidelity: dict = field(hash=False)
    gate_duration: dict = field(hash=False)
    msmt_fidelity: tuple
    msmt_duration: tuple
    t1_us: tuple
    zz_khz: dict = field(hash=False)
    timestamp: str = ""
    name: str = "device"

    def __post_init__(self):
        self.validate()

    # -- derived physics ---------------------------------------------------
    @property
    def gamma1(self) -> np.ndarray:
        """Per-qubit relaxation rate in 1/ns."""
        t1 = np.asarray(self.t1_us, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(t1), 0.0, 1.0 / (t1 * 1e3))

    def omega_zz(self, i: int, j: int) -> float:
        """ZZ coupling of edge (i, j) as an angular frequency in rad/ns."""
        return 2.0 * math.pi * self.zz_khz[_edge(i, j)] * 1e-6

    def neighbors(self, q: int) -> list[int]:
        return sorted(b if a == q else a for a, b in self.edges if q in (a, b))

    def has_edge(self, i: int, j: int) -> bool:
        return _edge(i, j) in self.edges

    def _lookup(self, table: dict, name: str, qubits: tuple[int, ...]):
        key = (name, tuple(qubits))
        if key in table:
            return table[key]
        if len(qubits) == 2 and (name, qubits[::-1]) in table:
            return table[(name, qubits[::-1])]
        raise CalibrationIncomplete(f"no calibration for {name} on {tuple(qubits)}")

    def fidelity(self, name: str, qubits: tuple[int, ...]) -> float:
        if name == MEASURE:
            return self.msmt_fidelity[qubits[0]]
        return self._lookup(self.gate_fidelity, name, qubits)

    def duration(self, name: str, qubits: tuple[int, ...]) -> int:
        if name == MEASURE:
            return self.msmt_duration[qubits[0]]
        return self._lookup(self.gate_duration, name, qubits)

    def calibration_key(self, name: str, qubits: tuple[int, ...]) -> tuple:
        """The key under which (name, qubits) is stored; 2q gates may be stored reversed."""
        key = (name, tuple(qubits))
        if key not in self.gate_fidelity and len(qubits) == 2:
            rev = (name, tuple(qubits[::-1]))
            if rev in self.gate_fidelity:
                return rev
        if key not in self.gate_fidelity:
            raise CalibrationIncomplete(f"no calibration for {name} on {tuple(qubits)}")
        return key

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        if self.Q < 1:
            raise CalibrationError("Q must be positive")
        for a, b in self.edges:
            if not (0 <= a < b < self.Q):
                raise CalibrationError(f"bad edge {(a, b)} for Q={self.Q}")
        for (name, qubits), f in self.gate_fidelity.items():
            if not 0.0 < f <= 1.0:
                raise CalibrationError(f"fidelity of {name}{list(qubits)} = {f} outside (0, 1]")
            if any(not 0 <= q < self.Q for q in qubits):
                raise CalibrationError(f"gate {name}{list(qubits)} on a missing qubit")
            if len(qubits) == 2 and _edge(*qubits) not in self.edges:
                raise CalibrationError(f"2q gate {name}{list(qubits)} not on a coupling edge")
            if (name, qubits) not in self.gate_duration:
                raise CalibrationError(f"gate {name}{list(qubits)} has no duration")
        for key, d in self.gate_duration.items():
            if d <= 0:
                raise CalibrationError(f"duration of {key} must be positive")
        if len(self.msmt_fidelity) != self.Q or len(self.msmt_duration) != self.Q:
            raise CalibrationError("measurement calibration must cover every qubit")
        for q, f in enumerate(self.msmt_fidelity):
            if not 0.0 < f <= 1.0:
                raise CalibrationError(f"measurement fidelity of qubit {q} = {f} outside (0, 1]")
        if any(d <= 0 for d in self.msmt_duration):
            raise CalibrationError("measurement durations must be positive")
        if len(self.t1_us) != self.Q or any(not t > 0 for t in self.t1_us):
            raise CalibrationError("t1_us needs one positive value per qubit")
        if set(self.zz_khz) != set(self.edges):
            extra = set(self.zz_khz) - set(self.edges)
            if extra:
                raise CalibrationError(f"ZZ coupling given on non-edge(s) {sorted(extra)}")
            raise CalibrationError(f"ZZ coupling missing on edge(s) {sorted(set(self.edges) - set(self.zz_khz))}")
        if any(v < 0 for v in self.zz_khz.values()):
            raise CalibrationError("ZZ couplings must be non-negative")
        if not _connected(self.Q, self.edges):
            raise CalibrationError("coupling graph is not connected")

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        gates = [
            {
                "name": name,
                "qubits": list(qubits),
                "fidelity": self.gate_fidelity[(name, qubits)],
                "duration_ns": float(self.gate_duration[(name, qubits)]),
            }
            for name, qubits in sorted(self.gate_fidelity, key=lambda k: (len(k[1]), k[1], k[0]))
        ]
        return {
            "name": self.name,
            "Q": self.Q,
            "edges": [list(e) for e in sorted(self.edges)],
            "gates": gates,
            "measurement": [
                {"qubit": q, "fidelity": f, "duration_ns": float(d)}
                for q, (f, d) in enumerate(zip(self.msmt_fidelity, self.msmt_duration))
            ],
            "t1_us": list(self.t1_us),
            "zz_khz": [{"edge": list(e), "value": self.zz_khz[e]} for e in sorted(self.zz_khz)],
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceModel":
        missing = [k for k in SCHEMA_KEYS if k not in d]
        if missing:
            raise CalibrationError(f"calibration missing field(s): {', '.join(missing)}")
        try:
            Q = int(d["Q"])
            edges = set()
            for e in d["edges"]:
                if len(e) != 2 or e[0] == e[1]:
                    raise CalibrationError(f"malformed edge {e}")
                edges.add(_edge(*e))
            fid, dur = {}, {}
            for g in d["gates"]:
                key = (str(g["name"]), tuple(int(q) for q in g["qubits"]))
                fid[key] = float(g["fidelity"])
                dur[key] = _ns(g["duration_ns"])
            msmt = sorted(d["measurement"], key=lambda m: int(m["qubit"]))
            if [int(m["qubit"]) for m in msmt] != list(range(Q)):
                raise CalibrationError("measurement entries must cover qubits 0..Q-1 once each")
            zz = {}
            for z in d["zz_khz"]:
                e = _edge(*z["edge"])
                if e not in edges:
                    raise CalibrationError(f"ZZ coupling given on non-edge {list(e)}")
                zz[e] = float(z["value"])
            return cls(
                Q=Q,
                edges=frozenset(edges),
                gate_fidelity=fid,
                gate_duration=dur,
                msmt_fidelity=tuple(float(m["fidelity"]) for m in msmt),
                msmt_duration=tuple(_ns(m["duration_ns"]) for m in msmt),
                t1_us=tuple(float(t) for t in d["t1_us"]),
                zz_khz=zz,
                timestamp=str(d["timestamp"]),
                name=str(d.get("name", "device")),
            )
        except (KeyError, TypeError) as exc:
            raise CalibrationError(f"calibration schema violation: {exc!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "DeviceModel":
        return cls.from_dict(json.loads(text))

    # -- derived devices ---------------------------------------------------
    def noiseless(self) -> "DeviceModel":
        """Same timing and graph with every error channel switched off."""
        return replace(
            self,
            gate_fidelity={k: 1.0 for k in self.gate_fidelity},
            msmt_fidelity=(1.0,) * self.Q,
            t1_us=(math.inf,) * self.Q,
            zz_khz={e: 0.0 for e in self.zz_khz},
        )

    def scaled_errors(self, factor: float) -> "DeviceModel":
        """Multiply every infidelity, relaxation rate and ZZ coupling by ``factor``."""
        return replace(
            self,
            gate_fidelity={k: max(1.0 - factor * (1.0 - f), 1e-6) for k, f in self.gate_fidelity.items()},
            msmt_fidelity=tuple(max(1.0 - factor * (1.0 - f), 1e-6) for f in self.msmt_fidelity),
            t1_us=tuple(t / factor for t in self.t1_us),
            zz_khz={e: v * factor for e, v in self.zz_khz.items()},
        )


def _ns(value) -> int:
    v = float(value)
    if not v > 0:
        raise CalibrationError(f"duration {v} must be positive")
    return int(round(v))


def _connected(Q: int, edges) -> bool:
    adj = {q: set() for q in range(Q)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == Q


def load_calibration(path) -> DeviceModel:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"{path}: not valid JSON ({exc})") from None
    return DeviceModel.from_dict(data)


def topology_edges(Q: int, topology: str) -> list[tuple[int, int]]:
    if topology == "line":
        if Q < 2:
            raise CalibrationError("line topology needs Q >= 2")
        return [(i, i + 1) for i in range(Q - 1)]
    if topology == "ring":
        if Q < 3:
            raise CalibrationError("ring topology needs Q >= 3")
        return [_edge(i, (i + 1) % Q) for i in range(Q)]
    if topology == "heavy-hex-cell":
        if Q == 7:
            # H-shaped 7-qubit cell (ibm_nairobi-like)
            return [(0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6)]
        if Q == 12:
            return [_edge(i, (i + 1) % 12) for i in range(12)]
        raise CalibrationError("heavy-hex-cell topology supports Q in {7, 12}")
    if topology == "grid":
        rows = int(math.isqrt(Q))
        while rows > 1 and Q % rows:
            rows -= 1
        if rows < 2:
            raise CalibrationError(f"grid topology needs a composite Q, got {Q}")
        cols = Q // rows
        edges = []
        for r in range(rows):
            for c in range(cols):
                q = r * cols + c
                if c + 1 < cols:
                    edges.append((q, q + 1))
                if r + 1 < rows:
                    edges.append((q, q + cols))
        return edges
    raise CalibrationError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")


def synthesize_device(Q: int, topology: str = "line", heterogeneity: float = 3.0,
                      seed: int = 0, bands: dict | None = None) -> DeviceModel:
    """Random calibration snapshot with log-uniform draws in [low, low * heterogeneity]."""
    if not heterogeneity >= 1.0:
        raise CalibrationError("heterogeneity is a ratio >= 1")
    edges = topology_edges(Q, topology)
    bands = {**DEFAULT_BANDS, **(bands or {})}
    rng = np.random.default_rng(seed)

    def draw(kind):
        low = bands[kind][0]
        return float(low * heterogeneity ** rng.uniform(0.0, 1.0))

    fid, dur = {}, {}
    for q in range(Q):
        for g in ("X", "SX", "RZ"):
            fid[(g, (q,))] = 1.0 - draw("err_1q")
            dur[(g, (q,))] = DURATION_1Q
    for e in edges:
        fid[("CX", e)] = 1.0 - draw("err_2q")
        dur[("CX", e)] = DURATION_2Q
    msmt = tuple(1.0 - draw("err_msmt") for _ in range(Q))
    t1 = tuple(draw("t1_us") for _ in range(Q))
    zz = {e: draw("zz_khz") for e in edges}
    return DeviceModel(
        Q=Q,
        edges=frozenset(edges),
        gate_fidelity=fid,
        gate_duration=dur,
        msmt_fidelity=msmt,
        msmt_duration=(DURATION_MSMT,) * Q,
        t1_us=t1,
        zz_khz=zz,
        timestamp=f"synthetic:seed={seed}",
        name=f"synthetic-{topology}-{Q}",
    )

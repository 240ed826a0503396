"""Hardware-compatible circuits, ASAP scheduling and idle-interval extraction.

Times are integer nanoseconds throughout.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .device import DeviceModel
    from .layouts import Layout

NATIVE_1Q = ("X", "SX", "RZ")
NATIVE_2Q = ("CX",)
MEASURE = "measure"
LABELS = ("BV", "IQFT", "CCP", "QAOA", "other")


class CircuitError(ValueError):
    pass


class CalibrationIncomplete(KeyError):
    """A (gate, physical qubits) pair has no calibrated duration or fidelity."""


@dataclass(frozen=True)
class Instruction:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.name in NATIVE_2Q:
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise CircuitError(f"{self.name} needs two distinct qubits, got {self.qubits}")
        elif self.name in NATIVE_1Q or self.name == MEASURE:
            if len(self.qubits) != 1:
                raise CircuitError(f"{self.name} acts on exactly one qubit, got {self.qubits}")
        else:
            raise CircuitError(f"non-native instruction {self.name!r}")
        if self.name == "RZ" and len(self.params) != 1:
            raise CircuitError("RZ takes exactly one angle")

    @property
    def kind(self) -> str:
        if self.name == MEASURE:
            return "measure"
        return "gate-2q" if len(self.qubits) == 2 else "gate-1q"

    def to_dict(self) -> dict:
        return {"name": self.name, "qubits": list(self.qubits), "params": list(self.params)}


@dataclass(frozen=True)
class Circuit:
    n: int
    instructions: tuple[Instruction, ...] = ()
    label: str = "other"
    # known ideal outcome of a deterministic ("one-hot") circuit, bit order = measured_qubits
    expected: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if self.n < 0:
            raise CircuitError("negative width")
        measured: set[int] = set()
        for inst in self.instructions:
            for q in inst.qubits:
                if not 0 <= q < self.n:
                    raise CircuitError(f"qubit {q} out of range for width {self.n}")
                if q in measured:
                    raise CircuitError(f"instruction {inst.name} on qubit {q} after its measurement")
            if inst.name == MEASURE:
                measured.add(inst.qubits[0])

    @property
    def measured_qubits(self) -> list[int]:
        """Measured qubits in ascending index order; this is the bit order of outcomes."""
        return sorted({i.qubits[0] for i in self.instructions if i.name == MEASURE})

    @property
    def used_qubits(self) -> list[int]:
        return sorted({q for i in self.instructions for q in i.qubits})

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "label": self.label,
            "instructions": [i.to_dict() for i in self.instructions],
        }
        if self.expected is not None:
            d["expected"] = self.expected
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        try:
            insts = [
                Instruction(i["name"], tuple(i["qubits"]), tuple(i.get("params", ())))
                for i in d["instructions"]
            ]
            return cls(int(d["n"]), tuple(insts), d.get("label", "other"), d.get("expected"))
        except KeyError as exc:
            raise CircuitError(f"circuit JSON missing field {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "Circuit":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class CircuitBuilder:
    """Small mutable helper for assembling native-gate circuits."""

    def __init__(self, n: int, label: str = "other"):
        self.n = n
        self.label = label
        self._insts: list[Instruction] = []

    def x(self, q):
        self._insts.append(Instruction("X", (q,)))
        return self

    def sx(self, q):
        self._insts.append(Instruction("SX", (q,)))
        return self

    def rz(self, theta, q):
        self._insts.append(Instruction("RZ", (q,), (theta,)))
        return self

    def cx(self, c, t):
        self._insts.append(Instruction("CX", (c, t)))
        return self

    def measure(self, q):
        self._insts.append(Instruction(MEASURE, (q,)))
        return self

    def measure_all(self):
        for q in range(self.n):
            self.measure(q)
        return self

    def extend(self, insts: Iterable[Instruction]):
        self._insts.extend(insts)
        return self

    def build(self, expected: str | None = None) -> Circuit:
        return Circuit(self.n, tuple(self._insts), self.label, expected)


@dataclass(frozen=True)
class IdleInterval:
    qubits: tuple[int, ...]
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class ScheduledCircuit:
    circuit: Circuit
    start_times: tuple[int, ...]
    durations: tuple[int, ...]
    total_duration: int = field(default=-1)

    def __post_init__(self):
        st = tuple(int(t) for t in self.start_times)
        du = tuple(int(d) for d in self.durations)
        object.__setattr__(self, "start_times", st)
        object.__setattr__(self, "durations", du)
        if len(st) != len(self.circuit.instructions) or len(du) != len(st):
            raise CircuitError("schedule length does not match instruction count")
        end = max((s + d for s, d in zip(st, du)), default=0)
        if self.total_duration < 0:
            object.__setattr__(self, "total_duration", end)
        elif end > self.total_duration:
            raise CircuitError("instruction ends after total_duration")
        for q, spans in self._spans().items():
            for (s0, e0), (s1, _) in zip(spans, spans[1:]):
                if s1 < e0:
                    raise CircuitError(f"overlapping instructions on qubit {q}")

    def _spans(self) -> dict[int, list[tuple[int, int]]]:
        spans: dict[int, list[tuple[int, int]]] = {}
        for inst, s, d in zip(self.circuit.instructions, self.start_times, self.durations):
            for q in inst.qubits:
                spans.setdefault(q, []).append((s, s + d))
        for v in spans.values():
            v.sort()
        return spans

    def busy_spans(self, qubit: int) -> list[tuple[int, int]]:
        return self._spans().get(qubit, [])


def instruction_duration(inst: Instruction, device: "DeviceModel", layout: "Layout") -> int:
    phys = tuple(layout.mapping[q] for q in inst.qubits)
    return device.duration(inst.name, phys)


def schedule(circuit: Circuit, device: "DeviceModel", layout: "Layout") -> ScheduledCircuit:
    """As-soon-as-possible schedule of ``circuit`` under ``layout``."""
    if layout.n != circuit.n:
        raise CircuitError(f"layout width {layout.n} does not match circuit width {circuit.n}")
    free = [0] * circuit.n
    starts, durs = [], []
    for inst in circuit.instructions:
        d = instruction_duration(inst, device, layout)
        t = max(free[q] for q in inst.qubits)
        for q in inst.qubits:
            free[q] = t + d
        starts.append(t)
        durs.append(d)
    return ScheduledCircuit(circuit, tuple(starts), tuple(durs))


def gate_counts(circuit: Circuit, layout: "Layout") -> Counter:
    """n(C; g) keyed by (name, physical qubits); measurements keyed as ("measure", (p,))."""
    counts: Counter = Counter()
    for inst in circuit.instructions:
        counts[(inst.name, tuple(layout.mapping[q] for q in inst.qubits))] += 1
    return counts


def _gaps(spans: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    gaps = []
    cursor = 0
    for s, e in spans:
        if s > cursor:
            gaps.append((cursor, s))
        cursor = max(cursor, e)
    return gaps


def idle_intervals(sched: ScheduledCircuit, qubit: int) -> list[IdleInterval]:
    """Gaps on ``qubit``'s wire between time 0 and the end of its last instruction."""
    return [IdleInterval((qubit,), s, e - s) for s, e in _gaps(sched.busy_spans(qubit))]


def mutual_idle_intervals(sched: ScheduledCircuit, q_i: int, q_j: int) -> list[IdleInterval]:
    a = _gaps(sched.busy_spans(q_i))
    b = _gaps(sched.busy_spans(q_j))
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            out.append(IdleInterval((q_i, q_j), lo, hi - lo))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out

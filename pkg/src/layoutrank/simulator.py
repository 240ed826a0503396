"""Trajectory statevector simulator standing in for hardware execution.

Qubit 0 is the most significant bit of a basis index, so the leftmost
character of a bitstring belongs to the lowest measured qubit.

Noise channels (each can be switched off through the device parameters):

* gate error: after every gate, a uniformly random non-identity Pauli on
  the gate's qubits with probability ``1 - f``;
* T1: amplitude damping over each idle interval, unravelled into quantum
  jumps with ``gamma = 1 - exp(-Gamma1 t)``;
* ZZ: the unitary ``exp(-i w dt ZZ / 2)`` over each mutual idle interval of
  a coupled pair;
* readout: a classical bit flip with probability ``1 - f(msmt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import MEASURE, Circuit, ScheduledCircuit, idle_intervals, mutual_idle_intervals
from .device import DeviceModel
from .layouts import Layout

WIDTH_BOUND = 12
DEFAULT_SHOTS = 4096
_STATE_BUDGET = 1 << 21     # amplitudes held per trajectory chunk
_DROP = 1e-14


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class BitstringDistribution:
    n: int
    probabilities: dict

    def __post_init__(self):
        if any(p < 0 for p in self.probabilities.values()):
            raise SimulationError("negative probability")
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-10:
            raise SimulationError(f"probabilities sum to {total}")
        if any(len(k) != self.n for k in self.probabilities):
            raise SimulationError("bitstring length does not match n")

    def to_dict(self) -> dict:
        return {"n": self.n, "probabilities": dict(sorted(self.probabilities.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "BitstringDistribution":
        return cls(int(d["n"]), {str(k): float(v) for k, v in d["probabilities"].items()})


@dataclass(frozen=True)
class ShotCounts:
    n: int
    counts: dict
    N_shots: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise SimulationError("negative count")
        if sum(self.counts.values()) != self.N_shots:
            raise SimulationError("counts do not sum to N_shots")

    def to_dict(self) -> dict:
        return {"n": self.n, "N_shots": self.N_shots, "counts": dict(sorted(self.counts.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "ShotCounts":
        return cls(int(d["n"]), {str(k): int(v) for k, v in d["counts"].items()}, int(d["N_shots"]))


def hellinger_fidelity(p: BitstringDistribution, counts: ShotCounts) -> float:
    """(sum_x sqrt(p(x) q(x)))^2 with q the empirical distribution."""
    if p.n != counts.n:
        raise SimulationError(f"width mismatch: {p.n} vs {counts.n}")
    if counts.N_shots <= 0:
        raise SimulationError("no shots")
    bc = sum(math.sqrt(p.probabilities.get(x, 0.0) * c / counts.N_shots) for x, c in counts.counts.items())
    return min(1.0, bc * bc)


# -- statevector kernels --------------------------------------------------------

_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class _Register:
    """A batch of B statevectors on n qubits, shape (B, 2^n)."""

    def __init__(self, n: int, batch: int):
        self.n = n
        self.dim = 1 << n
        self.psi = np.zeros((batch, self.dim), dtype=complex)
        self.psi[:, 0] = 1.0
        idx = np.arange(self.dim)
        self.bits = [((idx >> (n - 1 - q)) & 1).astype(bool) for q in range(n)]

    def view(self, q, rows=slice(None)):
        return self.psi[rows].reshape(-1, 1 << q, 2, 1 << (self.n - q - 1))

    def apply_1q(self, U, q, rows=slice(None)):
        out = np.einsum("ij,bajc->baic", U, self.view(q, rows))
        self.psi[rows] = out.reshape(-1, self.dim)

    def apply_2q(self, U, a, b, rows=slice(None)):
        """4x4 unitary on (a, b) with a as the more significant index bit."""
        t = self.psi[rows].reshape((-1,) + (2,) * self.n)
        t = np.moveaxis(t, (a + 1, b + 1), (1, 2))
        shape = t.shape
        t = (U @ t.reshape(shape[0], 4, -1)).reshape(shape)
        self.psi[rows] = np.moveaxis(t, (1, 2), (a + 1, b + 1)).reshape(-1, self.dim)

    def x(self, q, rows=slice(None)):
        v = self.view(q, rows)
        self.psi[rows] = v[:, :, ::-1, :].reshape(-1, self.dim)

    def rz(self, theta, q, rows=slice(None)):
        ph = np.where(self.bits[q], np.exp(0.5j * theta), np.exp(-0.5j * theta))
        self.psi[rows] = self.psi[rows] * ph

    def cx(self, c, t, rows=slice(None)):
        idx = np.arange(self.dim)
        perm = idx ^ (self.bits[c].astype(int) << (self.n - 1 - t))
        self.psi[rows] = self.psi[rows][:, perm]

    def zz(self, phi, a, b, rows=slice(None)):
        odd = self.bits[a] ^ self.bits[b]
        ph = np.where(odd, np.exp(0.5j * phi), np.exp(-0.5j * phi))
        self.psi[rows] = self.psi[rows] * ph

    def pop1(self, q) -> np.ndarray:
        return (np.abs(self.psi[:, self.bits[q]]) ** 2).sum(axis=1)

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.psi) ** 2
        return p / p.sum(axis=1, keepdims=True)


def _apply_gate(reg: _Register, name, qubits, params, rows=slice(None)):
    if name == "X":
        reg.x(qubits[0], rows)
    elif name == "SX":
        reg.apply_1q(_SX, qubits[0], rows)
    elif name == "RZ":
        reg.rz(params[0], qubits[0], rows)
    elif name == "CX":
        reg.cx(qubits[0], qubits[1], rows)
    else:
        raise SimulationError(f"cannot simulate {name!r}")


def _rx(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def statevector(circuit: Circuit) -> np.ndarray:
    """Final pure state of ``circuit`` with measurements ignored."""
    if circuit.n > WIDTH_BOUND:
        raise SimulationError(f"width {circuit.n} exceeds the statevector bound {WIDTH_BOUND}")
    reg = _Register(circuit.n, 1)
    for inst in circuit.instructions:
        if inst.name != MEASURE:
            _apply_gate(reg, inst.name, inst.qubits, inst.params)
    return reg.psi[0].copy()


def _marginal(probs: np.ndarray, n: int, measured: list[int]) -> dict:
    idx = np.arange(1 << n)
    keys = np.zeros(1 << n, dtype=np.int64)
    for q in measured:
        keys = (keys << 1) | ((idx >> (n - 1 - q)) & 1)
    m = len(measured)
    marg = np.bincount(keys, weights=probs, minlength=1 << m)
    return {format(k, f"0{m}b") if m else "": float(v) for k, v in enumerate(marg) if v > _DROP}


def _normalize(d: dict) -> dict:
    t = sum(d.values())
    return {k: v / t for k, v in d.items()}


def ideal_distribution(circuit: Circuit, check: bool = True) -> BitstringDistribution:
    """Noiseless distribution over the measured qubits (all qubits if none are measured).

    Deterministic circuits (``circuit.expected`` set) return their known
    one-hot outcome; the statevector cross-check runs when ``check`` is true.
    """
    measured = circuit.measured_qubits or list(range(circuit.n))
    if circuit.expected is not None:
        if len(circuit.expected) != len(measured):
            raise SimulationError("expected outcome length does not match measured qubits")
        if check and circuit.n <= WIDTH_BOUND:
            psi = statevector(circuit)
            p = _marginal(np.abs(psi) ** 2, circuit.n, measured).get(circuit.expected, 0.0)
            if abs(p - 1.0) > 1e-8:
                raise SimulationError(
                    f"deterministic circuit gives P({circuit.expected})={p:.6g} in statevector simulation")
        return BitstringDistribution(len(measured), {circuit.expected: 1.0})
    psi = statevector(circuit)
    return BitstringDistribution(len(measured), _normalize(_marginal(np.abs(psi) ** 2, circuit.n, measured)))


# -- noisy trajectories ------------------------------------------------------------

def _two_qubit_paulis():
    labels = [(a, b) for a in "IXYZ" for b in "IXYZ"]
    return [l for l in labels if l != ("I", "I")]


_PAULI2 = _two_qubit_paulis()


@dataclass(frozen=True)
class _Event:
    time: int
    order: int
    kind: str       # "gate" | "t1" | "zz"
    payload: tuple


def _events(sched: ScheduledCircuit, layout: Layout, device: DeviceModel) -> list[_Event]:
    circ = sched.circuit
    ev = []
    seq = 0
    for inst, t in zip(circ.instructions, sched.start_times):
        if inst.name != MEASURE:
            ev.append(_Event(t, seq, "gate", (inst,)))
            seq += 1
    gamma = device.gamma1
    used = circ.used_qubits
    for q in used:
        g = gamma[layout.mapping[q]]
        if g <= 0:
            continue
        for iv in idle_intervals(sched, q):
            ev.append(_Event(iv.start, seq, "t1", (q, -math.expm1(-g * iv.duration))))
            seq += 1
    for i, qi in enumerate(used):
        for qj in used[i + 1:]:
            pa, pb = layout.mapping[qi], layout.mapping[qj]
            if not device.has_edge(pa, pb):
                continue
            w = device.omega_zz(pa, pb)
            if w == 0:
                continue
            for iv in mutual_idle_intervals(sched, qi, qj):
                ev.append(_Event(iv.start, seq, "zz", (qi, qj, w * iv.duration)))
                seq += 1
    ev.sort(key=lambda e: (e.time, e.order))
    return ev


def _run_chunk(sched, layout, device, events, shots, rng, over_rotation):
    circ = sched.circuit
    reg = _Register(circ.n, shots)
    for e in events:
        if e.kind == "gate":
            inst = e.payload[0]
            _apply_gate(reg, inst.name, inst.qubits, inst.params)
            if over_rotation:
                _coherent_error(reg, inst, over_rotation)
            phys = tuple(layout.mapping[q] for q in inst.qubits)
            p_err = 1.0 - device.fidelity(inst.name, phys)
            if p_err <= 0:
                continue
            hit = np.nonzero(rng.random(shots) < p_err)[0]
            if hit.size == 0:
                continue
            if len(inst.qubits) == 1:
                choice = rng.integers(3, size=hit.size)
                for k, lab in enumerate("XYZ"):
                    rows = hit[choice == k]
                    if rows.size:
                        reg.apply_1q(_PAULI[lab], inst.qubits[0], rows)
            else:
                choice = rng.integers(15, size=hit.size)
                for k, (la, lb) in enumerate(_PAULI2):
                    rows = hit[choice == k]
                    if not rows.size:
                        continue
                    if la != "I":
                        reg.apply_1q(_PAULI[la], inst.qubits[0], rows)
                    if lb != "I":
                        reg.apply_1q(_PAULI[lb], inst.qubits[1], rows)
        elif e.kind == "t1":
            q, gam = e.payload
            p1 = reg.pop1(q)
            jump = rng.random(shots) < gam * p1
            # jump: |1> -> |0>; no jump: damp the |1> amplitude by sqrt(1 - gamma)
            sel = reg.bits[q]
            rows = np.nonzero(jump)[0]
            if rows.size:
                v = reg.view(q, rows)
                new = np.zeros_like(v)
                new[:, :, 0, :] = v[:, :, 1, :]
                reg.psi[rows] = new.reshape(-1, reg.dim)
            keep = np.nonzero(~jump)[0]
            if keep.size:
                block = reg.psi[keep]
                block[:, sel] *= math.sqrt(1.0 - gam)
                reg.psi[keep] = block
            reg.psi /= np.linalg.norm(reg.psi, axis=1, keepdims=True)
        else:
            qi, qj, phi = e.payload
            reg.zz(phi, qi, qj)
    probs = reg.probabilities()
    cum = np.cumsum(probs, axis=1)
    u = rng.random(shots)[:, None]
    outcome = np.minimum((cum < u).sum(axis=1), reg.dim - 1)
    measured = circ.measured_qubits or list(range(circ.n))
    bits = np.stack([(outcome >> (circ.n - 1 - q)) & 1 for q in measured], axis=1)
    flip_p = np.array([1.0 - device.msmt_fidelity[layout.mapping[q]] for q in measured])
    bits ^= (rng.random(bits.shape) < flip_p).astype(bits.dtype)
    return bits


def _coherent_error(reg: _Register, inst, strength: float):
    # systematic over-rotation proportional to the nominal rotation angle
    if inst.name == "X":
        reg.apply_1q(_rx(strength * math.pi), inst.qubits[0])
    elif inst.name == "SX":
        reg.apply_1q(_rx(strength * math.pi / 2), inst.qubits[0])
    elif inst.name == "CX":
        # exp(-i delta Z_c X_t / 2), the cross-resonance over-rotation
        delta = strength * math.pi / 2
        zx = np.kron(_PAULI["Z"], _PAULI["X"])
        U = math.cos(delta / 2) * np.eye(4) - 1j * math.sin(delta / 2) * zx
        reg.apply_2q(U, *inst.qubits)


def noisy_counts(sched: ScheduledCircuit, layout: Layout, device: DeviceModel,
                 N_shots: int = DEFAULT_SHOTS, seed=0, over_rotation: float = 0.0) -> ShotCounts:
    """Sample ``N_shots`` noisy trajectories, one shot each.

    ``seed`` may be an int or a sequence of ints (``numpy`` seed sequence
    entropy). Trajectory chunks draw from ``default_rng([*seed, chunk])``.
    """
    circ = sched.circuit
    if circ.n > WIDTH_BOUND:
        raise SimulationError(f"width {circ.n} exceeds the statevector bound {WIDTH_BOUND}")
    if layout.n != circ.n:
        raise SimulationError("layout width does not match circuit width")
    if N_shots < 1:
        raise SimulationError("N_shots must be positive")
    events = _events(sched, layout, device)
    base = [int(s) for s in np.atleast_1d(seed)]
    chunk = max(1, _STATE_BUDGET >> circ.n)
    all_bits = []
    for ci, start in enumerate(range(0, N_shots, chunk)):
        rng = np.random.default_rng(base + [ci])
        all_bits.append(_run_chunk(sched, layout, device, events, min(chunk, N_shots - start), rng, over_rotation))
    bits = np.concatenate(all_bits)
    m = bits.shape[1]
    keys = bits @ (1 << np.arange(m - 1, -1, -1)) if m else np.zeros(len(bits), dtype=int)
    vals, cnt = np.unique(keys, return_counts=True)
    counts = {format(int(k), f"0{m}b") if m else "": int(c) for k, c in zip(vals, cnt)}
    return ShotCounts(m, counts, N_shots)

"""Training ensemble: BV, inverse-QFT, Clifford-conjugated Pauli and QAOA circuits.

Every generator emits native gates only ({X, SX, RZ, CX, measure}). The
textbook gates are decomposed with fixed identities, all exact up to a global
phase:

    H = RZ(pi/2) SX RZ(pi/2),   S = RZ(pi/2),   Z = RZ(pi),   Y ~ X Z
    RX(t) = H RZ(t) H,          SWAP = CX(a,b) CX(b,a) CX(a,b)
    CP(t) = RZ(t/2)_a RZ(t/2)_b CX(a,b) RZ(-t/2)_b CX(a,b)
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .circuit import MEASURE, Circuit, CircuitBuilder, CircuitError, Instruction
from .device import DeviceModel
from .layouts import random_connected_subgraph

ALGORITHMS = ("CCP", "BV", "QAOA", "IQFT")
DEFAULT_PROPORTIONS = {"CCP": 0.81, "BV": 0.09, "QAOA": 0.06, "IQFT": 0.04}
HALF_PI = math.pi / 2


class EnsembleError(ValueError):
    pass


# -- native decompositions ------------------------------------------------------

def _h(b: CircuitBuilder, q):
    b.rz(HALF_PI, q).sx(q).rz(HALF_PI, q)


def _rx(b: CircuitBuilder, theta, q):
    b.rz(HALF_PI, q).sx(q).rz(theta + math.pi, q).sx(q).rz(HALF_PI, q)


def _pauli(b: CircuitBuilder, label, q):
    if label == "X":
        b.x(q)
    elif label == "Z":
        b.rz(math.pi, q)
    elif label == "Y":
        b.rz(math.pi, q).x(q)


def inverse(insts) -> list[Instruction]:
    """Gate-wise inverse up to global phase (SX^-1 = RZ(pi) SX RZ(pi))."""
    out = []
    for inst in reversed(list(insts)):
        if inst.name == MEASURE:
            raise CircuitError("cannot invert a measurement")
        if inst.name == "RZ":
            out.append(Instruction("RZ", inst.qubits, (-inst.params[0],)))
        elif inst.name == "SX":
            q = inst.qubits
            out += [Instruction("RZ", q, (math.pi,)), Instruction("SX", q), Instruction("RZ", q, (math.pi,))]
        else:
            out.append(inst)
    return out


def merge_rz(insts) -> list[Instruction]:
    """Fuse consecutive RZ gates on a qubit and drop those that vanish mod 2 pi."""
    out: list[Instruction] = []
    last: dict[int, int] = {}   # qubit -> index in out of its latest instruction
    for inst in insts:
        if inst.name == "RZ":
            q = inst.qubits[0]
            j = last.get(q)
            if j is not None and out[j] is not None and out[j].name == "RZ":
                out[j] = Instruction("RZ", (q,), (out[j].params[0] + inst.params[0],))
                continue
        for q in inst.qubits:
            last[q] = len(out)
        out.append(inst)
    kept = []
    for inst in out:
        if inst.name == "RZ":
            t = math.remainder(inst.params[0], 2 * math.pi)
            if abs(t) < 1e-12:
                continue
            inst = Instruction("RZ", inst.qubits, (t,))
        kept.append(inst)
    return kept


# -- Bernstein-Vazirani ------------------------------------------------------

def _parity_chain(path, ones) -> list[tuple[int, int]]:
    """CX list adding the parity of ``ones`` into ``path[-1]`` through the path's nearest neighbors.

    A zero-bit vertex is crossed by first adding its value to its successor;
    the main sweep then adds it a second time, so only the running parity of
    the 1-bits travels on.
    """
    k = len(path) - 1
    pre = [(path[t], path[t + 1]) for t in reversed(range(k)) if path[t] not in ones]
    return pre + [(path[t], path[t + 1]) for t in range(k)]


def bernstein_vazirani(secret: str) -> Circuit:
    """BV on ``len(secret)`` data qubits plus a trailing ancilla.

    The parity oracle runs along the path (first 1-bit, other data qubits
    ascending, ancilla), so the interaction graph is a path. Only the data
    qubits are measured and the ideal outcome is ``secret`` itself; an
    all-zero secret leaves just the Hadamard pairs.
    """
    if not secret or set(secret) - {"0", "1"}:
        raise EnsembleError(f"secret must be a non-empty bitstring, got {secret!r}")
    m = len(secret)
    anc = m
    b = CircuitBuilder(m + 1, label="BV")
    b.x(anc)
    for q in range(m + 1):
        _h(b, q)
    ones = {i for i, c in enumerate(secret) if c == "1"}
    if ones:
        first = min(ones)
        path = [first] + [i for i in range(m) if i != first] + [anc]
        ops = _parity_chain(path, ones)
        # undo the data-only part to restore the data register
        ops += [op for op in reversed(ops) if op[1] != anc]
        for c, t in ops:
            b.cx(c, t)
    for q in range(m):
        _h(b, q)
        b.measure(q)
    return Circuit(b.n, tuple(merge_rz(b.build().instructions)), "BV", secret)


# -- inverse QFT ------------------------------------------------------------------

def qft_line(n: int) -> list[Instruction]:
    """QFT on a line of qubits (qubit 0 most significant) using a CP+SWAP bubble network.

    The network's swaps reverse the qubit order, which cancels the usual bit
    reversal of the QFT, so this is the exact QFT with nearest-neighbor CX only.
    """
    b = CircuitBuilder(n)
    # pos[p] = logical qubit currently at line position p
    pos = list(range(n))
    for j in range(n):
        p = pos.index(j)
        _h(b, p)
        for k in range(j + 1, n):
            # logical j at p meets logical k at p+1: CP(pi/2^(k-j)) then SWAP, fused into 3 CX
            assert pos[p + 1] == k
            t = math.pi / 2 ** (k - j)
            a, c = p, p + 1
            b.rz(t / 2, a).rz(t / 2, c).cx(a, c).rz(-t / 2, c).cx(c, a).cx(a, c)
            pos[p], pos[p + 1] = pos[p + 1], pos[p]
            p += 1
    return list(b.build().instructions)


def inverse_qft_onehot(n: int, seed=0, target: int | None = None) -> Circuit:
    """Fourier basis state of a seeded target k followed by the inverse QFT; ideal output is k."""
    if n < 2:
        raise EnsembleError("inverse QFT needs n >= 2")
    if target is None:
        target = int(np.random.default_rng(seed).integers(1 << n))
    if not 0 <= target < 1 << n:
        raise EnsembleError(f"target {target} outside [0, 2^{n})")
    b = CircuitBuilder(n, label="IQFT")
    for j in range(n):
        # H then RZ(2 pi k / 2^(j+1)) prepares (|0> + e^{i phi}|1>)/sqrt 2
        _h(b, j)
        b.rz(2 * math.pi * target / 2 ** (j + 1), j)
    b.extend(inverse(qft_line(n)))
    for q in range(n):
        b.measure(q)
    return Circuit(n, tuple(merge_rz(b.build().instructions)), "IQFT", format(target, f"0{n}b"))


# -- Clifford-conjugated Pauli (mirror) circuits ------------------------------------

def _line_edges(n):
    return [(i, i + 1) for i in range(n - 1)]


def _spanning_tree(n, edges, rng) -> list[tuple[int, int]]:
    adj = {v: set() for v in range(n)}
    for a, c in edges:
        adj[a].add(c)
        adj[c].add(a)
    start = int(rng.integers(n))
    seen, tree, frontier = {start}, [], [start]
    while frontier:
        v = frontier.pop(int(rng.integers(len(frontier))))
        for w in sorted(adj[v]):
            if w not in seen:
                seen.add(w)
                tree.append((v, w))
                frontier.append(w)
    if len(seen) != n:
        raise EnsembleError("allowed edges do not connect all qubits")
    return tree


def _propagate(gates, x: np.ndarray, z: np.ndarray):
    """Conjugate a Pauli (x, z bit vectors) by the inverse of the gate list: P -> C^dag P C."""
    x, z = x.copy(), z.copy()
    for g, qs in reversed(gates):
        if g == "H":
            q = qs[0]
            x[q], z[q] = z[q], x[q]
        elif g == "S":
            z[qs[0]] ^= x[qs[0]]
        else:
            c, t = qs
            x[t] ^= x[c]
            z[c] ^= z[t]
    return x, z


def clifford_conjugated_pauli(n: int, depth: int, seed=0, edges=None,
                              paulis: str | None = None, connect: bool = True) -> Circuit:
    """C^dag (P_1 x ... x P_n) C on |0...0>, with C a random {H, S, CX} sequence.

    ``edges`` restricts where CX may act (default: a line). With ``connect``
    the sequence ends with CX gates along a random spanning tree of the
    allowed edges so the interaction graph is connected. The ideal output is
    the X-part of C^dag P C, obtained by Pauli-frame propagation.
    """
    if n < 2:
        raise EnsembleError("CCP needs n >= 2")
    if depth < 1:
        raise EnsembleError("CCP depth must be >= 1")
    rng = np.random.default_rng(seed)
    edges = sorted(tuple(sorted(e)) for e in (edges if edges is not None else _line_edges(n)))
    if not edges:
        raise EnsembleError("CCP needs at least one allowed edge")
    gates = []
    for _ in range(depth):
        kind = int(rng.integers(3))
        if kind == 0:
            gates.append(("H", (int(rng.integers(n)),)))
        elif kind == 1:
            gates.append(("S", (int(rng.integers(n)),)))
        else:
            a, c = edges[int(rng.integers(len(edges)))]
            gates.append(("CX", (a, c) if rng.random() < 0.5 else (c, a)))
    if connect:
        gates += [("CX", e) for e in _spanning_tree(n, edges, rng)]
    if paulis is None:
        paulis = "".join("IXYZ"[int(k)] for k in rng.integers(4, size=n))
    if len(paulis) != n or set(paulis) - set("IXYZ"):
        raise EnsembleError(f"bad Pauli string {paulis!r}")
    fwd = CircuitBuilder(n)
    for g, qs in gates:
        if g == "H":
            _h(fwd, qs[0])
        elif g == "S":
            fwd.rz(HALF_PI, qs[0])
        else:
            fwd.cx(*qs)
    c_insts = list(fwd.build().instructions)
    b = CircuitBuilder(n, label="CCP")
    b.extend(c_insts)
    for q, p in enumerate(paulis):
        _pauli(b, p, q)
    b.extend(inverse(c_insts))
    for q in range(n):
        b.measure(q)
    px = np.array([p in "XY" for p in paulis], dtype=bool)
    pz = np.array([p in "YZ" for p in paulis], dtype=bool)
    x, _ = _propagate(gates, px, pz)
    expected = "".join("1" if v else "0" for v in x)
    return Circuit(n, tuple(merge_rz(b.build().instructions)), "CCP", expected)


# -- QAOA ----------------------------------------------------------------------------

def qaoa(n: int, graph_density: float = 0.5, p_layers: int = 1, seed=0, edges=None,
         gammas=None, betas=None) -> Circuit:
    """MaxCut QAOA on a seeded random graph.

    The problem graph keeps a random spanning tree of the candidate edges
    (all pairs by default) and each other candidate with ``graph_density``.
    Angles default to uniform draws in [0, pi).
    """
    if n < 2:
        raise EnsembleError("QAOA needs n >= 2")
    if p_layers < 0:
        raise EnsembleError("p_layers must be >= 0")
    rng = np.random.default_rng(seed)
    cand = sorted(tuple(sorted(e)) for e in edges) if edges is not None else \
        [(a, c) for a in range(n) for c in range(a + 1, n)]
    tree = {tuple(sorted(e)) for e in _spanning_tree(n, cand, rng)}
    graph = sorted(e for e in cand if e in tree or rng.random() < graph_density)
    if gammas is None:
        gammas = rng.uniform(0, math.pi, p_layers)
    if betas is None:
        betas = rng.uniform(0, math.pi, p_layers)
    if len(gammas) != p_layers or len(betas) != p_layers:
        raise EnsembleError("need one (gamma, beta) pair per layer")
    b = CircuitBuilder(n, label="QAOA")
    for q in range(n):
        _h(b, q)
    for gm, bt in zip(gammas, betas):
        for a, c in graph:
            # exp(-i gamma Z_a Z_c)
            b.cx(a, c).rz(2 * gm, c).cx(a, c)
        for q in range(n):
            _rx(b, 2 * bt, q)
    for q in range(n):
        b.measure(q)
    return Circuit(n, tuple(merge_rz(b.build().instructions)), "QAOA")


# -- ensembles ----------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleConfig:
    proportions: dict = field(default_factory=lambda: dict(DEFAULT_PROPORTIONS))
    widths: tuple = (3, 6)
    count: int = 100
    seed: int = 0
    qaoa_layers: int = 1
    qaoa_density: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        unknown = set(self.proportions) - set(ALGORITHMS)
        if unknown:
            raise EnsembleError(f"unknown algorithms {sorted(unknown)}")
        if any(v < 0 for v in self.proportions.values()):
            raise EnsembleError("negative proportion")
        if abs(sum(self.proportions.values()) - 1.0) > 1e-9:
            raise EnsembleError(f"proportions sum to {sum(self.proportions.values())}, not 1")
        lo, hi = self.widths
        if lo < 2 or hi < lo:
            raise EnsembleError(f"widths must satisfy 2 <= low <= high, got {self.widths}")
        if self.count < 0:
            raise EnsembleError("count must be >= 0")

    def per_algorithm(self) -> dict:
        """Largest-remainder apportionment of ``count`` to the algorithms."""
        raw = {a: self.proportions.get(a, 0.0) * self.count for a in ALGORITHMS}
        n = {a: int(math.floor(v + 1e-9)) for a, v in raw.items()}
        left = self.count - sum(n.values())
        for a in sorted(ALGORITHMS, key=lambda a: (-(raw[a] - n[a]), ALGORITHMS.index(a)))[:left]:
            n[a] += 1
        return n

    def to_dict(self) -> dict:
        return {"proportions": dict(self.proportions), "widths": list(self.widths), "count": self.count,
                "seed": self.seed, "qaoa_layers": self.qaoa_layers, "qaoa_density": self.qaoa_density}

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        return cls(**{k: d[k] for k in ("proportions", "widths", "count", "seed", "qaoa_layers",
                                        "qaoa_density") if k in d})


def sample_ensemble(config: EnsembleConfig, device: DeviceModel) -> list[Circuit]:
    lo, hi = config.widths
    if hi > device.Q:
        raise EnsembleError(f"width {hi} exceeds the {device.Q}-qubit device")
    out = []
    idx = 0
    for alg, k in config.per_algorithm().items():
        for _ in range(k):
            rng = np.random.default_rng([config.seed, idx])
            idx += 1
            n = int(rng.integers(lo, hi + 1))
            sub = int(rng.integers(2**63))
            if alg == "BV":
                secret = "".join(str(int(v)) for v in rng.integers(2, size=n - 1))
                out.append(bernstein_vazirani(secret))
            elif alg == "IQFT":
                out.append(inverse_qft_onehot(n, seed=sub))
            elif alg == "CCP":
                cg = random_connected_subgraph(device, n, rng)
                depth = int(rng.integers(n, 5 * n + 1))
                out.append(clifford_conjugated_pauli(n, depth, seed=sub, edges=sorted(cg.edges)))
            else:
                cg = random_connected_subgraph(device, n, rng)
                out.append(qaoa(n, config.qaoa_density, config.qaoa_layers, seed=sub, edges=sorted(cg.edges)))
    order = np.random.default_rng([config.seed, idx]).permutation(len(out))
    return [out[i] for i in order]


def composition(circuits) -> dict:
    return dict(sorted(Counter(c.label for c in circuits).items()))

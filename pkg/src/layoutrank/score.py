"""Phenomenological circuit score and the static Mapomatic baseline.

The score is a product of four mechanism terms, each raised to a power:

    S = S_gate^p_gate * S_msmt^p_msmt * S_T1^p_T1 * S_ZZ^p_ZZ

The powers live on the positive octant of the unit 3-sphere (Hopf
coordinates), which removes the overall-scale redundancy of the ranking.
All batch computations accept either floats or :class:`~layoutrank.dual.Dual`
values so the trainer can differentiate through them.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import dual
from .circuit import MEASURE, Circuit, ScheduledCircuit, gate_counts, idle_intervals, mutual_idle_intervals, schedule
from .device import DeviceModel
from .layouts import Layout

FORMAT_VERSION = 1
HAAR_A = 1.0 / 3.0
HAAR_B = 1.0 / 6.0
HAAR_C = 2.0 / 3.0
SHARING_MODES = ("per-qubit", "gate-name")
HALF_PI = math.pi / 2


class ScoreParamsError(ValueError):
    pass


def gate_param_key(calibration_key: tuple, sharing: str = "per-qubit") -> str:
    name, qubits = calibration_key
    if sharing == "gate-name":
        return name
    return f"{name}:{','.join(str(q) for q in qubits)}"


@dataclass
class ScoreParams:
    lambda_gate: dict = field(default_factory=dict)
    lambda_msmt: dict = field(default_factory=dict)
    a: float = HAAR_A
    b: float = HAAR_B
    c: float = HAAR_C
    xi1: float = math.pi / 4
    xi2: float = math.pi / 4
    eta: float = math.pi / 4
    sharing: str = "per-qubit"

    def __post_init__(self):
        self.lambda_msmt = {int(k): float(v) for k, v in self.lambda_msmt.items()}
        self.lambda_gate = {str(k): float(v) for k, v in self.lambda_gate.items()}
        self.validate()

    def validate(self):
        if self.sharing not in SHARING_MODES:
            raise ScoreParamsError(f"unknown sharing mode {self.sharing!r}")
        if any(v < 0 for v in self.lambda_gate.values()) or any(v < 0 for v in self.lambda_msmt.values()):
            raise ScoreParamsError("lambda exponents must be non-negative")
        if self.a < 0 or self.b < 0 or self.a + self.b > 1 + 1e-12:
            raise ScoreParamsError(f"need a, b >= 0 and a + b <= 1 (a={self.a}, b={self.b})")
        if not 0 <= self.c <= 1:
            raise ScoreParamsError(f"c={self.c} outside [0, 1]")
        for nm in ("xi1", "xi2", "eta"):
            if not 0 <= getattr(self, nm) <= HALF_PI + 1e-12:
                raise ScoreParamsError(f"{nm} outside [0, pi/2]")

    @classmethod
    def initial(cls, device: DeviceModel | None = None, sharing: str = "per-qubit") -> "ScoreParams":
        """Backend/Haar initialisation: lambda = 1, a = 1/3, b = 1/6, c = 2/3, angles pi/4."""
        lg, lm = {}, {}
        if device is not None:
            lg = {gate_param_key(k, sharing): 1.0 for k in sorted(device.gate_fidelity)}
            lm = {q: 1.0 for q in range(device.Q)}
        return cls(lambda_gate=lg, lambda_msmt=lm, sharing=sharing)

    def lam_gate(self, key: str) -> float:
        return self.lambda_gate.get(key, 1.0)

    def lam_msmt(self, q: int) -> float:
        return self.lambda_msmt.get(q, 1.0)

    @property
    def powers(self) -> tuple[float, float, float, float]:
        return hopf_powers(self.xi1, self.xi2, self.eta)

    # flat checkpoint format
    def to_dict(self) -> dict:
        d = {"format_version": FORMAT_VERSION, "sharing": self.sharing,
             "a": self.a, "b": self.b, "c": self.c,
             "xi1": self.xi1, "xi2": self.xi2, "eta": self.eta}
        for k in sorted(self.lambda_gate):
            d[f"lambda_gate[{k}]"] = self.lambda_gate[k]
        for q in sorted(self.lambda_msmt):
            d[f"lambda_msmt[{q}]"] = self.lambda_msmt[q]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreParams":
        if d.get("format_version") != FORMAT_VERSION:
            raise ScoreParamsError(f"unsupported checkpoint format {d.get('format_version')!r}")
        lg, lm = {}, {}
        for k, v in d.items():
            if k.startswith("lambda_gate["):
                lg[k[len("lambda_gate["):-1]] = v
            elif k.startswith("lambda_msmt["):
                lm[int(k[len("lambda_msmt["):-1])] = v
        return cls(lambda_gate=lg, lambda_msmt=lm, sharing=d.get("sharing", "per-qubit"),
                   **{k: float(d[k]) for k in ("a", "b", "c", "xi1", "xi2", "eta")})

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ScoreParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ScoreBreakdown:
    s_gate: float
    s_msmt: float
    s_t1: float
    s_zz: float
    powers: tuple
    total: float

    def to_dict(self) -> dict:
        return {"s_gate": self.s_gate, "s_msmt": self.s_msmt, "s_t1": self.s_t1,
                "s_zz": self.s_zz, "powers": list(self.powers), "total": self.total}


def hopf_powers(xi1, xi2, eta):
    """(p_gate, p_msmt, p_T1, p_ZZ) on the positive octant of the unit 3-sphere."""
    for nm, v in (("xi1", xi1), ("xi2", xi2), ("eta", eta)):
        val = dual.value(v)
        if not isinstance(v, dual.Dual) and not -1e-12 <= val <= HALF_PI + 1e-12:
            raise ScoreParamsError(f"{nm}={val} outside [0, pi/2]")
    se, ce = dual.sin(eta), dual.cos(eta)
    return (dual.cos(xi1) * se, dual.sin(xi1) * se, dual.cos(xi2) * ce, dual.sin(xi2) * ce)


def f_t1(t, gamma1, a, b):
    """Haar-averaged idle fidelity under amplitude damping for a duration t (ns)."""
    x = gamma1 * np.asarray(t, dtype=float)
    return (1.0 - a - b) + a * np.exp(-x / 2) + b * np.exp(-x)


def f_zz(delta_t, omega_zz, c):
    """Haar-averaged fidelity of a mutual idle period under ZZ coupling."""
    phi = omega_zz * np.asarray(delta_t, dtype=float)
    return 1.0 - c * np.sin(phi / 2) ** 2


# -- per-layout features ------------------------------------------------------

@dataclass
class LayoutFeatures:
    """Parameter-independent quantities that the score consumes for one layout."""

    gate_terms: dict      # lambda key -> sum of n(C;g) * log f_t(g)
    msmt_terms: dict      # physical qubit -> n(C;msmt) * log f(msmt)
    t1_x: np.ndarray      # Gamma1 * t per idle interval
    zz_s2: np.ndarray     # sin^2(omega * dt / 2) per mutual idle interval
    log_mapomatic: float


def _count_terms(circuit, layout, device, sharing):
    gate_terms: dict = defaultdict(float)
    msmt_terms: dict = defaultdict(float)
    log_mm = 0.0
    for (name, phys), n in sorted(gate_counts(circuit, layout).items()):
        if name == MEASURE:
            lf = math.log(device.msmt_fidelity[phys[0]])
            msmt_terms[phys[0]] += n * lf
        else:
            ck = device.calibration_key(name, phys)
            lf = math.log(device.gate_fidelity[ck])
            gate_terms[gate_param_key(ck, sharing)] += n * lf
        log_mm += n * lf
    return dict(gate_terms), dict(msmt_terms), log_mm


def layout_features(circuit: Circuit, layout: Layout, device: DeviceModel,
                    sched: ScheduledCircuit | None = None, sharing: str = "per-qubit") -> LayoutFeatures:
    if sched is None:
        sched = schedule(circuit, device, layout)
    gate_terms, msmt_terms, log_mm = _count_terms(circuit, layout, device, sharing)
    gamma = device.gamma1
    used = circuit.used_qubits
    t1_x = [gamma[layout.mapping[q]] * iv.duration for q in used for iv in idle_intervals(sched, q)]
    zz = []
    for ii, qi in enumerate(used):
        for qj in used[ii + 1:]:
            pi_, pj = layout.mapping[qi], layout.mapping[qj]
            if not device.has_edge(pi_, pj):
                continue
            w = device.omega_zz(pi_, pj)
            zz.extend(math.sin(w * iv.duration / 2) ** 2 for iv in mutual_idle_intervals(sched, qi, qj))
    return LayoutFeatures(gate_terms, msmt_terms, np.array(t1_x, dtype=float),
                          np.array(zz, dtype=float), log_mm)


class ParamSpace:
    """Fixed ordering of the lambda keys so parameters can be packed in arrays."""

    def __init__(self, gate_keys, msmt_qubits, sharing="per-qubit"):
        self.gate_keys = list(gate_keys)
        self.msmt_qubits = [int(q) for q in msmt_qubits]
        self.sharing = sharing
        self._gi = {k: i for i, k in enumerate(self.gate_keys)}
        self._mi = {q: i for i, q in enumerate(self.msmt_qubits)}

    @classmethod
    def for_devices(cls, devices, sharing="per-qubit") -> "ParamSpace":
        gk, mq = set(), set()
        for d in devices:
            gk.update(gate_param_key(k, sharing) for k in d.gate_fidelity)
            mq.update(range(d.Q))
        return cls(sorted(gk), sorted(mq), sharing)

    @property
    def n_gate(self):
        return len(self.gate_keys)

    @property
    def n_msmt(self):
        return len(self.msmt_qubits)

    def lambdas(self, params: ScoreParams):
        return (np.array([params.lam_gate(k) for k in self.gate_keys]),
                np.array([params.lam_msmt(q) for q in self.msmt_qubits]))

    def to_params(self, lam_gate, lam_msmt, a, b, c, xi1, xi2, eta) -> ScoreParams:
        return ScoreParams(
            lambda_gate={k: float(v) for k, v in zip(self.gate_keys, lam_gate)},
            lambda_msmt={q: float(v) for q, v in zip(self.msmt_qubits, lam_msmt)},
            a=float(a), b=float(b), c=float(c), xi1=float(xi1), xi2=float(xi2), eta=float(eta),
            sharing=self.sharing,
        )


@dataclass
class BatchFeatures:
    """Feature matrices of one layout batch, packed against a ParamSpace."""

    gate: np.ndarray       # (L, K)
    msmt: np.ndarray       # (L, Q)
    t1_e1: np.ndarray      # (J,) 1 - exp(-x/2)
    t1_e2: np.ndarray      # (J,) 1 - exp(-x)
    t1_seg: np.ndarray     # (L, J) 0/1 membership
    zz_s2: np.ndarray      # (M,)
    zz_seg: np.ndarray     # (L, M)
    log_mapomatic: np.ndarray  # (L,)

    @property
    def L(self):
        return self.gate.shape[0]

    @classmethod
    def pack(cls, feats: list[LayoutFeatures], space: ParamSpace) -> "BatchFeatures":
        L = len(feats)
        G = np.zeros((L, space.n_gate))
        M = np.zeros((L, space.n_msmt))
        for i, f in enumerate(feats):
            for k, v in f.gate_terms.items():
                G[i, space._gi[k]] += v
            for q, v in f.msmt_terms.items():
                M[i, space._mi[q]] += v
        x = np.concatenate([f.t1_x for f in feats]) if L else np.zeros(0)
        s2 = np.concatenate([f.zz_s2 for f in feats]) if L else np.zeros(0)
        return cls(
            gate=G, msmt=M,
            t1_e1=-np.expm1(-x / 2), t1_e2=-np.expm1(-x), t1_seg=_segments([len(f.t1_x) for f in feats]),
            zz_s2=s2, zz_seg=_segments([len(f.zz_s2) for f in feats]),
            log_mapomatic=np.array([f.log_mapomatic for f in feats]),
        )


def _segments(lengths) -> np.ndarray:
    seg = np.zeros((len(lengths), int(sum(lengths))))
    start = 0
    for i, n in enumerate(lengths):
        seg[i, start:start + n] = 1.0
        start += n
    return seg


def batch_log_components(bf: BatchFeatures, lam_gate, lam_msmt, a, b, c):
    """log S_gate, log S_msmt, log S_T1, log S_ZZ for every layout (floats or Duals)."""
    lg = bf.gate @ lam_gate
    lm = bf.msmt @ lam_msmt
    lt = bf.t1_seg @ dual.log(1.0 - a * bf.t1_e1 - b * bf.t1_e2) if bf.t1_e1.size else np.zeros(bf.L)
    lz = bf.zz_seg @ dual.log(1.0 - c * bf.zz_s2) if bf.zz_s2.size else np.zeros(bf.L)
    return lg, lm, lt, lz


def batch_log_scores(bf: BatchFeatures, lam_gate, lam_msmt, a, b, c, xi1, xi2, eta):
    p = hopf_powers(xi1, xi2, eta)
    comps = batch_log_components(bf, lam_gate, lam_msmt, a, b, c)
    total = None
    for pk, ck in zip(p, comps):
        term = pk * ck
        total = term if total is None else total + term
    return total


def params_log_scores(bf: BatchFeatures, space: ParamSpace, params: ScoreParams) -> np.ndarray:
    lg, lm = space.lambdas(params)
    return np.asarray(batch_log_scores(bf, lg, lm, params.a, params.b, params.c,
                                       params.xi1, params.xi2, params.eta), dtype=float)


# -- per-circuit API ------------------------------------------------------------

def _lin(terms: dict, lam) -> float:
    return float(math.exp(sum(lam(k) * v for k, v in terms.items())))


def s_gate(circuit, layout, device, params: ScoreParams) -> float:
    """Product of f_t(g)^(lambda(g) n(C;g)) over the gate operations."""
    return _lin(_count_terms(circuit, layout, device, params.sharing)[0], params.lam_gate)


def s_msmt(circuit, layout, device, params: ScoreParams) -> float:
    return _lin(_count_terms(circuit, layout, device, params.sharing)[1], params.lam_msmt)


def s_t1(sched: ScheduledCircuit, layout, device, params: ScoreParams) -> float:
    gamma = device.gamma1
    out = 1.0
    for q in sched.circuit.used_qubits:
        for iv in idle_intervals(sched, q):
            out *= float(f_t1(iv.duration, gamma[layout.mapping[q]], params.a, params.b))
    return out


def s_zz(sched: ScheduledCircuit, layout, device, params: ScoreParams) -> float:
    used = sched.circuit.used_qubits
    out = 1.0
    for ii, qi in enumerate(used):
        for qj in used[ii + 1:]:
            pi_, pj = layout.mapping[qi], layout.mapping[qj]
            if not device.has_edge(pi_, pj):
                continue
            w = device.omega_zz(pi_, pj)
            for iv in mutual_idle_intervals(sched, qi, qj):
                out *= float(f_zz(iv.duration, w, params.c))
    return out


def total_score(circuit, layout, device, params: ScoreParams,
                sched: ScheduledCircuit | None = None) -> ScoreBreakdown:
    if sched is None:
        sched = schedule(circuit, device, layout)
    comps = (s_gate(circuit, layout, device, params), s_msmt(circuit, layout, device, params),
             s_t1(sched, layout, device, params), s_zz(sched, layout, device, params))
    powers = tuple(float(p) for p in params.powers)
    total = 1.0
    for s, p in zip(comps, powers):
        total *= s ** p
    return ScoreBreakdown(*comps, powers=powers, total=total)


def mapomatic_score(circuit, layout, device) -> float:
    """Product of raw backend gate and measurement fidelities over the circuit."""
    out = 1.0
    for (name, phys), n in gate_counts(circuit, layout).items():
        out *= device.fidelity(name, phys) ** n
    return out

"""Independent numerical oracles for the model's constants and machinery.

Each check returns a :class:`Check` with the measured and expected value,
so failures say what went wrong rather than only that something did.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import losses as L
from . import score
from .layouts import ConnectivityGraph, brute_force_layouts, iter_monomorphisms
from .score import BatchFeatures, ParamSpace, ScoreParams
from .trainer import Reparam, finite_difference, gradient, relative_gradient_error, stencil_is_smooth


@dataclass
class Check:
    name: str
    passed: bool
    measured: object
    expected: object
    tolerance: float
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def haar_states(rng: np.random.Generator, n: int, dim: int = 2) -> np.ndarray:
    """Haar-random pure states as normalized complex Gaussian vectors, shape (n, dim)."""
    z = rng.normal(size=(n, dim)) + 1j * rng.normal(size=(n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _amplitude_damping_fidelity(psi: np.ndarray, gamma: float) -> np.ndarray:
    """<psi| E(|psi><psi|) |psi> with Kraus operators K0 = diag(1, sqrt(1-g)), K1 = sqrt(g)|0><1|."""
    K0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    K1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    rho = psi[:, :, None] * psi.conj()[:, None, :]
    out = K0 @ rho @ K0.conj().T + K1 @ rho @ K1.conj().T
    return np.einsum("ni,nij,nj->n", psi.conj(), out, psi, optimize=True).real


def haar_t1_constants(n_samples: int = 10**6, seed: int = 0, xs=(0.1, 0.5, 1.0, 2.0, 4.0)) -> tuple[float, float]:
    """Least-squares (a, b) in F(x) - 1 = a (e^{-x/2} - 1) + b (e^{-x} - 1) from Haar averages."""
    psi = haar_states(np.random.default_rng(seed), n_samples)
    F = np.array([_amplitude_damping_fidelity(psi, -math.expm1(-x)).mean() for x in xs])
    A = np.array([[math.exp(-x / 2) - 1, math.exp(-x) - 1] for x in xs])
    (a, b), *_ = np.linalg.lstsq(A, F - 1, rcond=None)
    return float(a), float(b)


def haar_zz_constant(n_samples: int = 10**6, seed: int = 1, phis=(0.3, 1.0, 2.0, math.pi)) -> float:
    """Least-squares c in F(phi) = 1 - c sin^2(phi/2) with F = |<psi|Rz(phi)|psi>|^2."""
    psi = haar_states(np.random.default_rng(seed), n_samples)
    p0, p1 = np.abs(psi[:, 0]) ** 2, np.abs(psi[:, 1]) ** 2
    F = np.array([np.abs(p0 * np.exp(-0.5j * ph) + p1 * np.exp(0.5j * ph)).__pow__(2).mean() for ph in phis])
    s2 = np.array([math.sin(ph / 2) ** 2 for ph in phis])
    return float((s2 @ (1 - F)) / (s2 @ s2))


def check_haar(n_samples: int = 10**6, tol: float = 2e-3, seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    a, b = haar_t1_constants(n_samples, seed)
    t1 = time.perf_counter()
    c = haar_zz_constant(n_samples, seed + 1)
    t2 = time.perf_counter()
    # read the constants at call time so a patched module value is what gets checked
    return [
        Check("haar_a", abs(a - score.HAAR_A) <= tol, a, score.HAAR_A, tol, t1 - t0),
        Check("haar_b", abs(b - score.HAAR_B) <= tol, b, score.HAAR_B, tol, t1 - t0),
        Check("haar_c", abs(c - score.HAAR_C) <= tol, c, score.HAAR_C, tol, t2 - t1),
    ]


# -- gradient checks -------------------------------------------------------------

DEFAULT_LOSSES = (
    L.LossConfig("score-mse"),
    L.LossConfig("nll-topk", K=1), L.LossConfig("nll-topk", K=2), L.LossConfig("nll-topk", K=3),
    L.LossConfig("pearson"),
    L.LossConfig("soft-spearman"),
    L.LossConfig("rank-mse", d=1), L.LossConfig("rank-mse", d=2), L.LossConfig("rank-mse", d=3),
    L.LossConfig("pairwise-bce"),
)


def random_batch(rng: np.random.Generator, L_: int, n_gate: int = 6, n_msmt: int = 4):
    """Synthetic packed features of one batch plus distinct fidelities in (0.3, 1)."""
    counts = rng.integers(0, 4, size=(L_, n_gate))
    gate = counts * np.log(1 - rng.uniform(1e-3, 3e-2, size=n_gate))
    msmt = (rng.random((L_, n_msmt)) < 0.7) * np.log(1 - rng.uniform(1e-2, 5e-2, size=n_msmt))
    n_idle = rng.integers(1, 6, size=L_)
    x = rng.uniform(0.0, 0.3, size=int(n_idle.sum()))
    n_zz = rng.integers(0, 4, size=L_)
    feats = [
        score.LayoutFeatures({}, {}, x[int(n_idle[:i].sum()):int(n_idle[:i + 1].sum())],
                             rng.uniform(0, 0.2, size=int(n_zz[i])), 0.0)
        for i in range(L_)
    ]
    space = ParamSpace([f"g{k}" for k in range(n_gate)], list(range(n_msmt)))
    bf = BatchFeatures.pack(feats, space)
    bf.gate, bf.msmt = gate, msmt
    H = rng.permutation(np.linspace(0.3, 0.99, L_)) + rng.uniform(-1e-3, 1e-3, L_)
    return space, bf, H


def gradient_errors(n_batches: int = 100, seed: int = 0, losses=DEFAULT_LOSSES, step: float = 1e-6,
                    L_range=(2, 20)) -> dict:
    """Worst relative gradient error per loss over random batches and parameter points.

    Probes whose finite-difference stencil straddles a soft-rank breakpoint
    (where the loss is not differentiable) are redrawn.
    """
    rng = np.random.default_rng(seed)
    worst = {cfg.name: 0.0 for cfg in losses}
    redrawn = 0
    for cfg in losses:
        done = 0
        while done < n_batches:
            space, bf, H = random_batch(rng, int(rng.integers(L_range[0], L_range[1] + 1)))
            reparam = Reparam(space)
            theta = reparam.from_params(ScoreParams.initial()) + rng.normal(0, 0.3, reparam.size)
            if not stencil_is_smooth(reparam, theta, bf, cfg, step):
                redrawn += 1
                continue
            _, g = gradient(reparam, theta, bf, H, cfg)
            fd = finite_difference(reparam, theta, bf, H, cfg, step)
            worst[cfg.name] = max(worst[cfg.name], relative_gradient_error(g, fd))
            done += 1
    return {"worst": worst, "redrawn": redrawn}


def check_gradients(n_batches: int = 100, seed: int = 0, tol: float = 1e-5, tol_soft: float = 1e-4) -> list[Check]:
    t0 = time.perf_counter()
    res = gradient_errors(n_batches, seed)
    dt = time.perf_counter() - t0
    out = []
    for name, err in res["worst"].items():
        t = tol_soft if name.startswith(("soft-spearman",)) else tol
        out.append(Check(f"gradient[{name}]", err <= t, err, 0.0, t, dt / len(res["worst"])))
    return out


# -- layout enumeration ----------------------------------------------------------------

def random_graph(rng: np.random.Generator, n: int, p: float, connected: bool = False) -> ConnectivityGraph:
    edges = {(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p}
    if connected:
        perm = rng.permutation(n)
        for i in range(1, n):
            j = int(rng.integers(i))
            a, b = sorted((int(perm[i]), int(perm[j])))
            edges.add((a, b))
    return ConnectivityGraph(n, frozenset(edges))


def vf2_mismatches(n_pairs: int = 50, seed: int = 0, max_pattern: int = 4, max_target: int = 6) -> list:
    rng = np.random.default_rng(seed)
    bad = []
    for i in range(n_pairs):
        m = int(rng.integers(2, max_target + 1))
        n = int(rng.integers(1, min(max_pattern, m) + 1))
        target = random_graph(rng, m, float(rng.uniform(0.2, 0.8)), connected=True)
        pattern = random_graph(rng, n, float(rng.uniform(0.3, 1.0)))
        vf2 = sorted(iter_monomorphisms(pattern, target))
        brute = brute_force_layouts(pattern, target)
        if len(vf2) != len(set(vf2)) or vf2 != brute:
            bad.append({"pair": i, "vf2": len(vf2), "brute": len(brute)})
    return bad


def check_vf2(n_pairs: int = 50, seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    bad = vf2_mismatches(n_pairs, seed)
    return [Check("vf2_vs_brute_force", not bad, len(bad), 0, 0, time.perf_counter() - t0)]


# -- Plackett-Luce -------------------------------------------------------------------

def plackett_luce_total(S) -> float:
    """Sum of top-L Plackett-Luce probabilities over all L! orderings, via the NLL loss."""
    S = np.asarray(S, dtype=float)
    Lb = len(S)
    total = 0.0
    for perm in itertools.permutations(range(Lb)):
        H = np.empty(Lb)
        H[list(perm)] = np.arange(Lb, 0, -1)       # perm[0] gets the highest fidelity
        total += math.exp(-L.nll_topk_loss(S, H, Lb))
    return total


def check_plackett_luce(seed: int = 0, trials: int = 20, tol: float = 1e-9) -> list[Check]:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(trials):
        for Lb in (2, 3, 4):
            worst = max(worst, abs(plackett_luce_total(rng.uniform(0.01, 5.0, Lb)) - 1.0))
    return [Check("plackett_luce_sum", worst <= tol, worst, 0.0, tol, time.perf_counter() - t0)]


def run_all(n_samples: int = 10**6, n_batches: int = 100, seed: int = 0) -> list[Check]:
    return (check_haar(n_samples, seed=seed) + check_gradients(n_batches, seed)
            + check_vf2(seed=seed) + check_plackett_luce(seed))

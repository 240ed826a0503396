"""Pointwise, pairwise and listwise learning-to-rank losses over one layout batch.

Every loss takes the batch's scores ``S`` and empirical fidelities ``H``.
Scores may be plain arrays (a float is returned) or :class:`~layoutrank.dual.Dual`
vectors (a scalar Dual is returned), which is how the trainer gets gradients.
Ranks follow the convention rank 1 = best (highest value).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual
from .dual import Dual

LOSS_KINDS = ("score-mse", "pairwise-bce", "pearson", "soft-spearman", "rank-mse", "nll-topk")
DEFAULT_EPSILON = 0.1


class DegenerateBatch(ValueError):
    """The batch carries no ranking signal for this loss (e.g. constant fidelities)."""


def _wrap(S):
    if isinstance(S, Dual):
        return S, False
    return Dual.constant(np.asarray(S, dtype=float), 0), True


def _out(x: Dual, plain: bool):
    return float(x.val) if plain else x


def hard_ranks(values) -> np.ndarray:
    """Descending ranks with ties sharing their average rank (1 = largest)."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(-v, kind="stable")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def min_ranks(values) -> np.ndarray:
    """Descending competition ranks: 1 + number of strictly larger entries."""
    v = np.asarray(values, dtype=float)
    return 1.0 + (v[None, :] > v[:, None]).sum(axis=1)


def isotonic_decreasing(y: np.ndarray):
    """Pool-adjacent-violators fit of a non-increasing sequence to ``y``.

    Returns the fitted values and a block id per entry.
    """
    sums, counts = [], []
    for val in y:
        sums.append(float(val))
        counts.append(1)
        while len(sums) > 1 and sums[-2] / counts[-2] < sums[-1] / counts[-1]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    fit = np.repeat([s / c for s, c in zip(sums, counts)], counts)
    blocks = np.repeat(np.arange(len(counts)), counts)
    return fit, blocks


def soft_rank(values, epsilon: float = DEFAULT_EPSILON):
    """Regularised descending ranks: projection of -values/epsilon onto the permutahedron of (1..L)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    z, plain = _wrap(values)
    z = z * (-1.0 / epsilon)
    L = len(z)
    order = np.argsort(-z.val, kind="stable")
    s = z[order]
    w = np.arange(L, 0, -1, dtype=float)
    y = s - w
    fit, blocks = isotonic_decreasing(y.val)
    # the fit is a block-wise mean of y, so its tangent is the block-wise mean tangent
    nb = blocks[-1] + 1 if L else 0
    member = np.zeros((nb, L))
    member[blocks, np.arange(L)] = 1.0
    avg = member / member.sum(axis=1, keepdims=True)
    v_tan = (member.T @ avg) @ y.tan
    r_sorted = Dual(s.val - fit, s.tan - v_tan)
    inv = np.empty(L, dtype=int)
    inv[order] = np.arange(L)
    r = r_sorted[inv]
    return r.val if plain else r


def soft_rank_structure(values, epsilon: float = DEFAULT_EPSILON) -> tuple:
    """Sort order and pooling blocks of the soft-rank projection.

    The soft rank is piecewise affine in its input; two inputs with the same
    structure lie on the same affine piece, which is what finite-difference
    gradient checks need.
    """
    z = -np.asarray(values, dtype=float) / epsilon
    order = np.argsort(-z, kind="stable")
    _, blocks = isotonic_decreasing(z[order] - np.arange(len(z), 0, -1))
    return tuple(order), tuple(blocks)


def standardize(S):
    """Zero-mean, unit-variance rescaling of a batch of scores."""
    S, plain = _wrap(S)
    c = S - S.mean()
    var = (c * c).mean()
    if not var.val > 1e-300:
        raise DegenerateBatch("scores are constant across the batch")
    out = c / dual.sqrt(var)
    return out.val if plain else out


def _pearson(x: np.ndarray, y: Dual) -> Dual:
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = (yc * yc).sum()
    if sxx <= 0 or not syy.val > 1e-300:
        raise DegenerateBatch("zero variance in one of the sequences")
    return (yc * xc).sum() / dual.sqrt(syy * sxx)


def score_mse(S, H):
    S, plain = _wrap(S)
    diff = S - np.asarray(H, dtype=float)
    return _out((diff * diff).mean(), plain)


def pairwise_bce(S, H):
    """Mean of -log sigmoid(S_j - S_i) over ordered pairs with H_i < H_j."""
    S, plain = _wrap(S)
    H = np.asarray(H, dtype=float)
    ii, jj = np.nonzero(H[:, None] < H[None, :])
    if len(ii) == 0:
        return _out(Dual.constant(0.0, S.nparam), plain)
    return _out(-dual.log_sigmoid(S[jj] - S[ii]).mean(), plain)


def pearson_loss(S, H):
    S, plain = _wrap(S)
    H = np.asarray(H, dtype=float)
    return _out(-_pearson(H, S), plain)


def soft_spearman_loss(S, H, epsilon: float = DEFAULT_EPSILON, normalize: bool = True):
    """Negative Pearson correlation of hard fidelity ranks with soft score ranks."""
    S, plain = _wrap(S)
    H = np.asarray(H, dtype=float)
    if np.all(H == H[0]):
        raise DegenerateBatch("constant fidelities")
    Z = standardize(S) if normalize else S
    return _out(-_pearson(hard_ranks(H), soft_rank(Z, epsilon)), plain)


def rank_mse_loss(S, H, d: int = 1, epsilon: float = DEFAULT_EPSILON, normalize: bool = True,
                  reduction: str = "sum"):
    """Sum (or mean, ``reduction="mean"``) over layouts of (R(H) - R_soft(S))^2 / R(H)^d."""
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    S, plain = _wrap(S)
    H = np.asarray(H, dtype=float)
    if np.all(H == H[0]):
        raise DegenerateBatch("constant fidelities")
    R = hard_ranks(H)
    Z = standardize(S) if normalize else S
    diff = soft_rank(Z, epsilon) - R
    total = (diff * diff * R ** (-float(d))).sum()
    if reduction == "mean":
        total = total / len(H)
    return _out(total, plain)


def nll_topk_loss(S, H, K: int = 1):
    """Plackett-Luce negative log-likelihood of the observed top-K layouts."""
    S, plain = _wrap(S)
    H = np.asarray(H, dtype=float)
    L = len(H)
    if not 1 <= K <= L:
        raise ValueError(f"K={K} must lie in [1, {L}]")
    if np.any(S.val <= 0):
        raise ValueError("Plackett-Luce needs strictly positive scores")
    order = np.argsort(-H, kind="stable")
    Ss = S[order]
    # denominators: sum over the shrinking set of remaining alternatives
    rev = Ss[np.arange(L - 1, -1, -1)].cumsum()
    denom = rev[np.arange(L - 1, L - 1 - K, -1)]
    ll = (dual.log(Ss[np.arange(K)]) - dual.log(denom)).sum()
    return _out(-ll, plain)


def plackett_luce_probability(S, ordering) -> float:
    """Probability of observing ``ordering`` (best first) under Plackett-Luce scores."""
    S = np.asarray(S, dtype=float)
    remaining = list(range(len(S)))
    p = 1.0
    for j in ordering:
        p *= S[j] / S[remaining].sum()
        remaining.remove(j)
    return p


@dataclass(frozen=True)
class LossConfig:
    kind: str = "rank-mse"
    d: int = 1
    K: int = 1
    epsilon: float = DEFAULT_EPSILON
    # rank-mse is averaged over the layouts of a batch during training
    reduction: str = "mean"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.d not in (0, 1, 2, 3):
            raise ValueError("rank discount d must be in {0, 1, 2, 3}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"unknown reduction {self.reduction!r}")

    @property
    def name(self) -> str:
        if self.kind == "rank-mse":
            return f"rank-mse(d={self.d})"
        if self.kind == "nll-topk":
            return f"nll(K={self.K})"
        return self.kind

    def __call__(self, S, H):
        if self.kind == "score-mse":
            return score_mse(S, H)
        if self.kind == "pairwise-bce":
            return pairwise_bce(S, H)
        if self.kind == "pearson":
            return pearson_loss(S, H)
        if self.kind == "soft-spearman":
            return soft_spearman_loss(S, H, self.epsilon)
        if self.kind == "rank-mse":
            return rank_mse_loss(S, H, self.d, self.epsilon, reduction=self.reduction)
        # batches smaller than K contribute their full ordering
        return nll_topk_loss(S, H, min(self.K, len(H)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "K": self.K, "epsilon": self.epsilon,
                "reduction": self.reduction}

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**{k: d[k] for k in ("kind", "d", "K", "epsilon", "reduction") if k in d})

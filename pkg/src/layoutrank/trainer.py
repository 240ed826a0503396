"""Fitting ScoreParams with Adam and a one-cycle schedule over layout batches.

The optimizer works on unconstrained coordinates; every constrained
parameter is a smooth image of them, so no step can leave its domain:

    lambda          = softplus(u)
    (a, b, 1-a-b)   = softmax(v_a, v_b, 0)
    c               = sigmoid(w)
    xi1, xi2, eta   = (pi/2) sigmoid(x)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dual
from .dual import Dual
from .evaluation import LearnedMethod, result_for, select
from .losses import DegenerateBatch, LossConfig, soft_rank_structure, standardize
from .score import BatchFeatures, ParamSpace, ScoreParams, batch_log_scores

HALF_PI = math.pi / 2


class TrainingError(RuntimeError):
    pass


class GradientCheckError(TrainingError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    epochs: int = 200
    max_lr: float = 0.05
    split_ratio: float = 0.8
    seed: int = 0
    grad_check: bool = False
    sharing: str = "per-qubit"

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig.from_dict(self.loss))
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if not 0 < self.split_ratio < 1:
            raise ValueError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if not self.max_lr > 0:
            raise ValueError("max_lr must be positive")

    def to_dict(self) -> dict:
        return {"loss": self.loss.to_dict(), "epochs": self.epochs, "max_lr": self.max_lr,
                "split_ratio": self.split_ratio, "seed": self.seed, "grad_check": self.grad_check,
                "sharing": self.sharing}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in ("loss", "epochs", "max_lr", "split_ratio", "seed", "grad_check",
                                        "sharing") if k in d})


def split_dataset(dataset, ratio: float = 0.8, seed: int = 0):
    """Batch-level split: ceil(ratio * N_B) training batches, the rest held out."""
    if dataset.N_B < 2:
        raise ValueError("need at least two batches to split")
    perm = np.random.default_rng(seed).permutation(dataset.N_B)
    n_train = min(dataset.N_B, math.ceil(ratio * dataset.N_B - 1e-9))
    return dataset.subset(sorted(perm[:n_train])), dataset.subset(sorted(perm[n_train:]))


# -- parameterization ---------------------------------------------------------------

def _logit(p):
    return math.log(p) - math.log1p(-p)


class Reparam:
    """Packs ScoreParams into an unconstrained vector and back."""

    def __init__(self, space: ParamSpace):
        self.space = space
        K, Q = space.n_gate, space.n_msmt
        self.sl_gate = slice(0, K)
        self.sl_msmt = slice(K, K + Q)
        self.i_va, self.i_vb, self.i_w = K + Q, K + Q + 1, K + Q + 2
        self.sl_ang = slice(K + Q + 3, K + Q + 6)
        self.size = K + Q + 6

    def from_params(self, p: ScoreParams) -> np.ndarray:
        lg, lm = self.space.lambdas(p)
        lam = np.maximum(np.concatenate([lg, lm]), 1e-12)
        theta = np.empty(self.size)
        theta[:self.sl_msmt.stop] = np.log(np.expm1(lam))
        rest = max(1.0 - p.a - p.b, 1e-12)
        theta[self.i_va] = math.log(max(p.a, 1e-12) / rest)
        theta[self.i_vb] = math.log(max(p.b, 1e-12) / rest)
        theta[self.i_w] = _logit(min(max(p.c, 1e-12), 1 - 1e-12))
        theta[self.sl_ang] = [_logit(min(max(v / HALF_PI, 1e-12), 1 - 1e-12)) for v in (p.xi1, p.xi2, p.eta)]
        return theta

    def constrained(self, theta):
        """(lam_gate, lam_msmt, a, b, c, xi1, xi2, eta) as floats or Duals."""
        sp = dual.softplus
        ea, eb = dual.exp(theta[self.i_va]), dual.exp(theta[self.i_vb])
        z = ea + eb + 1.0
        ang = [dual.sigmoid(theta[self.sl_ang.start + k]) * HALF_PI for k in range(3)]
        return (sp(theta[self.sl_gate]), sp(theta[self.sl_msmt]), ea / z, eb / z,
                dual.sigmoid(theta[self.i_w]), *ang)

    def to_params(self, theta) -> ScoreParams:
        vals = [dual.value(v) for v in self.constrained(np.asarray(theta, dtype=float))]
        return self.space.to_params(*vals)


# -- losses and gradients ----------------------------------------------------------------

def batch_scores(reparam: Reparam, theta, bf: BatchFeatures):
    return dual.exp(batch_log_scores(bf, *reparam.constrained(theta)))


def batch_loss(reparam: Reparam, theta, bf: BatchFeatures, H, loss: LossConfig) -> float:
    return float(loss(np.asarray(batch_scores(reparam, np.asarray(theta, dtype=float), bf)), H))


def gradient(reparam: Reparam, theta, bf: BatchFeatures, H, loss: LossConfig) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient over the unconstrained coordinates (forward mode)."""
    out = loss(batch_scores(reparam, Dual.seed(theta), bf), H)
    return float(out.val), out.tan.copy()


def finite_difference(reparam, theta, bf, H, loss, step: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = step
        g[k] = (batch_loss(reparam, theta + e, bf, H, loss) - batch_loss(reparam, theta - e, bf, H, loss)) / (2 * step)
    return g


def stencil_is_smooth(reparam, theta, bf, loss: LossConfig, step: float = 1e-6) -> bool:
    """True unless a soft-rank breakpoint lies inside the finite-difference stencil.

    Soft ranks are piecewise affine, so central differences across a
    breakpoint do not estimate the derivative at ``theta``.
    """
    if loss.kind not in ("soft-spearman", "rank-mse"):
        return True

    def structure(t):
        s = np.asarray(batch_scores(reparam, t, bf))
        return soft_rank_structure(standardize(s), loss.epsilon)

    theta = np.asarray(theta, dtype=float)
    ref = structure(theta)
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = step
        if structure(theta + e) != ref or structure(theta - e) != ref:
            return False
    return True


def relative_gradient_error(g, fd) -> float:
    """||g - fd|| / max(||fd||, 1): relative for large gradients, absolute near zero."""
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1.0))


# -- optimizer ----------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def init(cls, theta) -> "AdamState":
        theta = np.asarray(theta, dtype=float).copy()
        return cls(theta, np.zeros_like(theta), np.zeros_like(theta), 0)


def adam_step(state: AdamState, grad, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    g = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * g
    v = beta2 * state.v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    return AdamState(state.theta - lr * m_hat / (np.sqrt(v_hat) + eps), m, v, t)


def onecycle_lr(step: int, total_steps: int, max_lr: float, pct_start: float = 0.3,
                div_factor: float = 25.0, final_div_factor: float = 1e4) -> float:
    """Cosine one-cycle schedule: max_lr/div_factor -> max_lr -> max_lr/final_div_factor."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    lo, hi, end = max_lr / div_factor, max_lr, max_lr / final_div_factor
    warm_end = pct_start * total_steps - 1

    def cos_interp(a, b, pct):
        return b + (a - b) * 0.5 * (1 + math.cos(math.pi * pct))

    if step == 0:
        return lo
    if step <= warm_end:
        return cos_interp(lo, hi, step / warm_end)
    last = total_steps - 1
    if last <= warm_end:
        return end
    return cos_interp(hi, end, (step - max(warm_end, 0.0)) / (last - max(warm_end, 0.0)))


# -- training ----------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ScoreParams
    log: list
    best_epoch: int
    skipped: int
    train_ids: list
    test_ids: list

    def checkpoint(self, config: TrainConfig) -> dict:
        d = self.params.to_dict()
        d["training"] = {"config": config.to_dict(), "best_epoch": self.best_epoch,
                         "train_batches": self.train_ids, "test_batches": self.test_ids}
        return d


def _selection_metrics(params: ScoreParams, batches) -> tuple[float, float]:
    m = LearnedMethod(params)
    res = [result_for(b, select(m, b)) for b in batches]
    return float(np.median([r.r for r in res])), float(np.mean([r.sel_err for r in res]))


def check_gradients(reparam, theta, packed, losses, tol: float = 1e-5, tol_soft: float = 1e-4,
                    max_batches: int = 3) -> list[dict]:
    """Compare analytic and finite-difference gradients; raise on mismatch.

    Probes that straddle a soft-rank breakpoint are skipped.
    """
    report = []
    for loss in losses:
        tol_k = tol_soft if loss.kind == "soft-spearman" else tol
        for bf, H in packed[:max_batches]:
            try:
                _, g = gradient(reparam, theta, bf, H, loss)
            except DegenerateBatch:
                continue
            if not stencil_is_smooth(reparam, theta, bf, loss):
                continue
            err = relative_gradient_error(g, finite_difference(reparam, theta, bf, H, loss))
            report.append({"loss": loss.name, "error": err, "ok": err <= tol_k})
            if err > tol_k:
                raise GradientCheckError(f"{loss.name}: gradient mismatch {err:.3g} > {tol_k:g}")
    return report


GRAD_CHECK_LOSSES = (
    LossConfig("score-mse"), LossConfig("pairwise-bce"), LossConfig("pearson"),
    LossConfig("soft-spearman"), LossConfig("rank-mse", d=1), LossConfig("nll-topk", K=1),
)


def train(dataset, config: TrainConfig, init: ScoreParams | None = None, log_path=None) -> TrainResult:
    """Minimize the configured loss; returns the epoch with the best held-out median normed rank."""
    train_ds, test_ds = split_dataset(dataset, config.split_ratio, config.seed)
    if train_ds.N_B == 0:
        raise TrainingError("empty training split")
    space = ParamSpace.for_devices(dataset.devices, config.sharing)
    reparam = Reparam(space)
    if init is None:
        init = ScoreParams.initial(sharing=config.sharing)
    theta0 = reparam.from_params(init)
    packed = [(BatchFeatures.pack(b.features(config.sharing), space), b.hellinger) for b in train_ds]
    if config.grad_check:
        check_gradients(reparam, theta0, packed, GRAD_CHECK_LOSSES + (config.loss,))
    # checkpoints are chosen on held-out batches; fall back to the training batches if none
    select_on = list(test_ds) if test_ds.N_B else list(train_ds)
    test_packed = [(BatchFeatures.pack(b.features(config.sharing), space), b.hellinger) for b in test_ds]

    rng = np.random.default_rng(config.seed)
    total = config.epochs * len(packed)
    state = AdamState.init(theta0)
    step = 0
    log, skipped = [], 0
    best_key, best_theta, best_epoch = None, theta0, -1
    fh = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(config.epochs):
            losses = []
            for bi in rng.permutation(len(packed)):
                bf, H = packed[bi]
                lr = onecycle_lr(step, total, config.max_lr)
                step += 1
                try:
                    val, g = gradient(reparam, state.theta, bf, H, config.loss)
                except DegenerateBatch:
                    skipped += 1
                    continue
                losses.append(val)
                state = adam_step(state, g, lr)
            if not losses:
                raise TrainingError("every training batch is degenerate for this loss")
            params = reparam.to_params(state.theta)
            test_losses = []
            for bf, H in test_packed:
                try:
                    test_losses.append(batch_loss(reparam, state.theta, bf, H, config.loss))
                except DegenerateBatch:
                    pass
            med_r, sel = _selection_metrics(params, select_on)
            rec = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                   "test_loss": float(np.mean(test_losses)) if test_losses else None,
                   "test_median_r": med_r, "test_sel_err": sel}
            log.append(rec)
            if fh is not None:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            key = (med_r, sel)
            if best_key is None or key <= best_key:
                best_key, best_theta, best_epoch = key, state.theta.copy(), epoch
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(reparam.to_params(best_theta), log, best_epoch, skipped,
                       [b.batch_id for b in train_ds], [b.batch_id for b in test_ds])

"""Layout-selection metrics: normed rank, selection error, top-1 accuracy and win rate."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .score import BatchFeatures, ParamSpace, ScoreParams, params_log_scores

METRICS = ("median_r", "median_R", "mean_sel_err", "top1")


class EvaluationError(ValueError):
    pass


# -- selection methods -------------------------------------------------------------

class LearnedMethod:
    def __init__(self, params: ScoreParams, name: str = "learned"):
        self.params = params
        self.name = name
        self._spaces: dict = {}

    def scores(self, batch) -> np.ndarray:
        """Log scores of the batch's layouts (monotone in the score itself)."""
        key = batch.device_ref
        if key not in self._spaces:
            self._spaces[key] = ParamSpace.for_devices([batch.device], self.params.sharing)
        space = self._spaces[key]
        bf = BatchFeatures.pack(batch.features(self.params.sharing), space)
        return params_log_scores(bf, space, self.params)


class MapomaticMethod:
    name = "mapomatic"

    def scores(self, batch) -> np.ndarray:
        return np.array([f.log_mapomatic for f in batch.features()])


class RandomMethod:
    def __init__(self, seed: int = 0, name: str = "random"):
        self.seed = seed
        self.name = name

    def pick(self, batch) -> int:
        # keyed by batch id so picks do not depend on the order batches are visited
        rng = np.random.default_rng([self.seed, zlib.crc32(batch.batch_id.encode())])
        return int(rng.integers(batch.L))


def select(method, batch) -> int:
    """Index of the highest-scoring layout, lowest index on ties."""
    if isinstance(method, RandomMethod):
        return method.pick(batch)
    if batch.L == 1:
        return 0
    return int(np.argmax(method.scores(batch)))


# -- metrics ------------------------------------------------------------------

def true_rank(hellinger, index: int) -> int:
    """Minimum-rank convention: 1 + number of layouts with strictly higher fidelity."""
    h = np.asarray(hellinger, dtype=float)
    return int(1 + np.sum(h > h[index]))


def normed_rank(R: int, L: int) -> float:
    if L < 2:
        raise EvaluationError("normed rank needs L >= 2")
    if not 1 <= R <= L:
        raise EvaluationError(f"rank {R} outside [1, {L}]")
    return (R - 1) / (L - 1)


def selection_error(h_pred: float, h_best: float) -> float:
    if not h_best > 0:
        raise EvaluationError("best fidelity must be positive")
    if h_pred > h_best:
        raise EvaluationError("predicted fidelity exceeds the best fidelity")
    return 1.0 - h_pred / h_best


@dataclass(frozen=True)
class SelectionResult:
    batch_id: str
    L: int
    index: int
    R: int
    r: float
    sel_err: float
    h_pred: float
    h_best: float

    def __post_init__(self):
        if not 1 <= self.R <= self.L:
            raise EvaluationError("rank outside [1, L]")
        if self.R == 1 and self.sel_err != 0:
            raise EvaluationError("rank-1 selection must have zero error")


def result_for(batch, index: int) -> SelectionResult:
    h = batch.hellinger
    R = true_rank(h, index)
    best = float(h.max())
    err = 0.0 if R == 1 else selection_error(float(h[index]), best)
    return SelectionResult(batch.batch_id, batch.L, index, R, normed_rank(R, batch.L), err, float(h[index]), best)


def run_method(method, batches) -> list[SelectionResult]:
    return [result_for(b, select(method, b)) for b in batches]


def top1_accuracy(results) -> float:
    if not results:
        raise EvaluationError("no results")
    return float(np.mean([r.R == 1 for r in results]))


def win_rate(results_a, results_b, tol: float = 0.0) -> float:
    """(wins + ties / 2) / games, pairing results by batch id."""
    b_by_id = {r.batch_id: r for r in results_b}
    if set(b_by_id) != {r.batch_id for r in results_a}:
        raise EvaluationError("win rate needs both methods on the same batches")
    if not results_a:
        raise EvaluationError("no games")
    wins = ties = 0
    for ra in results_a:
        d = ra.h_pred - b_by_id[ra.batch_id].h_pred
        if d > tol:
            wins += 1
        elif abs(d) <= tol:
            ties += 1
    return (wins + 0.5 * ties) / len(results_a)


def summarize(results) -> dict:
    return {
        "median_r": float(np.median([r.r for r in results])),
        "median_R": float(np.median([r.R for r in results])),
        "mean_sel_err": float(np.mean([r.sel_err for r in results])),
        "top1": top1_accuracy(results),
    }


# -- reports -----------------------------------------------------------------

@dataclass
class Report:
    """Per-method metrics as mean and standard error over seeds."""

    methods: dict = field(default_factory=dict)       # name -> metric -> {"mean", "se"}
    win_rates: dict = field(default_factory=dict)     # name -> {"mean", "se"} vs baseline
    baseline: str = "mapomatic"
    n_seeds: int = 1
    n_batches: int = 0

    def mean(self, method: str, metric: str) -> float:
        if metric == "win_rate":
            return self.win_rates[method]["mean"]
        return self.methods[method][metric]["mean"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(**{k: d[k] for k in ("methods", "win_rates", "baseline", "n_seeds", "n_batches") if k in d})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def table(self) -> str:
        cols = list(METRICS) + ["win_rate"]
        lines = ["method".ljust(14) + "".join(c.rjust(18) for c in cols)]
        for name, m in self.methods.items():
            cells = []
            for c in cols:
                v = self.win_rates.get(name) if c == "win_rate" else m[c]
                cells.append("-".rjust(18) if v is None else f"{v['mean']:.4f}({v['se']:.4f})".rjust(18))
            lines.append(name.ljust(14) + "".join(cells))
        return "\n".join(lines)


def _mean_se(values) -> dict:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return {"mean": float(v.mean()), "se": se}


def aggregate(per_seed: list[dict], baseline: str = "mapomatic") -> Report:
    """Combine per-seed ``{"summaries": {...}, "win_rates": {...}}`` records."""
    if not per_seed:
        raise EvaluationError("nothing to aggregate")
    names = list(per_seed[0]["summaries"])
    methods = {n: {m: _mean_se([s["summaries"][n][m] for s in per_seed]) for m in METRICS} for n in names}
    wr = {n: _mean_se([s["win_rates"][n] for s in per_seed]) for n in per_seed[0]["win_rates"]}
    return Report(methods, wr, baseline, len(per_seed), per_seed[0].get("n_batches", 0))


def evaluate_once(methods: list, batches, baseline: str = "mapomatic", tol: float = 0.0) -> dict:
    results = {m.name: run_method(m, batches) for m in methods}
    if baseline not in results:
        raise EvaluationError(f"baseline {baseline!r} is not among the methods")
    return {
        "summaries": {n: summarize(r) for n, r in results.items()},
        "win_rates": {n: win_rate(r, results[baseline], tol) for n, r in results.items() if n != baseline},
        "n_batches": len(batches),
    }


def evaluate(methods: list, batches, baseline: str = "mapomatic", seeds=(0,), tol: float = 0.0) -> Report:
    """Evaluate methods on a test set; random methods are re-seeded once per entry of ``seeds``."""
    batches = list(batches)
    if not batches:
        raise EvaluationError("empty test set")
    per_seed = []
    for s in seeds:
        ms = [RandomMethod(s, m.name) if isinstance(m, RandomMethod) else m for m in methods]
        per_seed.append(evaluate_once(ms, batches, baseline, tol))
    return aggregate(per_seed, baseline)

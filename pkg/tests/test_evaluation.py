import json
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layoutrank.evaluation import (EvaluationError, LearnedMethod, MapomaticMethod, RandomMethod, Report,
                                   SelectionResult, evaluate, normed_rank, result_for, run_method, select,
                                   selection_error, summarize, top1_accuracy, true_rank, win_rate)
from layoutrank.score import ScoreParams


@dataclass
class FakeBatch:
    batch_id: str
    hellinger: np.ndarray

    @property
    def L(self):
        return len(self.hellinger)


class Oracle:
    """Scores equal to the fidelities: always picks a best layout."""
    name = "oracle"

    def scores(self, batch):
        return np.asarray(batch.hellinger)


class Fixed:
    def __init__(self, name, picks):
        self.name, self.picks = name, picks

    def scores(self, batch):
        s = np.zeros(batch.L)
        s[self.picks[batch.batch_id]] = 1.0
        return s


def batches(n=30, seed=0):
    rng = np.random.default_rng(seed)
    return [FakeBatch(f"b{i}", rng.uniform(0.2, 0.9, int(rng.integers(2, 12)))) for i in range(n)]


def test_normed_rank_example():
    assert normed_rank(7, 13) == 0.5
    assert normed_rank(1, 5) == 0.0 and normed_rank(5, 5) == 1.0
    for bad in ((0, 5), (6, 5)):
        with pytest.raises(EvaluationError):
            normed_rank(*bad)
    with pytest.raises(EvaluationError):
        normed_rank(1, 1)


def test_true_rank_min_convention():
    h = [0.5, 0.9, 0.9, 0.1]
    assert [true_rank(h, i) for i in range(4)] == [3, 1, 1, 4]


def test_selection_error_examples():
    assert selection_error(0.8, 0.8) == 0.0
    assert selection_error(0.4, 0.8) == pytest.approx(0.5)
    with pytest.raises(EvaluationError):
        selection_error(0.9, 0.8)
    with pytest.raises(EvaluationError):
        selection_error(0.0, 0.0)


def test_tied_best_counts_as_rank_one():
    b = FakeBatch("t", np.array([0.7, 0.7, 0.2]))
    r = result_for(b, 1)
    assert (r.R, r.r, r.sel_err) == (1, 0.0, 0.0)


def test_result_invariants():
    with pytest.raises(EvaluationError):
        SelectionResult("x", 3, 0, 1, 0.0, 0.1, 0.5, 0.6)
    with pytest.raises(EvaluationError):
        SelectionResult("x", 3, 0, 4, 1.0, 0.1, 0.5, 0.6)


def test_oracle_is_optimal():
    bs = batches()
    res = run_method(Oracle(), bs)
    s = summarize(res)
    assert s == {"median_r": 0.0, "median_R": 1.0, "mean_sel_err": 0.0, "top1": 1.0}


def test_top1_needs_results():
    with pytest.raises(EvaluationError):
        top1_accuracy([])


def test_win_rate_self_is_half():
    res = run_method(Oracle(), batches())
    assert win_rate(res, res) == 0.5


def test_win_rate_example():
    # 3 wins, 1 tie, 1 loss over 5 games
    H = {f"b{i}": np.array([0.9, 0.5, 0.1]) for i in range(5)}
    bs = [FakeBatch(k, v) for k, v in H.items()]
    a = Fixed("a", {"b0": 0, "b1": 0, "b2": 0, "b3": 1, "b4": 2})
    b = Fixed("b", {"b0": 1, "b1": 1, "b2": 2, "b3": 1, "b4": 0})
    ra, rb = run_method(a, bs), run_method(b, bs)
    assert win_rate(ra, rb) == pytest.approx(0.7)
    assert win_rate(ra, rb) + win_rate(rb, ra) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 1000))
def test_win_rate_complementary(s1, s2):
    bs = batches(15, seed=s1 % 7)
    ra, rb = run_method(RandomMethod(s1), bs), run_method(RandomMethod(s2), bs)
    assert win_rate(ra, rb) + win_rate(rb, ra) == pytest.approx(1.0)
    assert 0.0 <= win_rate(ra, rb) <= 1.0


def test_win_rate_tolerance_makes_ties():
    bs = [FakeBatch("x", np.array([0.5, 0.5 - 1e-9]))]
    ra, rb = run_method(Fixed("a", {"x": 0}), bs), run_method(Fixed("b", {"x": 1}), bs)
    assert win_rate(ra, rb) == 1.0 and win_rate(ra, rb, tol=1e-6) == 0.5


def test_win_rate_needs_same_batches():
    ra = run_method(Oracle(), batches(3))
    with pytest.raises(EvaluationError):
        win_rate(ra, ra[:2])


def test_random_median_normed_rank_is_central():
    # uniform picks give E[r] = 1/2; the median over many batches and seeds sits near it
    bs = batches(400, seed=3)
    med = [float(np.median([r.r for r in run_method(RandomMethod(s), bs)])) for s in range(5)]
    assert 0.4 <= np.mean(med) <= 0.6


def test_random_pick_independent_of_order():
    bs = batches(20)
    a = {r.batch_id: r.index for r in run_method(RandomMethod(4), bs)}
    b = {r.batch_id: r.index for r in run_method(RandomMethod(4), bs[::-1])}
    assert a == b


def test_select_ties_lowest_index():
    b = FakeBatch("t", np.array([0.1, 0.9, 0.9]))
    assert select(Oracle(), b) == 1


def test_evaluate_report_and_round_trip():
    bs = batches(25)
    rep = evaluate([Oracle(), RandomMethod(0)], bs, baseline="random", seeds=range(4))
    assert rep.n_seeds == 4 and rep.n_batches == 25
    assert rep.mean("oracle", "top1") == 1.0
    assert rep.methods["oracle"]["top1"]["se"] == 0.0
    assert rep.mean("oracle", "win_rate") >= 0.5
    back = Report.from_dict(json.loads(rep.to_json()))
    assert back == rep
    assert "oracle" in rep.table() and "win_rate" in rep.table()


def test_evaluate_batch_order_invariant():
    bs = batches(25)
    m = [Oracle(), RandomMethod(2)]
    a, b = evaluate(m, bs, "random", range(3)), evaluate(m, bs[::-1], "random", range(3))
    for name, metrics in a.methods.items():
        for k, v in metrics.items():
            assert v["mean"] == pytest.approx(b.methods[name][k]["mean"], abs=1e-12)
    assert a.win_rates == b.win_rates


def test_evaluate_errors():
    with pytest.raises(EvaluationError):
        evaluate([Oracle()], [], "oracle")
    with pytest.raises(EvaluationError):
        evaluate([Oracle()], batches(3), "mapomatic")


def test_learned_and_mapomatic_on_real_batches(device7):
    from layoutrank.dataset import generate_dataset
    from layoutrank.ensembles import EnsembleConfig

    ds = generate_dataset(EnsembleConfig(count=6, widths=(3, 3), seed=1), device7, N_shots=128, seed=0)
    methods = [LearnedMethod(ScoreParams.initial()), MapomaticMethod(), RandomMethod(0)]
    rep = evaluate(methods, list(ds), "mapomatic", seeds=range(2))
    assert set(rep.methods) == {"learned", "mapomatic", "random"}
    assert set(rep.win_rates) == {"learned", "random"}
    for name in rep.methods:
        assert 0.0 <= rep.mean(name, "median_r") <= 1.0

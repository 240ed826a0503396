import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layoutrank import trainer as T
from layoutrank.dataset import RankingDataset, generate_dataset
from layoutrank.ensembles import EnsembleConfig, sample_ensemble
from layoutrank.evaluation import LearnedMethod
from layoutrank.losses import LossConfig, min_ranks
from layoutrank.score import BatchFeatures, ParamSpace, ScoreParams

from conftest import hidden_params, relabel, scored_dataset


@pytest.fixture(scope="module")
def small_ds(device7):
    return generate_dataset(EnsembleConfig(count=12, widths=(3, 4), seed=2), device7, N_shots=512, seed=0)


def packed(ds, sharing="per-qubit"):
    space = ParamSpace.for_devices(ds.devices, sharing)
    return space, [(BatchFeatures.pack(b.features(sharing), space), b.hellinger) for b in ds]


# -- split -----------------------------------------------------------------------------

def test_split_sizes(small_ds):
    ten = small_ds.subset(range(10))
    tr, te = T.split_dataset(ten, 0.8, seed=0)
    assert (tr.N_B, te.N_B) == (8, 2)
    ids = lambda d: {b.batch_id for b in d}
    assert ids(tr) | ids(te) == ids(ten) and not ids(tr) & ids(te)
    tr2, te2 = T.split_dataset(ten, 0.8, seed=0)
    assert ids(tr2) == ids(tr) and ids(te2) == ids(te)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.floats(0.05, 0.95), st.integers(0, 100))
def test_split_partition_property(n, ratio, seed):
    class Fake:
        def __init__(self, k):
            self.batches = list(range(k))
            self.N_B = k

        def subset(self, idx):
            return Fake.of([self.batches[i] for i in idx])

        @staticmethod
        def of(items):
            f = Fake(0)
            f.batches, f.N_B = items, len(items)
            return f

    tr, te = T.split_dataset(Fake(n), ratio, seed)
    assert sorted(tr.batches + te.batches) == list(range(n))
    assert tr.N_B == math.ceil(ratio * n - 1e-9)


def test_split_needs_two():
    with pytest.raises(ValueError):
        T.split_dataset(RankingDataset([]), 0.8)


# -- reparameterization -----------------------------------------------------------------------

def test_reparam_round_trip(device7):
    space = ParamSpace.for_devices([device7])
    rp = T.Reparam(space)
    p = hidden_params(device7, seed=3)
    q = rp.to_params(rp.from_params(p))
    for k, v in p.lambda_gate.items():
        assert q.lambda_gate[k] == pytest.approx(v, rel=1e-10)
    for name in ("a", "b", "c", "xi1", "xi2", "eta"):
        assert getattr(q, name) == pytest.approx(getattr(p, name), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=6, max_size=6), st.floats(-30, 30))
def test_reparam_always_feasible(tail, lam):
    space = ParamSpace(["g0"], [0])
    rp = T.Reparam(space)
    p = rp.to_params(np.array([lam, lam] + tail[:4] + tail[4:]))
    p.validate()
    assert p.lambda_gate["g0"] >= 0 and p.a + p.b <= 1 + 1e-12


# -- gradients -------------------------------------------------------------------------------

@pytest.mark.parametrize("loss", [LossConfig("score-mse"), LossConfig("pairwise-bce"), LossConfig("pearson"),
                                  LossConfig("nll-topk", K=2), LossConfig("rank-mse", d=1)],
                         ids=lambda c: c.name)
def test_gradient_matches_fd(small_ds, loss):
    space, pk = packed(small_ds)
    rp = T.Reparam(space)
    theta = rp.from_params(hidden_params(small_ds.devices[0], seed=1))
    checked = 0
    for bf, H in pk:
        if not T.stencil_is_smooth(rp, theta, bf, loss):
            continue
        _, g = T.gradient(rp, theta, bf, H, loss)
        assert T.relative_gradient_error(g, T.finite_difference(rp, theta, bf, H, loss)) < 1e-5
        checked += 1
    assert checked >= 3


def test_score_mse_stationary_at_truth(small_ds):
    truth = hidden_params(small_ds.devices[0], seed=4)
    ds = relabel(small_ds, truth)
    space, pk = packed(ds)
    rp = T.Reparam(space)
    theta = rp.from_params(truth)
    for bf, H in pk:
        val, g = T.gradient(rp, theta, bf, H, LossConfig("score-mse"))
        assert val < 1e-20 and np.linalg.norm(g) < 1e-8


def test_nll_gradient_ignores_common_scale(small_ds):
    # a common factor on every score leaves the Plackett-Luce loss unchanged
    space, pk = packed(small_ds)
    rp = T.Reparam(space)
    theta = rp.from_params(ScoreParams.initial())
    cfg = LossConfig("nll-topk", K=1)
    bf, H = pk[0]
    S = np.asarray(T.batch_scores(rp, theta, bf))
    assert cfg(S, H) == pytest.approx(cfg(3.7 * S, H), rel=1e-12)


def test_relative_error_floor():
    assert T.relative_gradient_error(np.array([1e-3]), np.array([0.0])) == pytest.approx(1e-3)
    assert T.relative_gradient_error(np.array([11.0]), np.array([10.0])) == pytest.approx(0.1)


# -- optimizer --------------------------------------------------------------------------------

def test_adam_zero_gradient_is_fixed_point():
    s = T.AdamState.init(np.array([1.0, -2.0]))
    for _ in range(5):
        s = T.adam_step(s, np.zeros(2), 0.1)
    assert np.all(s.theta == [1.0, -2.0])


def test_adam_constant_gradient_step_is_lr():
    s = T.AdamState.init(np.zeros(3))
    g = np.array([2.0, -0.5, 1e3])
    s1 = T.adam_step(s, g, 0.01)
    # bias correction makes the first step exactly lr * sign(g) up to eps
    assert np.allclose(s1.theta, -0.01 * np.sign(g), rtol=1e-6)
    for _ in range(50):
        s1 = T.adam_step(s1, g, 0.01)
    assert np.allclose(np.diff(s1.theta * np.sign(g)), 0, atol=1e-6)


def test_adam_deterministic():
    g = np.random.default_rng(0).normal(size=(10, 4))

    def run():
        s = T.AdamState.init(np.zeros(4))
        for row in g:
            s = T.adam_step(s, row, 0.05)
        return s.theta

    assert np.array_equal(run(), run())


def test_onecycle_endpoints():
    N, lr = 1000, 0.05
    assert T.onecycle_lr(0, N, lr) == pytest.approx(lr / 25, abs=1e-12)
    peak = int(0.3 * N - 1)
    assert T.onecycle_lr(peak, N, lr) == pytest.approx(lr, abs=1e-12)
    assert T.onecycle_lr(N - 1, N, lr) == pytest.approx(lr / 1e4, abs=1e-12)
    vals = [T.onecycle_lr(k, N, lr) for k in range(N)]
    assert max(vals) == pytest.approx(lr)
    assert all(a <= b + 1e-15 for a, b in zip(vals[:peak], vals[1:peak + 1]))
    assert all(a >= b - 1e-15 for a, b in zip(vals[peak:], vals[peak + 1:]))
    with pytest.raises(ValueError):
        T.onecycle_lr(N, N, lr)
    with pytest.raises(ValueError):
        T.onecycle_lr(-1, N, lr)


def test_onecycle_tiny_schedules():
    assert T.onecycle_lr(0, 1, 0.05) == pytest.approx(0.05 / 25)
    assert T.onecycle_lr(1, 2, 0.05) == pytest.approx(0.05 / 1e4)


# -- configuration -----------------------------------------------------------------------------

def test_config_validation():
    for bad in ({"epochs": 0}, {"epochs": 2.5}, {"split_ratio": 1.0}, {"max_lr": 0.0}):
        with pytest.raises(ValueError):
            T.TrainConfig(**bad)
    cfg = T.TrainConfig(LossConfig("nll-topk", K=2), epochs=3)
    assert T.TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# -- training ------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def consistent(device7):
    truth = hidden_params(device7, seed=0, sharing="gate-name")
    circs = sample_ensemble(EnsembleConfig(count=100, seed=0), device7)
    return truth, scored_dataset(circs, device7, truth)


def test_self_consistency_recovers_ranking(consistent):
    truth, ds = consistent
    res = T.train(ds, T.TrainConfig(LossConfig("score-mse"), epochs=200, seed=0, sharing="gate-name"))
    m_true, m_fit = LearnedMethod(truth), LearnedMethod(res.params)
    held = [b for b in ds if b.batch_id in set(res.test_ids)]
    assert len(held) >= 15
    for b in held:
        assert np.array_equal(min_ranks(-m_true.scores(b)), min_ranks(-m_fit.scores(b)))


def test_score_mse_non_increasing_on_consistent_data(consistent):
    _, ds = consistent
    res = T.train(ds, T.TrainConfig(LossConfig("score-mse"), epochs=20, seed=1, sharing="gate-name"))
    tl = [r["train_loss"] for r in res.log]
    assert all(b <= a * 1.01 for a, b in zip(tl, tl[1:]))


def test_score_mse_loss_decreases(small_ds):
    res = T.train(small_ds, T.TrainConfig(LossConfig("score-mse"), epochs=15, seed=1))
    tl = [r["train_loss"] for r in res.log]
    assert tl[-1] <= tl[0] * 1.01
    # late in the cycle the learning rate is tiny, so the loss settles
    assert all(b <= a * 1.01 for a, b in zip(tl[-5:], tl[-4:]))


def test_training_deterministic(small_ds, tmp_path):
    cfg = T.TrainConfig(LossConfig("pairwise-bce"), epochs=4, seed=3)
    a = T.train(small_ds, cfg, log_path=tmp_path / "a.jsonl")
    b = T.train(small_ds, cfg, log_path=tmp_path / "b.jsonl")
    assert a.log == b.log and a.params == b.params
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert len((tmp_path / "a.jsonl").read_text().splitlines()) == 4


@pytest.mark.parametrize("kind", ["score-mse", "nll-topk", "pearson", "soft-spearman", "rank-mse", "pairwise-bce"])
def test_trained_params_stay_in_domain(small_ds, kind):
    res = T.train(small_ds, T.TrainConfig(LossConfig(kind, K=2), epochs=3, max_lr=0.5, seed=0))
    res.params.validate()
    assert 0 <= res.best_epoch < 3
    ck = res.checkpoint(T.TrainConfig(LossConfig(kind, K=2), epochs=3, max_lr=0.5))
    assert ScoreParams.from_dict(ck) == res.params
    assert set(ck["training"]["test_batches"]) == set(res.test_ids)


def test_all_degenerate_raises(small_ds):
    flat = RankingDataset([b.with_fidelities(np.full(b.L, 0.5)) for b in small_ds])
    with pytest.raises(T.TrainingError):
        T.train(flat, T.TrainConfig(LossConfig("pearson"), epochs=2))


def test_grad_check_passes_and_catches_bugs(small_ds, monkeypatch):
    T.train(small_ds, T.TrainConfig(LossConfig("rank-mse"), epochs=1, grad_check=True))
    real = T.gradient

    def broken(*a, **k):
        v, g = real(*a, **k)
        return v, g * 1.01 + 1e-3

    monkeypatch.setattr(T, "gradient", broken)
    with pytest.raises(T.GradientCheckError):
        T.train(small_ds, T.TrainConfig(LossConfig("rank-mse"), epochs=1, grad_check=True))

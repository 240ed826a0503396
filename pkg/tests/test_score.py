import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from layoutrank.circuit import Circuit, CircuitBuilder, schedule
from layoutrank.layouts import Layout, circuit_graph, enumerate_layouts
from layoutrank.score import (HAAR_A, HAAR_B, HAAR_C, BatchFeatures, ParamSpace, ScoreParams, ScoreParamsError,
                              f_t1, f_zz, hopf_powers, layout_features, mapomatic_score, params_log_scores,
                              s_gate, s_msmt, s_t1, s_zz, total_score)

from conftest import make_device

P0 = ScoreParams()


def haar_t1_quadrature(x):
    """Haar average of the amplitude-damping fidelity, by Gauss-Legendre quadrature.

    For a Haar state u = |beta|^2 is uniform on [0, 1] and
    F(u) = (1-u)^2 + g u (1-u) + 2 sqrt(1-g) u (1-u) + (1-g) u^2 with g = 1 - e^{-x}.
    """
    nodes, w = np.polynomial.legendre.leggauss(20)
    u = 0.5 * (nodes + 1)
    g = -math.expm1(-x)
    F = (1 - u) ** 2 + g * u * (1 - u) + 2 * math.sqrt(1 - g) * u * (1 - u) + (1 - g) * u ** 2
    return float(0.5 * w @ F)


class TestHopf:
    def test_axis(self):
        assert np.allclose(hopf_powers(0, 0, math.pi / 2), (1, 0, 0, 0))

    def test_diagonal(self):
        assert np.allclose(hopf_powers(math.pi / 4, math.pi / 4, math.pi / 4), (0.5, 0.5, 0.5, 0.5))

    def test_out_of_range(self):
        with pytest.raises(ScoreParamsError):
            hopf_powers(-0.1, 0, 0)
        with pytest.raises(ScoreParamsError):
            hopf_powers(0, 0, 2.0)

    @given(st.floats(0, math.pi / 2), st.floats(0, math.pi / 2), st.floats(0, math.pi / 2))
    def test_unit_sphere(self, a, b, c):
        p = np.array(hopf_powers(a, b, c))
        assert np.all(p >= -1e-15) and np.all(p <= 1 + 1e-15)
        assert float(p @ p) == pytest.approx(1.0, abs=1e-12)


class TestGateAndMeasurement:
    def test_empty(self):
        dev = make_device(2, [(0, 1)])
        c = Circuit(2)
        assert s_gate(c, Layout((0, 1)), dev, P0) == 1.0
        assert s_msmt(c, Layout((0, 1)), dev, P0) == 1.0
        assert mapomatic_score(c, Layout((0, 1)), dev) == 1.0

    def test_one_cx(self):
        dev = make_device(2, [(0, 1)], f2=0.99)
        assert s_gate(CircuitBuilder(2).cx(0, 1).build(), Layout((0, 1)), dev, P0) == pytest.approx(0.99)

    def test_two_gates(self):
        dev = make_device(2, [(0, 1)], f1={("X", (0,)): 0.99, ("X", (1,)): 0.98, ("SX", (0,)): 1, ("SX", (1,)): 1,
                                          ("RZ", (0,)): 1, ("RZ", (1,)): 1})
        c = CircuitBuilder(2).x(0).x(1).build()
        assert s_gate(c, Layout((0, 1)), dev, P0) == pytest.approx(0.9702)

    def test_measurements(self):
        dev = make_device(2, [(0, 1)], fm=(0.97, 0.95))
        one = CircuitBuilder(2).measure(0).build()
        both = CircuitBuilder(2).measure_all().build()
        assert s_msmt(one, Layout((0, 1)), dev, P0) == pytest.approx(0.97)
        assert s_msmt(both, Layout((0, 1)), dev, P0) == pytest.approx(0.9215)
        # measurements are not gates
        assert s_gate(both, Layout((0, 1)), dev, P0) == 1.0

    def test_lambda_exponent(self):
        dev = make_device(2, [(0, 1)], f2=0.99)
        p = ScoreParams(lambda_gate={"CX:0,1": 2.0})
        assert s_gate(CircuitBuilder(2).cx(0, 1).build(), Layout((0, 1)), dev, p) == pytest.approx(0.99 ** 2)

    def test_mapomatic(self):
        dev = make_device(2, [(0, 1)], f1=0.99, fm=0.97)
        c = CircuitBuilder(2).x(0).measure(0).build()
        assert mapomatic_score(c, Layout((0, 1)), dev) == pytest.approx(0.9603)


class TestT1:
    def test_zero_time(self):
        assert f_t1(0.0, 1e-3, 0.2, 0.3) == 1.0

    def test_long_time_limit(self):
        assert f_t1(1e9, 1.0, HAAR_A, HAAR_B) == pytest.approx(0.5)

    @pytest.mark.parametrize("x", [0.1, 1.0, 3.0])
    def test_matches_haar_quadrature(self, x):
        assert f_t1(x, 1.0, HAAR_A, HAAR_B) == pytest.approx(haar_t1_quadrature(x), abs=1e-12)

    def test_unit_value(self):
        assert f_t1(1.0, 1.0, HAAR_A, HAAR_B) == pytest.approx(0.7634901, abs=1e-7)

    @given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, t1, t2, a, b):
        assume(a + b <= 1)
        lo, hi = sorted((t1, t2))
        assert f_t1(hi, 1e-3, a, b) <= f_t1(lo, 1e-3, a, b) + 1e-15

    def _idle_circuit(self):
        # q0 idles [0, 35) while q1 runs an X, then the pair interacts
        return CircuitBuilder(2).x(1).cx(0, 1).build()

    def test_no_idle(self):
        dev = make_device(2, [(0, 1)], t1_us=1e-3)
        c = CircuitBuilder(2).cx(0, 1).build()
        assert s_t1(schedule(c, dev, Layout((0, 1))), Layout((0, 1)), dev, P0) == 1.0

    def test_one_interval(self):
        dev = make_device(2, [(0, 1)], t1_us=(0.035, float("inf")))   # Gamma1 * 35 ns = 1
        lay = Layout((0, 1))
        c = self._idle_circuit()
        assert s_t1(schedule(c, dev, lay), lay, dev, P0) == pytest.approx(haar_t1_quadrature(1.0), abs=1e-12)

    def test_two_intervals_square(self):
        dev = make_device(2, [(0, 1)], t1_us=(0.035, float("inf")))
        lay = Layout((0, 1))
        single = s_t1(schedule(self._idle_circuit(), dev, lay), lay, dev, P0)
        # q0 idles [0, 35) and again [335, 370)
        c = CircuitBuilder(2).x(1).cx(0, 1).x(1).cx(0, 1).build()
        assert s_t1(schedule(c, dev, lay), lay, dev, P0) == pytest.approx(single ** 2, rel=1e-12)


class TestZZ:
    def test_zero(self):
        assert f_zz(0.0, 1.0, HAAR_C) == 1.0

    def test_pi(self):
        assert f_zz(math.pi, 1.0, HAAR_C) == pytest.approx(1 / 3)

    @given(st.floats(0, 1e3), st.floats(1e-3, 10), st.floats(0, 1))
    def test_periodic_and_bounded(self, t, w, c):
        v = f_zz(t, w, c)
        assert 1 - c - 1e-12 <= v <= 1 + 1e-12
        assert f_zz(t + 2 * math.pi / w, w, c) == pytest.approx(v, abs=1e-9)

    def _zz_case(self):
        # q0 and q1 both idle for 70 ns while q2 runs two X gates; w * 70 = pi on edge (0, 1)
        khz = 1e6 / 140
        dev = make_device(3, [(0, 1), (1, 2)], zz_khz={(0, 1): khz, (1, 2): 0.0})
        c = CircuitBuilder(3).x(2).x(2).cx(1, 2).cx(0, 1).build()
        return dev, c

    def test_one_pair_pi(self):
        dev, c = self._zz_case()
        lay = Layout((0, 1, 2))
        assert s_zz(schedule(c, dev, lay), lay, dev, P0) == pytest.approx(1 / 3)

    def test_no_mutual_idle(self):
        dev = make_device(2, [(0, 1)], zz_khz=1e4)
        lay = Layout((0, 1))
        c = CircuitBuilder(2).cx(0, 1).cx(0, 1).build()
        assert s_zz(schedule(c, dev, lay), lay, dev, P0) == 1.0

    def test_uncoupled_pair_ignored(self):
        # q0 and q2 idle together but are not coupled on the device
        dev = make_device(3, [(0, 1), (1, 2)], zz_khz=0.0)
        lay = Layout((0, 1, 2))
        c = CircuitBuilder(3).x(1).x(1).cx(0, 1).cx(1, 2).build()
        assert s_zz(schedule(c, dev, lay), lay, dev, P0) == 1.0


class TestTotal:
    def test_all_ones(self):
        dev = make_device(2, [(0, 1)])
        bd = total_score(CircuitBuilder(2).cx(0, 1).measure_all().build(), Layout((0, 1)), dev, P0)
        assert bd.total == pytest.approx(1.0)

    def test_axis_powers(self, device7):
        c = CircuitBuilder(3).x(0).cx(0, 1).cx(1, 2).measure_all().build()
        lay = enumerate_layouts(circuit_graph(c), device7)[0]
        p = ScoreParams(xi1=0.0, eta=math.pi / 2)
        bd = total_score(c, lay, device7, p)
        assert bd.total == pytest.approx(bd.s_gate, rel=1e-12)

    def test_breakdown_product(self, device7):
        c = CircuitBuilder(3).x(0).cx(0, 1).x(2).cx(1, 2).measure_all().build()
        for lay in enumerate_layouts(circuit_graph(c), device7):
            bd = total_score(c, lay, device7, ScoreParams(xi1=0.3, xi2=1.1, eta=0.7))
            prod = math.prod(s ** p for s, p in zip((bd.s_gate, bd.s_msmt, bd.s_t1, bd.s_zz), bd.powers))
            assert bd.total == pytest.approx(prod, rel=1e-12)
            assert all(0 <= s <= 1 for s in (bd.s_gate, bd.s_msmt, bd.s_t1, bd.s_zz, bd.total))

    def test_mapomatic_matches_equal_power_score(self, device7):
        # no idle time anywhere: s_t1 = s_zz = 1, so ranking by total equals ranking by mapomatic
        c = CircuitBuilder(2).cx(0, 1).build()
        p = ScoreParams(xi1=math.pi / 4, eta=math.pi / 2)
        lays = enumerate_layouts(circuit_graph(c), device7)
        tot = [total_score(c, l, device7, p).total for l in lays]
        mm = [mapomatic_score(c, l, device7) for l in lays]
        assert np.array_equal(np.argsort(tot, kind="stable"), np.argsort(mm, kind="stable"))

    def test_vectorized_path_matches(self, device7):
        c = CircuitBuilder(4).x(0).cx(0, 1).x(3).cx(1, 2).cx(2, 3).rz(0.3, 0).measure_all().build()
        lays = enumerate_layouts(circuit_graph(c), device7)
        p = ScoreParams(lambda_gate={"CX:0,1": 1.7}, lambda_msmt={3: 0.4}, a=0.2, b=0.3, c=0.5,
                        xi1=0.4, xi2=0.9, eta=1.2)
        space = ParamSpace.for_devices([device7])
        bf = BatchFeatures.pack([layout_features(c, l, device7) for l in lays], space)
        fast = params_log_scores(bf, space, p)
        slow = [math.log(total_score(c, l, device7, p).total) for l in lays]
        assert np.allclose(fast, slow, rtol=1e-12, atol=1e-12)


class TestParams:
    def test_initial_values(self, device7):
        p = ScoreParams.initial(device7)
        assert (p.a, p.b, p.c) == (1 / 3, 1 / 6, 2 / 3)
        assert p.xi1 == p.xi2 == p.eta == math.pi / 4
        assert set(p.lambda_gate.values()) == {1.0} and len(p.lambda_msmt) == 7

    def test_roundtrip(self, tmp_path):
        p = ScoreParams(lambda_gate={"CX:0,1": 1.5}, lambda_msmt={2: 0.5}, a=0.2, b=0.1, c=0.4, xi1=0.1)
        p.save(tmp_path / "m.json")
        assert ScoreParams.load(tmp_path / "m.json") == p

    @pytest.mark.parametrize("kw", [dict(a=0.8, b=0.3), dict(c=1.5), dict(eta=2.0), dict(lambda_msmt={0: -1}),
                                    dict(sharing="nope")])
    def test_invalid(self, kw):
        with pytest.raises(ScoreParamsError):
            ScoreParams(**kw)

    def test_format_version(self):
        with pytest.raises(ScoreParamsError):
            ScoreParams.from_dict({"format_version": 99})


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.05, 1.5), st.floats(0.05, 1.5), st.sampled_from([0.5, 2.0]))
def test_argsort_invariant_under_power_scaling(xi1, xi2, eta, lam):
    from layoutrank.device import synthesize_device

    dev = synthesize_device(7, "heavy-hex-cell", 3.0, 0)
    c = CircuitBuilder(3).x(0).cx(0, 1).x(2).cx(1, 2).measure_all().build()
    lays = enumerate_layouts(circuit_graph(c), dev)
    p = ScoreParams(xi1=xi1, xi2=xi2, eta=eta)
    logs = np.array([math.log(total_score(c, l, dev, p).total) for l in lays])
    # scaling every power by lam multiplies every log score by lam
    assert np.array_equal(np.argsort(logs, kind="stable"), np.argsort(lam * logs, kind="stable"))

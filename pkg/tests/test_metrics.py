import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obo_bench.core import default_schedule
from obo_bench.geometry import ball, box
from obo_bench.hypergrad import WindowBuffer, window_push
from obo_bench.metrics import (
    MetricsLedger,
    SupEstimator,
    fallback_hypergrad,
    fallback_inner,
    measure_variation,
    regret_increment,
    slope_fit,
    summarize,
    variation_update,
    window_regret_increment,
    window_true_hypergrad,
)
from obo_bench.optimizers import run
from obo_bench.problems import (
    DriftPath,
    VariationRecord,
    make_drifting_quadratic,
    make_hypercleaning_synthetic,
    make_window_adversary,
)

from conftest import random_general_quadratic


def quad1(d, c, x_set=None, T=1):
    q = make_drifting_quadratic(1, T, DriftPath(), DriftPath(), 1.0, x_set)
    q.D = np.full((T, 1), float(d))
    q.C = np.full((T, 1), float(c))
    q.E = q.D - q.C
    return q


@pytest.mark.parametrize("gamma", [0.01, 0.5, 3.0])
def test_regret_unconstrained_example(gamma):
    # F = 1/2 (x - 1)^2 at x = 0
    q = quad1(0.0, 1.0)
    assert regret_increment(q, 1, np.zeros(1), gamma) == 1.0


def test_regret_at_stationary_point():
    q = quad1(0.0, 1.0)
    assert regret_increment(q, 1, np.ones(1), 0.3) == 0.0


def test_regret_box_boundary_outward_gradient():
    # F = 1/2 (x - 3)^2 on [-1, 1] at x = 1: gradient -2 points out of the box
    q = quad1(0.0, 3.0, box([-1.0], [1.0]))
    assert regret_increment(q, 1, np.ones(1), 0.5) == 0.0
    u = np.linspace(-1, 1, 20001)
    assert u[np.argmin(-2 * u + (u - 1) ** 2)] == 1.0


def test_window_regret_w1_equals_regret():
    q = make_drifting_quadratic(2, 5, DriftPath("linear", 1), DriftPath("linear", 2), 1.0)
    b = WindowBuffer(q, 1, 1.0)
    x = np.array([0.3, -0.1])
    for t in range(1, 6):
        b = window_push(b, t)
        assert window_regret_increment(b, q, t, x, 0.2) == pytest.approx(regret_increment(q, t, x, 0.2), rel=1e-14)


def test_window_regret_stationary_any_w():
    q = make_drifting_quadratic(2, 6, DriftPath("static", 1), DriftPath("static", 2), 1.0)
    x = np.array([0.3, -0.1])
    for w, eta in ((3, 0.5), (4, 1.0)):
        b = WindowBuffer(q, w, eta)
        for t in range(1, 7):
            b = window_push(b, t)
        assert window_regret_increment(b, q, 6, x, 0.2) == pytest.approx(regret_increment(q, 6, x, 0.2), rel=1e-12)


def test_window_regret_fresh_coordinate_floor():
    c = 1.0
    w = make_window_adversary(32, c, 4.0)
    for W in (1, 2, 4, 8):
        b = WindowBuffer(w, W, 1.0)
        for t in range(1, 21):
            b = window_push(b, t)
        assert window_regret_increment(b, w, 20, np.zeros(32), 0.1) > c**2 / (16 * W**2)


def test_window_regret_buffer_mismatch():
    q = make_drifting_quadratic(1, 3, DriftPath(), DriftPath(), 1.0)
    b = window_push(WindowBuffer(q, 2, 1.0), 1)
    with pytest.raises(ValueError):
        window_regret_increment(b, q, 2, np.zeros(1), 0.1)


def test_fallback_solvers_match_analytic(rng):
    q = random_general_quadratic(rng)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(fallback_inner(q, 2, x), q.inner_opt(2, x), atol=1e-9)
    np.testing.assert_allclose(fallback_hypergrad(q, 2, x), q.true_hypergrad(2, x), atol=1e-8)


def test_window_fallback_matches_analytic(rng):
    q = random_general_quadratic(rng, T=4)
    b = WindowBuffer(q, 3, 0.7)
    for t in (1, 2, 3, 4):
        b = window_push(b, t)
    x = rng.standard_normal(3)
    q.capabilities = type(q.capabilities)(False, False, False)
    fb = window_true_hypergrad(b, x)
    np.testing.assert_allclose(fb, q.window_true_hypergrad(b.entries, b.weights, b.w_norm, x), atol=1e-8)


def test_variation_stationary_zero():
    q = make_drifting_quadratic(2, 5, DriftPath("static", 1), DriftPath("static", 2), 1.0)
    for mode in ("analytic", "sampled"):
        for t in range(1, 6):
            r = measure_variation(q, t, SupEstimator(mode, n=16), np.zeros(2), np.zeros(2))
            assert r.v_inc == r.h2_inc == r.e2_inc == r.p_inc == 0


def test_sampled_is_lower_estimate():
    q = make_drifting_quadratic(2, 6, DriftPath("linear", 1, 0.5), DriftPath("sqrt-decay", 2, 0.5), 1.0,
                                ball(np.zeros(2), 1.0))
    est = SupEstimator("sampled", n=200)
    grid = SupEstimator("grid", resolution=41)
    assert est.is_lower_estimate and grid.is_lower_estimate and not SupEstimator().is_lower_estimate
    for t in range(2, 7):
        a = measure_variation(q, t, SupEstimator())
        for e in (est, grid):
            s = measure_variation(q, t, e)
            assert s.v_inc <= a.v_inc + 1e-12
            assert s.v_inc >= 0.9 * a.v_inc
            assert s.h2_inc == pytest.approx(a.h2_inc, rel=1e-10)


def test_analytic_mode_requires_capability():
    hc = make_hypercleaning_synthetic(5, 5, 2, [0.1], 0.5, 0, T=3)
    with pytest.raises(ValueError):
        measure_variation(hc, 2, SupEstimator("analytic"))
    r = measure_variation(hc, 2, SupEstimator("sampled", n=4))
    assert r.v_inc >= 0


def test_variation_first_round_noop():
    q = make_drifting_quadratic(2, 3, DriftPath("linear", 1), DriftPath("linear", 2), 1.0)
    led = MetricsLedger()
    variation_update(led, q, 1, SupEstimator())
    led.add_round(1, 0.0, 0.0)
    assert led.v_inc == [0.0]


def test_ledger_rejects_negative():
    led = MetricsLedger()
    with pytest.raises(ValueError):
        led.add_round(1, -1e-3, 0.0)
    with pytest.raises(ValueError):
        led.add_round(1, float("nan"), 0.0)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=60), st.integers(0, 60))
@settings(max_examples=200, deadline=None)
def test_cumulative_prefix_sums_and_split(incs, n):
    led = MetricsLedger()
    for i, r in enumerate(incs, start=1):
        led.add_round(i, r, r / 2, variation=VariationRecord(v_inc=r))
    cum = led.cum_regret
    acc = 0.0
    for i, r in enumerate(incs):
        acc += r
        assert cum[i] == acc
    a, b = led.split(n)
    c = a.concat(b)
    assert c.regret_inc == led.regret_inc and c.t == led.t and c.v_inc == led.v_inc


def test_summary_all_zero():
    led = MetricsLedger()
    for t in range(1, 11):
        led.add_round(t, 0.0, 0.0)
    s = summarize(led, 10)
    assert s["reg_T"] == 0 and s["V_T"] == 0 and s["I_T"] == 0
    assert s["slope_fit"] is None


def test_summary_empty():
    with pytest.raises(ValueError):
        summarize(MetricsLedger(), 10)


def test_slope_closed_form():
    ts = np.arange(1, 1001)
    assert slope_fit(ts, np.cumsum(np.full(1000, 0.7))) == pytest.approx(1.0, abs=0.01)
    assert slope_fit(ts, 3.0 * ts**0.5) == pytest.approx(0.5, abs=1e-12)
    assert slope_fit(ts, np.cumsum(ts.astype(float))) == pytest.approx(2.0, abs=0.05)
    assert slope_fit([1], [1.0]) is None


def test_summary_fsobo_grad_queries():
    q = make_drifting_quadratic(2, 40, DriftPath("sqrt-decay", 1), DriftPath(), 1.0)
    rec = run(q, "fsobo", default_schedule(q.constants, "fsobo", 40))
    s = summarize(rec.ledger, 40)
    assert s["grad_queries"] == 40 and s["hvp_queries"] == 40

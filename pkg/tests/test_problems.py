import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from obo_bench.core import ParameterDomainError, UnsupportedCapability
from obo_bench.geometry import ball, sample_points, unconstrained
from obo_bench.metrics import fallback_inner
from obo_bench.problems import (
    D2SIG_MAX,
    DriftingQuadratic,
    DriftPath,
    dsigmoid,
    grad_x_f,
    grad_y_f,
    grad_y_g,
    hvp_yy_g,
    inner_opt,
    jvp_xy_g,
    make_block_sigmoid_adversary,
    make_drifting_quadratic,
    make_hypercleaning_synthetic,
    make_window_adversary,
    sigmoid,
    true_hypergrad,
    variation_increments,
)


def quad_with(D, C, mu=1.0, x_set=None, ref_radius=None):
    inst = make_drifting_quadratic(len(D[0]), len(D), DriftPath(), DriftPath(), mu, x_set, ref_radius=ref_radius)
    inst.D = np.array(D, dtype=float)
    inst.C = np.array(C, dtype=float)
    inst.E = inst.D - inst.C
    return inst


def test_quadratic_oracles():
    q = quad_with([[1.0]], [[0.0]])
    np.testing.assert_array_equal(grad_y_g(q, 1, np.zeros(1), np.ones(1)), [0])
    np.testing.assert_array_equal(grad_y_f(q, 1, np.zeros(1), np.array([3.0])), [3])
    np.testing.assert_array_equal(grad_x_f(q, 1, np.array([5.0]), np.array([3.0])), [0])
    np.testing.assert_array_equal(inner_opt(q, 1, np.array([2.0])), [3])
    np.testing.assert_array_equal(true_hypergrad(q, 1, np.array([2.0])), [3])
    q2 = make_drifting_quadratic(2, 3, DriftPath(), DriftPath(), 2.0)
    np.testing.assert_array_equal(hvp_yy_g(q2, 1, np.zeros(2), np.zeros(2), np.array([1.0, 0.0])), [2, 0])
    np.testing.assert_array_equal(hvp_yy_g(q2, 1, np.zeros(2), np.zeros(2), np.zeros(2)), [0, 0])
    q1 = make_drifting_quadratic(2, 3, DriftPath(), DriftPath(), 1.0)
    np.testing.assert_array_equal(jvp_xy_g(q1, 2, np.zeros(2), np.zeros(2), np.array([0.5, -2.0])), [-0.5, 2.0])


def test_true_hypergrad_finite_differences():
    q = make_drifting_quadratic(3, 5, DriftPath("linear", 1), DriftPath("linear", 2), 1.0, curvature_ratio=3.0)
    rng = np.random.default_rng(0)
    h = 1e-6
    for t in range(1, 6):
        x = rng.standard_normal(3)
        fd = np.array([(q.F(t, x + h * e) - q.F(t, x - h * e)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(q.true_hypergrad(t, x), fd, rtol=1e-6, atol=1e-8)


def test_round_range():
    q = make_drifting_quadratic(2, 3, DriftPath(), DriftPath(), 1.0)
    for t in (0, 4):
        with pytest.raises(IndexError):
            q.grad_y_g(t, np.zeros(2), np.zeros(2))


def test_dimension_mismatch():
    q = make_drifting_quadratic(2, 3, DriftPath(), DriftPath(), 1.0)
    with pytest.raises(ValueError):
        q.hvp_yy_g(1, np.zeros(2), np.zeros(2), np.zeros(3))


def test_capability_absent():
    hc = make_hypercleaning_synthetic(6, 6, 2, [0.0], 0.5, 0, T=3)
    with pytest.raises(UnsupportedCapability):
        inner_opt(hc, 1, np.zeros(6))
    with pytest.raises(UnsupportedCapability):
        true_hypergrad(hc, 1, np.zeros(6))
    with pytest.raises(UnsupportedCapability):
        variation_increments(hc, 2)


def test_variation_static_zero():
    q = make_drifting_quadratic(3, 10, DriftPath("static", 1), DriftPath("static", 2), 1.0)
    for t in range(1, 11):
        r = q.variation_increments(t)
        assert r.v_inc == r.h2_inc == r.e2_inc == r.p_inc == 0


def test_variation_first_round_zero():
    q = make_drifting_quadratic(3, 10, DriftPath("linear", 1), DriftPath("linear", 2), 1.0)
    r = q.variation_increments(1)
    assert r.v_inc == r.h2_inc == r.e2_inc == r.p_inc == 0


def test_v_inc_ball_example():
    # e_1 = 0, e_2 = (1, 0), R = 1: R*1 + 1/2 = 1.5
    q = quad_with([[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]], x_set=ball([0, 0], 1.0))
    assert q.variation_increments(2).v_inc == pytest.approx(1.5, abs=1e-15)
    # grid oracle over the disk
    rr, th = np.meshgrid(np.linspace(0, 1, 201), np.linspace(0, 2 * np.pi, 361))
    X = np.stack([(rr * np.cos(th)).ravel(), (rr * np.sin(th)).ravel()], 1)
    diff = [q.F(2, x) - q.F(1, x) for x in X]
    assert np.max(np.abs(diff)) == pytest.approx(1.5, abs=1e-6)


def test_h2_inc_is_x_independent():
    q = make_drifting_quadratic(3, 4, DriftPath("sqrt-decay", 5, 0.7), DriftPath("static", 6), 1.0,
                                ball(np.zeros(3), 2.0))
    rng = np.random.default_rng(0)
    xs = sample_points(q.x_set, 1000, rng)
    for t in (2, 3, 4):
        d = [np.sum((q.inner_opt(t, x) - q.inner_opt(t - 1, x)) ** 2) for x in xs]
        assert max(d) == pytest.approx(q.variation_increments(t).h2_inc, rel=1e-12)
        assert min(d) == pytest.approx(max(d), rel=1e-9)


def test_sqrt_decay_increments():
    T, s = 400, 0.8
    P = DriftPath("sqrt-decay", 3, s).realize(T, 4)
    steps = np.linalg.norm(np.diff(P, axis=0), axis=1)
    assert np.all(steps <= s / np.sqrt(np.arange(2, T + 1)) + 1e-12)


def test_drift_variation_orders():
    def V(kind, T):
        q = make_drifting_quadratic(3, T, DriftPath(kind, 1, 0.5), DriftPath("static", 2), 1.0,
                                    ball(np.zeros(3), 1.0))
        return sum(q.variation_increments(t).v_inc for t in range(2, T + 1))

    # linear: constant per-round variation -> V doubles with T
    assert V("linear", 800) / V("linear", 400) == pytest.approx(2, rel=0.02)
    # sqrt-decay: V = O(sqrt T)
    r = V("sqrt-decay", 1600) / V("sqrt-decay", 400)
    assert 1.5 < r < 2.5
    assert V("static", 400) == 0


def test_step_change_single_jump():
    P = DriftPath("step-change", 0, 2.0).realize(10, 3)
    jumps = np.nonzero(np.linalg.norm(np.diff(P, axis=0), axis=1))[0]
    assert list(jumps) == [4]


def test_unknown_drift_kind():
    with pytest.raises(ParameterDomainError):
        DriftPath("wobble")


def test_quadratic_mu_positive():
    with pytest.raises(ParameterDomainError):
        make_drifting_quadratic(2, 3, DriftPath(), DriftPath(), 0.0)


def test_declared_constants_quadratic():
    q = make_drifting_quadratic(4, 20, DriftPath("linear", 1), DriftPath("linear", 2), 0.5,
                                ball(np.zeros(4), 1.0), curvature_ratio=4.0)
    assert q.constants.mu_g == 0.5 and q.constants.l_g1 == 2.0
    assert isinstance(q, DriftingQuadratic)


# ---- block adversary ------------------------------------------------------


def test_block_layout():
    a = make_block_sigmoid_adversary(100, 9.0, 2.0)
    assert a.n_blocks == 5 and a.block_len == 20
    assert a.block_starts() == [1, 21, 41, 61, 81]
    assert [a.block(t) for t in (1, 20, 21, 100)] == [0, 0, 1, 4]


def test_block_stationary_budget_zero():
    a = make_block_sigmoid_adversary(50, 0.0, 2.0)
    assert a.n_blocks == 1
    assert all(a.variation_increments(t).v_inc == 0 for t in range(1, 51))


def test_block_too_many():
    with pytest.raises(ParameterDomainError):
        make_block_sigmoid_adversary(5, 20.0, 1.0)


def test_block_oracles():
    a = make_block_sigmoid_adversary(100, 9.0, 2.0, mu_g=1.5)
    x = np.random.default_rng(0).standard_normal(5)
    np.testing.assert_array_equal(a.inner_opt(30, x), x)
    v = np.arange(5.0)
    np.testing.assert_array_equal(a.jvp_xy_g(30, x, x, v), -1.5 * v)
    h = a.true_hypergrad(30, np.zeros(5))
    assert h[1] == pytest.approx(a.c / 2) and np.count_nonzero(h) == 1


def test_first_step_constant_oracle():
    a = make_block_sigmoid_adversary(100, 9.0, 2.0)
    # ||2 c sig'(0) e_k||^2 with sig'(0) = 1/4
    assert a.first_step_constant == pytest.approx(a.c**2 / 4, rel=1e-15)


def test_block_variation_within_budget_plus_one():
    for V in (0.0, 3.0, 9.0, 15.5):
        a = make_block_sigmoid_adversary(200, V, 2.0)
        total = sum(a.variation_increments(t).v_inc for t in range(1, 201))
        assert total <= V + 1 + 1e-12


# ---- window adversary ----------------------------------------------------------


def test_window_adversary_examples():
    w = make_window_adversary(4, 1.0, 4.0)
    # sig(0) / sqrt(4) = 1/4
    np.testing.assert_allclose(w.inner_opt(2, np.zeros(4)), [0.25] * 4)
    np.testing.assert_allclose(w.hvp_yy_g(3, np.ones(4), np.ones(4), np.arange(4.0)), 4 * np.arange(4.0))
    w1 = make_window_adversary(1, 1.0, 3.0)
    np.testing.assert_allclose(w1.jvp_xy_g(1, np.zeros(1), np.zeros(1), np.ones(1)), [-3 / 4])
    np.testing.assert_allclose(make_window_adversary(9, 1.0, 1.0).phi(np.zeros(9)), 1 / 6)


def test_window_adversary_fresh_norm():
    c = 1.3
    w = make_window_adversary(16, c, 4.0)
    for t in (1, 7, 16):
        h = w.true_hypergrad(t, np.zeros(16))
        assert np.linalg.norm(h) > c / 4


def test_window_adversary_cap():
    with pytest.raises(ParameterDomainError):
        make_window_adversary(100, 1.0, 1.0, d_max=50)


def test_window_adversary_window_hypergrad_fd():
    T = 6
    w = make_window_adversary(T, 1.0, 4.0)
    ts, ws = [5, 4, 3], [1.0, 0.5, 0.25]
    W = 1.75
    x = np.random.default_rng(0).standard_normal(T)

    def Fbar(z):
        y = w.phi(z)
        return sum(wt * w.f(t, z, y) for t, wt in zip(ts, ws)) / W

    h = 1e-6
    fd = np.array([(Fbar(x + h * e) - Fbar(x - h * e)) / (2 * h) for e in np.eye(T)])
    np.testing.assert_allclose(w.window_true_hypergrad(ts, ws, W, x), fd, atol=1e-9)


@given(st.floats(-30, 30))
def test_sigmoid_derivatives(z):
    assert abs(dsigmoid(z) - sigmoid(z) * (1 - sigmoid(z))) < 1e-15
    assert dsigmoid(z) <= 0.25


def test_d2sig_max():
    z = np.linspace(-5, 5, 200001)
    s = sigmoid(z)
    assert np.max(np.abs(s * (1 - s) * (1 - 2 * s))) == pytest.approx(D2SIG_MAX, rel=1e-8)


# ---- hyper-cleaning ------------------------------------------------------------


def test_hypercleaning_validation():
    with pytest.raises(ParameterDomainError):
        make_hypercleaning_synthetic(5, 5, 2, [0.1, 1.5], 0.1, 0)
    with pytest.raises(ParameterDomainError):
        make_hypercleaning_synthetic(5, 5, 2, [-0.1], 0.1, 0)


def test_hypercleaning_phases():
    hc = make_hypercleaning_synthetic(400, 10, 3, [0.1, 0.2, 0.3], 0.1, 0, T=300)
    assert hc.phase_of[0] == 0 and hc.phase_of[99] == 0 and hc.phase_of[100] == 1 and hc.phase_of[299] == 2
    fr = [hc.corrupted_fraction(t) for t in (1, 150, 300)]
    assert fr[0] <= fr[1] <= fr[2]
    assert fr == pytest.approx([0.1, 0.2, 0.3], abs=0.06)
    # nested: a sample flipped in an early phase stays flipped
    early = hc.labels[0] != hc.b_tr
    late = hc.labels[2] != hc.b_tr
    assert np.all(late[early])


def test_hypercleaning_clean_matches_ridge_logistic():
    hc = make_hypercleaning_synthetic(30, 10, 3, [0.0], 0.3, 2, T=2)
    x = np.full(30, 0.7)
    s = sigmoid(0.7)
    A, b = hc.A_tr, hc.b_tr

    def obj(th):
        return s * np.mean(np.logaddexp(0, -b * (A @ th))) + 0.15 * th @ th

    ref = minimize(obj, np.zeros(3), method="BFGS", options={"gtol": 1e-12}).x
    np.testing.assert_allclose(fallback_inner(hc, 1, x), ref, atol=1e-6)


def test_hypercleaning_all_flipped_hurts():
    # two-point training set, validation set = the same two points
    hc = make_hypercleaning_synthetic(2, 2, 2, [0.0, 1.0], 0.05, 1, T=2)
    hc.A_val, hc.b_val = hc.A_tr.copy(), hc.b_tr.copy()
    x = np.zeros(2)
    clean = hc.f(1, x, fallback_inner(hc, 1, x))
    flipped = hc.f(2, x, fallback_inner(hc, 2, x))
    assert flipped > clean


def test_hypercleaning_strong_convexity_declared():
    hc = make_hypercleaning_synthetic(12, 8, 3, [0.2], 0.25, 3, T=4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = sample_points(hc.x_set, 1, rng)[0]
        y = rng.standard_normal(3) * 3
        v = rng.standard_normal(3)
        assert v @ hc.hvp_yy_g(1, x, y, v) >= hc.constants.mu_g * (v @ v) - 1e-12
        assert np.linalg.norm(hc.hvp_yy_g(1, x, y, v)) <= hc.constants.l_g1 * np.linalg.norm(v) + 1e-12


@pytest.mark.parametrize("which", ["quad", "block", "window", "hc"])
def test_finite_difference_gradients(which):
    rng = np.random.default_rng(11)
    inst = {
        "quad": make_drifting_quadratic(3, 4, DriftPath("linear", 1), DriftPath("linear", 2), 0.8,
                                        curvature_ratio=2.5),
        "block": make_block_sigmoid_adversary(8, 3.0, 2.0),
        "window": make_window_adversary(5, 1.0, 2.0),
        "hc": make_hypercleaning_synthetic(7, 5, 3, [0.3], 0.2, 4, T=4),
    }[which]
    h = 1e-6

    def fd(fun, z):
        return np.array([(fun(z + h * e) - fun(z - h * e)) / (2 * h) for e in np.eye(z.size)])

    for _ in range(5):
        t = int(rng.integers(1, inst.horizon + 1))
        x = rng.standard_normal(inst.d_x)
        y = rng.standard_normal(inst.d_y)
        v = rng.standard_normal(inst.d_y)
        pairs = [
            (inst.grad_x_f(t, x, y), fd(lambda z: inst.f(t, z, y), x)),
            (inst.grad_y_f(t, x, y), fd(lambda z: inst.f(t, x, z), y)),
            (inst.grad_y_g(t, x, y), fd(lambda z: inst.g(t, x, z), y)),
            (inst.grad_x_g(t, x, y), fd(lambda z: inst.g(t, z, y), x)),
            (inst.hvp_yy_g(t, x, y, v), fd(lambda z: inst.grad_y_g(t, x, z) @ v, y)),
            (inst.jvp_xy_g(t, x, y, v), fd(lambda z: inst.grad_y_g(t, z, y) @ v, x)),
        ]
        for a, b in pairs:
            assert np.linalg.norm(a - b) <= 1e-5 * max(1.0, np.linalg.norm(b))


def test_unconstrained_reference_radius():
    q = make_drifting_quadratic(2, 3, DriftPath("linear", 1), DriftPath(), 1.0)
    emax = np.max(np.linalg.norm(q.E, axis=1))
    assert q.ref_radius == pytest.approx(2 * emax + 1)
    q2 = make_drifting_quadratic(2, 3, DriftPath(), DriftPath(), 1.0, unconstrained(2), ref_radius=5.0)
    assert q2.ref_radius == 5.0
    assert math.isfinite(q2.constants.l_f0)

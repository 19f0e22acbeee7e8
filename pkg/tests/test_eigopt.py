"""Tests for the support-function global optimizer."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from dhstab import bracket_maximum, maximize_pq, minimize_pq


def multimodal(x):
    """f(x) = sin(3x) + 0.1 x^2; f'' = -9 sin(3x) + 0.2 >= -8.8 > -9.2."""
    return math.sin(3 * x) + 0.1 * x * x, 3 * math.cos(3 * x) + 0.2 * x


MULTI_GAMMA = -9.2


def multimodal_grid_min(n=100_001):
    xs = np.linspace(-5.0, 5.0, n)
    fs = np.sin(3 * xs) + 0.1 * xs * xs
    j = int(np.argmin(fs))
    lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, n - 1)]
    res = minimize_scalar(lambda x: multimodal(x)[0], bounds=(lo, hi),
                          method="bounded",
                          options={"xatol": 1e-13})
    return float(res.fun), float(res.x)


class TestMinimize:
    def test_quadratic_exact_curvature(self):
        # gamma equal to the true curvature makes the model exact after one
        # round: the minimizer lands on x = 1 immediately
        out = minimize_pq(lambda x: ((x - 1.0) ** 2, 2 * (x - 1.0)),
                          -3.0, 4.0, gamma=2.0, tol=1e-12)
        assert out.converged
        assert abs(out.x - 1.0) <= 1e-8
        assert out.value <= 1e-12
        assert out.gap <= 1e-12

    def test_multimodal_vs_grid(self):
        fref, xref = multimodal_grid_min()
        out = minimize_pq(multimodal, -5.0, 5.0, MULTI_GAMMA, tol=1e-10)
        assert out.converged
        assert abs(out.value - fref) <= 1e-6
        assert abs(out.x - xref) <= 1e-4

    def test_underestimator_at_probes(self):
        out = minimize_pq(multimodal, -5.0, 5.0, MULTI_GAMMA, tol=1e-10)
        rng = np.random.default_rng(1)
        for x in rng.uniform(-5.0, 5.0, 100):
            assert out.model_value(float(x)) <= multimodal(float(x))[0] + 1e-12

    def test_model_interpolates_evaluations(self):
        out = minimize_pq(multimodal, -5.0, 5.0, MULTI_GAMMA, tol=1e-10)
        for x, f in out.history:
            if math.isfinite(f):
                assert abs(out.model_value(x) - f) <= 1e-10 * max(1.0, abs(f))

    def test_certificates_monotone_and_sound(self):
        fref, _ = multimodal_grid_min()
        mins = []
        for k in (2, 4, 8, 16, 64):
            out = minimize_pq(multimodal, -5.0, 5.0, MULTI_GAMMA,
                              tol=1e-14, max_iter=k)
            mins.append(out.value - out.gap)   # min of the model at exit
        for lo, hi in zip(mins, mins[1:]):
            assert hi >= lo - 1e-12            # nondecreasing lower bounds
        assert all(m <= fref + 1e-10 for m in mins)

    def test_enumerated_argmin_matches_grid(self):
        # the exact envelope minimum against a fine grid plus local polish
        out = minimize_pq(multimodal, -5.0, 5.0, MULTI_GAMMA,
                          tol=1e-14, max_iter=20)
        qmin = out.value - out.gap
        xs = np.linspace(-5.0, 5.0, 10_001)
        qs = np.array([out.model_value(float(x)) for x in xs])
        j = int(np.argmin(qs))
        res = minimize_scalar(out.model_value,
                              bounds=(xs[max(j - 1, 0)],
                                      xs[min(j + 1, len(xs) - 1)]),
                              method="bounded", options={"xatol": 1e-12})
        assert qmin <= res.fun + 1e-10 * max(1.0, abs(res.fun))
        assert abs(qmin - res.fun) <= 1e-8 * max(1.0, abs(res.fun))

    def test_initial_points_recorded_first(self):
        pts = [-2.0, 0.5, 3.0]
        out = minimize_pq(multimodal, -5.0, 5.0, MULTI_GAMMA,
                          tol=1e-8, initial_points=pts)
        assert [x for x, _ in out.history[:3]] == pts

    def test_penalty_band(self):
        # an infinite band between two finite wells; dense seeding (as the
        # outer frequency searches use) keeps the repulsive penalty caps
        # localized around the band while the genuine models converge
        def banded(x):
            if abs(x) < 0.5:
                return math.inf, 0.0
            return (abs(x) - 2.0) ** 2, 2 * (abs(x) - 2.0) * np.sign(x)

        seeds = [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0]
        out = minimize_pq(banded, -4.0, 4.0, gamma=-1.0, tol=1e-8,
                          initial_points=seeds)
        assert out.n_penalties >= 1
        assert math.isinf(out.history[4][1])   # raw value kept in history
        assert out.converged
        assert abs(abs(out.x) - 2.0) <= 1e-3
        assert out.value <= 1e-6

    def test_never_finite_raises(self):
        with pytest.raises(ArithmeticError, match="never finite"):
            minimize_pq(lambda x: (math.inf, 0.0), -1.0, 1.0, gamma=0.0,
                        max_iter=10)

    def test_max_iter_exhaustion(self):
        out = minimize_pq(multimodal, -5.0, 5.0, MULTI_GAMMA,
                          tol=1e-14, max_iter=2)
        assert not out.converged
        assert out.iterations == 2

    def test_argument_validation(self):
        with pytest.raises(ValueError, match="a < b"):
            minimize_pq(multimodal, 1.0, 1.0, MULTI_GAMMA)
        with pytest.raises(ValueError, match="tol"):
            minimize_pq(multimodal, -1.0, 1.0, MULTI_GAMMA, tol=-1.0)
        with pytest.raises(ValueError, match="initial point"):
            minimize_pq(multimodal, -1.0, 1.0, MULTI_GAMMA, initial_points=[])


class TestMaximize:
    def test_concave_parabola(self):
        out = maximize_pq(lambda t: (-(t - 3.0) ** 2, -2 * (t - 3.0)),
                          -10.0, 10.0, gamma=1e-6, tol=1e-10)
        assert out.converged
        assert abs(out.x - 3.0) <= 1e-4
        assert abs(out.value) <= 1e-8

    def test_piecewise_linear_kink(self):
        def hat(t):
            # min(t+1, 1-t): concave, kink maximum at t = 0 with value 1
            if t < 0:
                return t + 1.0, 1.0
            return 1.0 - t, -1.0

        out = maximize_pq(hat, -5.0, 5.0, gamma=1e-6, tol=1e-8)
        assert out.converged
        assert abs(out.x) <= 1e-6
        assert abs(out.value - 1.0) <= 1e-7

    def test_history_keeps_original_sign(self):
        def hat(t):
            if t < 0:
                return t + 1.0, 1.0
            return 1.0 - t, -1.0

        out = maximize_pq(hat, -5.0, 5.0, gamma=1e-6, tol=1e-8)
        for x, f in out.history:
            assert abs(f - hat(x)[0]) <= 1e-14

    def test_hermitian_pencil_smallest_eigenvalue(self):
        # lambda_min(H0 + t H1) is concave in t; maximize and compare with a
        # dense grid plus local polish
        rng = np.random.default_rng(42)
        M0 = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        M1 = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        H0 = (M0 + M0.conj().T) / 2
        H1 = (M1 + M1.conj().T) / 2
        ev1 = np.linalg.eigvalsh(H1)
        assert ev1[0] < 0 < ev1[-1]    # indefinite: the maximum is attained

        def lam_min(t):
            w, V = np.linalg.eigh(H0 + t * H1)
            v = V[:, 0]
            return float(w[0]), float(np.real(v.conj() @ H1 @ v))

        out = maximize_pq(lam_min, -50.0, 50.0, gamma=1e-6, tol=1e-10)
        ts = np.linspace(-50.0, 50.0, 100_001)
        batch = H0[None] + ts[:, None, None] * H1[None]
        vals = np.linalg.eigvalsh(batch)[:, 0]
        j = int(np.argmax(vals))
        res = minimize_scalar(lambda t: -lam_min(t)[0],
                              bounds=(ts[max(j - 1, 0)],
                                      ts[min(j + 1, len(ts) - 1)]),
                              method="bounded", options={"xatol": 1e-12})
        assert abs(out.value - (-res.fun)) <= 1e-6


class TestBracketMaximum:
    def test_brackets_concave_maximum(self):
        def f(t):
            return -(t - 3.0) ** 2, -2 * (t - 3.0)

        bracket = bracket_maximum(f, start=1.0)
        assert bracket is not None
        a, b = bracket
        assert a <= 3.0 <= b
        assert f(a)[1] >= 0.0 >= f(b)[1]

    def test_unattained_supremum_returns_none(self):
        # arctan increases forever: derivative never changes sign
        assert bracket_maximum(
            lambda t: (math.atan(t), 1.0 / (1.0 + t * t)),
            start=1.0, width_cap=1e4) is None

    def test_start_validation(self):
        with pytest.raises(ValueError, match="start"):
            bracket_maximum(lambda t: (0.0, 0.0), start=0.0)

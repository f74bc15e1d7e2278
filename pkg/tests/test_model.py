import numpy as np
import pytest
from scipy.integrate import quad

from stochwave import model, noise
from stochwave.model import (
    Nonlinearity,
    Problem,
    eval_F,
    eval_G_times_increment,
    galerkin_project,
    preset,
    project_initial,
)
from stochwave.spectral_basis import StatePair, make_basis

SQ2 = np.sqrt(2.0)

# <cos(x), sqrt(2) sin(i pi x)> for i = 1..6, from scipy.integrate.quad at
# build time; they agree with the closed form
# sqrt(2) i pi (1 - cos(1) (-1)^i) / (i^2 pi^2 - 1) to 1e-16.
COS_XI_COEFFS = [
    0.7715544600283466,
    0.1061573302192083,
    0.23375817799576185,
    0.052063865093103345,
    0.13924024925335013,
    0.034586788275182405,
]


def custom_problem(n, f=None, g=None, g_constant=None):
    zero = lambda xi, u: np.zeros_like(u)  # noqa: E731
    nl = Nonlinearity(f or zero, g or zero, 1.0, g_constant)
    b = make_basis(n)
    return Problem(b, nl, noise.white(n), StatePair.zeros(b))


def test_sine_gordon_at_zero():
    p = preset("sine_gordon_strong_white", 16)
    assert np.all(eval_F(p, np.zeros(16)) == 0.0)


def test_constant_one_at_n3():
    p = custom_problem(3, f=lambda xi, u: np.ones_like(u))
    # (sqrt 2 / 4) (sin(i pi/4) + sin(i pi/2) + sin(3 i pi/4)), summed by hand
    want = [(1 + SQ2 / 2) / 2, 0.0, (1 - SQ2 / 2) / 2]
    np.testing.assert_allclose(eval_F(p, np.zeros(3)), want, atol=1e-15)


def test_sine_gordon_against_quadrature():
    n = 8
    p = preset("sine_gordon_strong_white", n)
    # same smooth field as the selftest, checked here against an adaptive quadrature
    rng = np.random.default_rng(0)
    c = np.zeros(n)
    c[:4] = 0.5 * rng.standard_normal(4) / np.arange(1, 5)

    def u(x):
        return sum(c[k] * SQ2 * np.sin((k + 1) * np.pi * x) for k in range(4))

    want = [quad(lambda x: -np.sin(u(x)) * SQ2 * np.sin(i * np.pi * x), 0, 1, limit=200)[0]
            for i in range(1, n + 1)]
    assert np.max(np.abs(eval_F(p, c) - want)) <= 1e-3


def test_nemytskij_error_shrinks_with_resolution():
    from stochwave.selftest import nemytskij_quadrature_errors

    errs = nemytskij_quadrature_errors()
    assert errs[0] <= 1e-3
    assert all(b < a or b <= 1e-13 for a, b in zip(errs, errs[1:]))


def test_g_identity_and_zero():
    rng = np.random.default_rng(0)
    u, dW = rng.standard_normal(16), rng.standard_normal(16)
    one = custom_problem(16, g=lambda xi, u: np.ones_like(u))
    np.testing.assert_allclose(eval_G_times_increment(one, u, dW), dW, atol=1e-12)
    zero = custom_problem(16)
    np.testing.assert_allclose(eval_G_times_increment(zero, u, dW), 0.0, atol=1e-15)


def test_additive_fast_path_matches_generic():
    rng = np.random.default_rng(1)
    u, dW = rng.standard_normal((4, 32)), rng.standard_normal((4, 32))
    fast = custom_problem(32, g=lambda xi, u: np.full_like(u, 1.3), g_constant=1.3)
    slow = custom_problem(32, g=lambda xi, u: np.full_like(u, 1.3))
    assert fast.nonlinearity.is_additive and not slow.nonlinearity.is_additive
    np.testing.assert_allclose(eval_G_times_increment(slow, u, dW),
                               eval_G_times_increment(fast, u, dW), atol=1e-12)


def test_multiplicative_product_of_sines():
    # g(u) = u, u = e_1, increment a e_1: pointwise 2 a sin^2(pi x)
    n, a = 64, 0.7
    p = custom_problem(n, g=lambda xi, u: u)
    e1 = np.eye(n)[0]
    got = eval_G_times_increment(p, e1, a * e1)
    want = [quad(lambda x: 2 * a * np.sin(np.pi * x) ** 2 * SQ2 * np.sin(i * np.pi * x), 0, 1,
                 limit=200)[0] for i in range(1, n + 1)]
    assert np.max(np.abs(got - want)) <= 1e-5


def test_non_finite_nonlinearity_raises():
    p = custom_problem(4, f=lambda xi, u: np.full_like(u, np.inf))
    with pytest.raises(model.NonFiniteError):
        eval_F(p, np.zeros(4))


def test_weak_preset_initial_displacement():
    p = preset("sine_gordon_weak_additive", 32)
    want = np.zeros(32)
    want[0] = 2**-0.5
    np.testing.assert_allclose(p.initial.u, want, atol=1e-14)
    assert np.all(p.initial.v == 0.0)
    assert p.nonlinearity.g_constant == 1.0


@pytest.mark.parametrize("name", ["sine_gordon_strong_white", "sine_gordon_strong_trace"])
def test_strong_preset_initial_velocity_fixture(name):
    p = preset(name, 256)
    np.testing.assert_allclose(p.initial.v[:6], COS_XI_COEFFS, rtol=0, atol=1e-14)
    assert np.all(p.initial.u == 0.0)


def test_preset_covariances():
    assert preset("sine_gordon_strong_white", 8).predicted_delta == 0.5
    tr = preset("sine_gordon_strong_trace", 8)
    np.testing.assert_allclose(tr.covariance.q, np.arange(1, 9) ** -1.1)
    assert tr.predicted_delta == 1.0


def test_linear_homogeneous_has_no_noise():
    p = preset("linear_homogeneous", 8)
    assert np.all(p.covariance.q == 0.0)
    inc = noise.sample_increments(p.covariance, 4, 0.25, 0, 0)
    assert np.all(eval_G_times_increment(p, np.ones(8), inc[0]) == 0.0)


def test_preset_overrides():
    p = preset("sine_gordon_strong_white", 8, sigma0=0.5, covariance="trace", horizon_T=2.0)
    assert p.horizon_T == 2.0 and p.predicted_delta == 1.0
    assert p.nonlinearity.g(0.3, 1.0) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        preset("no_such_preset", 8)
    with pytest.raises(ValueError):
        preset("linear_additive", 8, colour="red")


def test_problem_validation():
    b = make_basis(4)
    nl = model.sine_gordon()
    with pytest.raises(ValueError):
        Problem(b, nl, noise.white(5), StatePair.zeros(b))
    with pytest.raises(ValueError):
        Problem(b, nl, noise.white(4), StatePair.zeros(b), horizon_T=0.0)


def test_project_initial_examples():
    b = make_basis(8)
    X = project_initial(b, lambda x: np.zeros_like(x), lambda x: SQ2 * np.sin(3 * np.pi * x))
    assert np.all(X.u == 0.0)
    np.testing.assert_allclose(X.v, np.eye(8)[2], atol=1e-14)
    Y = project_initial(b, lambda x: np.sin(np.pi * x), lambda x: 0.0 * x)
    np.testing.assert_allclose(Y.u, np.eye(8)[0] / SQ2, atol=1e-14)


def test_galerkin_projection_of_sine():
    b = make_basis(16)
    np.testing.assert_allclose(galerkin_project(b, lambda x: np.sin(np.pi * x)),
                               np.eye(16)[0] / SQ2, atol=1e-14)


def test_lipschitz_check():
    assert model.check_assumption(model.sine_gordon(0.0, 1.0))
    bad = Nonlinearity(lambda xi, u: u**2, lambda xi, u: u, 1.0)
    with pytest.warns(RuntimeWarning):
        assert not model.check_assumption(bad)

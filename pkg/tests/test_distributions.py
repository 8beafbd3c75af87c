from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from symnorm import groups
from symnorm.distributions import (
    MatrixFisher3, UniformArc2, WrappedGaussian2, a_ratio, circular_std, fisher_log_normalizer, fit,
    fit_report, invert_a, log_density, mean_model, model_from_json, model_to_json, proper_svd,
    reference_sample, sample, sample_matrix_fisher,
)
from symnorm.errors import ConfigError, DataError, DispersionError, SaturationError
from symnorm.groups import SO3

F_RING = np.diag([100.0, 0.001, 0.001])


def deg(x):
    return np.deg2rad(x)


def isotropic_quadrature(s, weight=lambda t: 1.0):
    """Integral of weight(theta) * exp(s (1 + 2 cos theta)) under the Haar angle law."""
    f = lambda t: weight(t) * np.exp(s * (1 + 2 * np.cos(t))) * (1 - np.cos(t)) / np.pi
    return integrate.quad(f, 0.0, np.pi, epsabs=0, epsrel=1e-12, limit=200)[0]


def coth_minus_inv(s):
    """High-precision oracle for A(s) using Decimal exponentials."""
    getcontext().prec = 60
    x = Decimal(repr(float(s)))
    e = (2 * x).exp()
    return float((e + 1) / (e - 1) - 1 / x)


# --- models ---------------------------------------------------------------------

@pytest.mark.parametrize("bad", [lambda: UniformArc2(0.0), lambda: UniformArc2(4.0),
                                 lambda: WrappedGaussian2(-0.1), lambda: WrappedGaussian2(np.inf),
                                 lambda: MatrixFisher3(np.zeros((2, 2)))])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ConfigError):
        bad()


@pytest.mark.parametrize("model", [UniformArc2(0.7), WrappedGaussian2(0.3), MatrixFisher3(F_RING)])
def test_model_json_roundtrip(model):
    assert model_from_json(model_to_json(model)) == model


def test_model_from_json_errors():
    with pytest.raises(DataError):
        model_from_json({"family": "uniform_arc"})
    with pytest.raises(DataError):
        model_from_json({"family": "cauchy", "x": 1})


def test_proper_svd_has_rotation_factors():
    m = np.random.default_rng(0).normal(size=(3, 3))
    m[:, 0] *= -1 if np.linalg.det(m) > 0 else 1  # force det < 0
    u, s, vt = proper_svd(m)
    assert np.linalg.det(u) == pytest.approx(1.0)
    assert np.linalg.det(vt) == pytest.approx(1.0)
    assert s[-1] < 0
    assert np.allclose(u @ np.diag(s) @ vt, m)


# --- sampling -----------------------------------------------------------------

def test_uniform_arc_inverse_cdf_extremes():
    a = sample(UniformArc2(deg(60)), 100_000, np.random.default_rng(1))
    assert deg(-60) <= a.min() <= deg(-59)
    assert deg(59) <= a.max() <= deg(60)
    assert abs(np.rad2deg(a.mean())) < 1.0


def test_uniform_arc_ks_against_analytic_cdf():
    a = sample(UniformArc2(deg(60)), 10_000, np.random.default_rng(2))
    assert stats.kstest(a, stats.uniform(deg(-60), deg(120)).cdf).statistic < 0.02


def test_wrapped_gaussian_ks_against_wrapped_cdf():
    sigma = deg(64)

    def cdf(x):
        # mass of the unwrapped normal falling in (-pi, x] on every sheet
        k = np.arange(-5, 6)[:, None]
        x = np.atleast_1d(x)[None, :]
        return (stats.norm.cdf(x + 2 * np.pi * k, scale=sigma)
                - stats.norm.cdf(-np.pi + 2 * np.pi * k, scale=sigma)).sum(axis=0)

    a = sample(WrappedGaussian2(sigma), 10_000, np.random.default_rng(3))
    assert stats.kstest(a, cdf).statistic < 0.02


def test_sampling_is_deterministic():
    for model in (UniformArc2(1.0), WrappedGaussian2(0.5), MatrixFisher3(np.eye(3))):
        a = sample(model, 50, np.random.default_rng(4))
        b = sample(model, 50, np.random.default_rng(4))
        assert np.array_equal(a, b)


def test_zero_sigma_gives_identity():
    assert np.all(sample(WrappedGaussian2(0.0), 10, np.random.default_rng(0)) == 0.0)


def test_matrix_fisher_zero_is_haar():
    q = sample(MatrixFisher3(np.zeros((3, 3))), 10_000, np.random.default_rng(5))
    assert np.max(np.abs(groups.quat_to_matrix(q).mean(axis=0))) < 0.03


@pytest.mark.parametrize("s", [5.0, 50.0])
def test_isotropic_fisher_trace_matches_quadrature(s):
    q = sample(MatrixFisher3(s * np.eye(3)), 10_000, np.random.default_rng(6))
    got = np.trace(groups.quat_to_matrix(q), axis1=1, axis2=2).mean()
    want = isotropic_quadrature(s, lambda t: 1 + 2 * np.cos(t)) / isotropic_quadrature(s)
    assert got == pytest.approx(want, abs=0.02)


def test_ring_concentrates_first_column_like_von_mises_fisher():
    q = sample(MatrixFisher3(F_RING), 10_000, np.random.default_rng(7))
    angle = np.arccos(np.clip(groups.quat_to_matrix(q)[:, 0, 0], -1, 1))
    # R e1 is Haar-uniform on the sphere, so under exp(100 R11) it is von Mises-Fisher
    # with kappa = 100; sample its polar angle exactly by inverse CDF
    u = np.random.default_rng(8).uniform(size=200_000)
    w = 1 + np.log(u + (1 - u) * np.exp(-200.0)) / 100.0
    oracle = np.arccos(np.clip(w, -1, 1)).mean()
    assert angle.mean() < 0.2
    assert angle.mean() == pytest.approx(oracle, rel=0.05)


@pytest.mark.parametrize("F", [F_RING, np.diag([0.001, 100.0, 0.001]), 5 * np.eye(3), 50 * np.eye(3)])
def test_metropolis_acceptance_in_healthy_band(F):
    _, acc = sample_matrix_fisher(F, 2000, np.random.default_rng(9))
    assert 0.2 <= acc <= 0.6


def test_reference_sample_quantiles():
    r = reference_sample(UniformArc2(1.0), 4)
    assert np.allclose(r, [-0.75, -0.25, 0.25, 0.75])
    r = reference_sample(WrappedGaussian2(0.2), 1001)
    assert r[500] == 0.0
    assert np.allclose(r, -r[::-1])


# --- densities and the normalizer --------------------------------------------------

def test_uniform_arc_density():
    m = UniformArc2(deg(60))
    assert log_density(m, deg(90)) == -np.inf
    assert log_density(m, 0.0) == log_density(m, deg(30)) == pytest.approx(-np.log(2 * deg(60)))


@pytest.mark.parametrize("sigma", [0.1, 1.0, 3.0])
def test_wrapped_gaussian_density_integrates_to_one(sigma):
    m = WrappedGaussian2(sigma)
    total = integrate.quad(lambda t: np.exp(log_density(m, t)), -np.pi, np.pi, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-9)


def test_wrapped_gaussian_density_decreases_away_from_identity():
    t = np.linspace(0, np.pi, 50)
    assert np.all(np.diff(log_density(WrappedGaussian2(0.6), t)) < 0)


def test_normalizer_of_zero_is_exactly_zero():
    assert fisher_log_normalizer(np.zeros((3, 3))) == 0.0


@pytest.mark.parametrize("s", [0.5, 2.0, 5.0])
def test_isotropic_normalizer_matches_quadrature(s):
    est = np.exp(fisher_log_normalizer(s * np.eye(3)))
    assert est == pytest.approx(isotropic_quadrature(s), rel=0.05)


def test_normalizer_invariant_under_rotation_of_both_sides():
    rng = np.random.default_rng(10)
    F = np.diag([3.0, 1.0, 0.5])
    U, V = groups.quat_to_matrix(groups.sample_haar(SO3, 2, rng))
    a = fisher_log_normalizer(F)
    b = fisher_log_normalizer(U.T @ F @ V, seed=1)
    assert np.exp(b) == pytest.approx(np.exp(a), rel=0.05)


def test_normalizer_needs_enough_draws():
    with pytest.raises(ValueError):
        fisher_log_normalizer(np.eye(3), n_mc=10)


def test_fisher_mode_scores_above_far_rotation():
    m = MatrixFisher3(20 * np.eye(3))
    far = groups.so3_exp(np.array([np.pi, 0, 0]))
    assert log_density(m, groups.identity(SO3)) - log_density(m, far) > 0
    # the normalizer cancels in the difference: tr(F^T (I - R_far)) = 20 * 4
    assert log_density(m, groups.identity(SO3)) - log_density(m, far) == pytest.approx(80.0)


# --- the moment ratio ---------------------------------------------------------------

def test_a_ratio_at_zero():
    assert a_ratio(0.0) == 0.0


@pytest.mark.parametrize("s", [1e-8, 1e-5, 1e-3, 0.01, 0.3, 0.99, 1.0, 1.5, 2.0, 10.0, 300.0])
def test_a_ratio_matches_high_precision(s):
    assert a_ratio(s) == pytest.approx(coth_minus_inv(s), rel=1e-14)


def test_invert_a_roundtrip_at_two():
    assert invert_a(a_ratio(2.0)) == pytest.approx(2.0, abs=1e-8)


def test_a_ratio_monotone_on_grid():
    s = np.arange(1, 10_001) * 0.01
    a = np.array([a_ratio(x) for x in s])
    assert np.all(np.diff(a) > 0)


@settings(max_examples=300)
@given(st.floats(min_value=1e-6, max_value=1e3))
def test_invert_a_roundtrip_relative(s):
    assert invert_a(a_ratio(s)) == pytest.approx(s, rel=1e-8)


def test_invert_a_saturates():
    with pytest.raises(SaturationError):
        invert_a(1.0)


# --- fitting --------------------------------------------------------------------

def test_uniform_arc_fit_on_exact_grid():
    m = fit("uniform_arc", deg(np.arange(-60, 61)))
    assert abs(np.rad2deg(m.half_width) - 60.0) < 2.0


def test_uniform_arc_fit_reports_robust_estimate():
    rep = fit_report("uniform_arc", deg(np.linspace(-60, 60, 1001)))
    assert np.rad2deg(rep.robust_half_width) == pytest.approx(60.0, abs=0.1)


def test_point_mass_clamps_half_width():
    rep = fit_report("uniform_arc", np.zeros(10))
    assert "dispersion_too_low" in rep.flags
    assert rep.model.half_width < 1e-8


def test_uniform_fit_on_uniform_circle_raises():
    with pytest.raises(DispersionError):
        fit("uniform_arc", np.linspace(-np.pi, np.pi, 100, endpoint=False))


def test_wrapped_gaussian_fit_over_twenty_seeds():
    for seed in range(20):
        s = sample(WrappedGaussian2(deg(32)), 500, np.random.default_rng(seed))
        assert abs(np.rad2deg(fit("wrapped_gaussian", s).sigma) - 32.0) < 3.0


def test_ddof_matches_numpy_std():
    x = np.random.default_rng(11).uniform(-0.5, 0.5, 30)
    x -= x.mean()
    assert circular_std(x, ddof=1) == pytest.approx(np.std(x, ddof=1))


def test_matrix_fisher_fit_from_64_samples():
    q = sample(MatrixFisher3(F_RING), 64, np.random.default_rng(12))
    F = fit("matrix_fisher", q).F
    u, s, _ = np.linalg.svd(F)
    assert np.rad2deg(np.arccos(min(1.0, abs(u[0, 0])))) < 10.0
    assert s[0] >= 20.0
    assert s[1] <= 1.0 and s[2] <= 1.0


def test_matrix_fisher_fit_saturates_on_point_mass():
    rep = fit_report("matrix_fisher", np.tile(groups.identity(SO3), (5, 1)))
    assert "saturated" in rep.flags
    assert np.allclose(rep.model.F, 1e3 * np.eye(3))


def test_matrix_fisher_fit_is_right_equivariant():
    rng = np.random.default_rng(13)
    q = sample(MatrixFisher3(np.diag([4.0, 2.0, 1.0])), 200, rng)
    h = groups.sample_haar(SO3, 1, rng)[0]
    a = fit("matrix_fisher", groups.so3_compose(q, h)).mode()
    b = groups.so3_compose(fit("matrix_fisher", q).mode(), h)
    assert groups.so3_distance(a, b) < 1e-6


def _param_error(model, n, seeds=20):
    errs = []
    for s in range(seeds):
        est = fit(model.family, sample(model, n, np.random.default_rng([s, n])))
        if isinstance(model, MatrixFisher3):
            errs.append(np.linalg.norm(est.F - model.F))
        else:
            errs.append(abs(next(iter(est.params.values())) - next(iter(model.params.values()))))
    return np.mean(errs)


@pytest.mark.slow
@pytest.mark.parametrize("model", [UniformArc2(deg(60)), WrappedGaussian2(deg(32)),
                                   MatrixFisher3(np.diag([8.0, 4.0, 2.0]))])
def test_fit_error_shrinks_with_n(model):
    e = [_param_error(model, n) for n in (64, 512, 4096)]
    assert e[0] > e[1] > e[2]


def test_mean_model():
    assert mean_model([UniformArc2(1.0), UniformArc2(2.0)]).half_width == pytest.approx(1.5)
    assert np.allclose(mean_model([MatrixFisher3(np.eye(3)), MatrixFisher3(3 * np.eye(3))]).F, 2 * np.eye(3))
    with pytest.raises(DataError):
        mean_model([UniformArc2(1.0), WrappedGaussian2(1.0)])

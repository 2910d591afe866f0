import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoedit import (AffineSubspace, Circle, GaussianComponent, Schedule, ScoreField, make_affine_gaussian,
                     make_curve_tube)
from geoedit.score import ConfigurationError, make_field, standard_gaussian


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_single_gaussian_closed_form(schedule):
    mu = np.array([1.0, -0.5, 2.0])
    f = ScoreField([GaussianComponent(1.0, tuple(mu), 0.3)], schedule)
    x = np.array([0.2, 0.1, -0.4])
    t = 0.4
    a, s = schedule.alpha_sigma(t)
    assert np.allclose(f.score(x, t), -(x - a * mu) / (0.3 * a * a + s * s))


def test_standard_gaussian_is_stationary(schedule, rng):
    f = standard_gaussian(4, schedule)
    x = rng.standard_normal((7, 4))
    for t in (0.0, 0.3, 1.0):
        assert np.allclose(f.score(x, t), -x)


def test_score_is_gradient_of_log_density(schedule, rng):
    comps = [GaussianComponent(0.2, (0.0, 1.0), 0.05), GaussianComponent(0.5, (1.0, -1.0), 0.2),
             GaussianComponent(0.3, (-2.0, 0.5), 1.0)]
    f = ScoreField(comps, schedule)
    for t in (0.01, 0.2, 0.8):
        x = rng.standard_normal(2)
        assert np.allclose(f.score(x, t), fd_grad(lambda y: f.log_density(y, t), x), atol=1e-5)


def test_batch_matches_single(parabola_field, rng):
    x = rng.standard_normal((5, 2))
    batch = parabola_field.score(x, 0.3)
    for i in range(5):
        assert np.array_equal(batch[i], parabola_field.score(x[i], 0.3))


def test_far_point_is_finite(parabola_field):
    # log-sum-exp keeps responsibilities finite far from every centre
    s = parabola_field.score(np.array([80.0, -60.0]), 0.001)
    assert np.all(np.isfinite(s))
    r = parabola_field.responsibilities(np.array([80.0, -60.0]), 0.001)
    assert r.sum() == pytest.approx(1.0)


def test_anisotropic_matches_isotropic(schedule, rng):
    iso = ScoreField([GaussianComponent(0.4, (0.0, 1.0), 0.3), GaussianComponent(0.6, (1.0, 0.0), 0.7)], schedule)
    aniso = ScoreField([GaussianComponent(0.4, (0.0, 1.0), covariance=0.3 * np.eye(2)),
                        GaussianComponent(0.6, (1.0, 0.0), covariance=0.7 * np.eye(2))], schedule)
    x = rng.standard_normal((6, 2))
    assert np.allclose(iso.score(x, 0.25), aniso.score(x, 0.25))
    assert np.allclose(iso.log_density(x, 0.25), aniso.log_density(x, 0.25))


def test_anisotropic_closed_form(schedule):
    cov = np.array([[2.0, 0.6], [0.6, 0.5]])
    mu = np.array([0.3, -1.0])
    f = ScoreField([GaussianComponent(1.0, tuple(mu), covariance=cov)], schedule)
    t = 0.15
    a, s = schedule.alpha_sigma(t)
    x = np.array([1.0, 2.0])
    expect = -np.linalg.solve(a * a * cov + s * s * np.eye(2), x - a * mu)
    assert np.allclose(f.score(x, t), expect)


def test_weights_must_sum_to_one(schedule):
    with pytest.raises(ValueError):
        ScoreField([GaussianComponent(0.5, (0.0,), 1.0), GaussianComponent(0.4, (1.0,), 1.0)], schedule)


def test_dimension_mismatch(parabola_field):
    with pytest.raises(ValueError):
        parabola_field.score(np.zeros(3), 0.5)


def test_curve_tube_checks(schedule):
    c = Circle(1.0)
    with pytest.raises(ConfigurationError):
        make_curve_tube(c, 1, 0.05, schedule)
    with pytest.raises(ConfigurationError):
        make_curve_tube(c, 64, 1.5, schedule)


def test_curve_tube_periodic_spacing(schedule):
    f = make_curve_tube(Circle(1.0), 8, 0.05, schedule)
    # periodic curves skip the duplicated endpoint
    assert len({tuple(np.round(m, 12)) for m in f.means}) == 8
    assert np.allclose(np.linalg.norm(f.means, axis=1), 1.0)


def test_sample_moments(schedule):
    f = ScoreField([GaussianComponent(1.0, (2.0, -1.0), 0.5)], schedule)
    x = f.sample(40000, np.random.default_rng(0), t=0.3)
    a, s = schedule.alpha_sigma(0.3)
    assert np.allclose(x.mean(0), a * np.array([2.0, -1.0]), atol=0.02)
    assert np.allclose(x.var(0), 0.5 * a * a + s * s, rtol=0.03)


def test_affine_gaussian_field(schedule):
    sub = AffineSubspace(np.array([[1.0], [1.0]]), offset=[0.0, 1.0])
    f = make_affine_gaussian(sub, 1.0, 0.01, schedule)
    # the score at the offset vanishes
    assert np.allclose(f.score(np.array([0.0, 1.0]) * schedule.alpha_sigma(0.5)[0], 0.5), 0, atol=1e-12)


def test_make_field_kinds(schedule):
    assert make_field({"kind": "standard_gaussian", "dim": 3}, schedule).dim == 3
    f = make_field({"kind": "components", "components": [{"weight": 1.0, "mean": [0, 0], "variance": 2.0}]}, schedule)
    assert f.dim == 2
    with pytest.raises(ConfigurationError):
        make_field({"kind": "nope"}, schedule)


@given(st.floats(0.01, 1.0), st.floats(-3, 3), st.floats(-3, 3))
def test_mixture_score_is_responsibility_average(t, x0, x1):
    f = ScoreField([GaussianComponent(0.3, (0.0, 0.0), 0.2), GaussianComponent(0.7, (1.0, 1.0), 0.4)], Schedule())
    x = np.array([x0, x1])
    r = f.responsibilities(x, t)
    means, var = f.diffused_params(t)
    expect = sum(r[j] * (means[j] - x) / var[j] for j in range(2))
    assert np.allclose(f.score(x, t), expect)

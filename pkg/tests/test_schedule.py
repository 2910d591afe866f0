import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoedit import DomainError, Schedule
from geoedit.schedule import t_for_sigma


def test_defaults():
    s = Schedule()
    assert (s.kind, s.beta0, s.beta1, s.T) == ("linear", 0.1, 20.0, 1.0)


def test_linear_beta_endpoints():
    s = Schedule()
    assert s.beta(0.0) == pytest.approx(0.1)
    assert s.beta(1.0) == pytest.approx(20.0)
    assert s.beta(0.5) == pytest.approx(10.05)


def test_integral_matches_quadrature():
    s = Schedule(beta0=0.3, beta1=12.0, horizon=2.0)
    ts = np.linspace(0, 1.3, 20001)
    trap = getattr(np, "trapezoid", None) or np.trapz
    quad = trap(s.beta(ts), ts)
    assert s.integral(1.3) == pytest.approx(quad, rel=1e-9)


def test_constant_schedule():
    s = Schedule(kind="constant", beta0=2.0)
    assert s.beta(0.7) == 2.0
    alpha, sigma = s.alpha_sigma(0.5)
    assert alpha == pytest.approx(math.exp(-0.5))


def test_alpha_sigma_at_zero():
    assert Schedule().alpha_sigma(0.0) == (1.0, 0.0)


def test_sigma_accurate_for_tiny_t():
    s = Schedule()
    t = 1e-12
    # sigma^2 ~ beta0 t, which 1 - exp(-B) would lose to cancellation
    assert s.alpha_sigma(t)[1] ** 2 == pytest.approx(0.1 * t, rel=1e-6)


@given(st.floats(0.0, 1.0), st.sampled_from(["linear", "constant"]))
def test_variance_preserving(t, kind):
    a, s = Schedule(kind=kind).alpha_sigma(t)
    assert a * a + s * s == pytest.approx(1.0, abs=1e-12)
    assert 0 < a <= 1 and 0 <= s < 1


@given(st.floats(0.0, 0.999), st.floats(1e-3, 1e-3 + 0.0009))
def test_alpha_decreasing(t, dt):
    s = Schedule()
    assert s.alpha_sigma(min(1.0, t + dt))[0] < s.alpha_sigma(t)[0]


def test_vectorised():
    a, s = Schedule().alpha_sigma(np.array([0.0, 0.5, 1.0]))
    assert a.shape == (3,) and np.allclose(a**2 + s**2, 1)


@pytest.mark.parametrize("t", [-0.1, 1.5, float("nan")])
def test_domain_error(t):
    with pytest.raises(DomainError):
        Schedule().alpha_sigma(t)


def test_bad_kind():
    with pytest.raises(ValueError):
        Schedule(kind="cosine")


def test_forward_perturb():
    s = Schedule()
    x0 = np.array([1.0, -2.0])
    eps = np.array([0.5, 0.5])
    a, sg = s.alpha_sigma(0.3)
    assert np.allclose(s.forward_perturb(x0, 0.3, eps), a * x0 + sg * eps)
    with pytest.raises(ValueError):
        s.forward_perturb(x0, 0.3, np.zeros(3))


def test_roundtrip_dict():
    s = Schedule(kind="constant", beta0=1.5, horizon=3.0)
    assert Schedule.from_dict(s.to_dict()) == s


@given(st.floats(0.01, 0.99))
def test_t_for_sigma_inverts(sig):
    s = Schedule()
    assert s.alpha_sigma(t_for_sigma(s, sig))[1] == pytest.approx(sig, rel=1e-9)

import math

import numpy as np
import pytest

from pullback_lab.errors import HypothesisViolation
from pullback_lab.problem import (DelayKernel, DiffusionLaw, ProbeGrid, TimeProfile, audit,
                                  cubic_nonlinearity, require_audited, zero_nonlinearity)
from pullback_lab.scenarios import SCENARIOS, default_scenario

FAST = ProbeGrid(u_points=2001, t_points=2001, s_points=1001, pairs=500, segments=16)


def test_cubic_constants_pass():
    spec = default_scenario("cubic-delayed")
    f = spec.nonlinearity
    assert (f.C0, f.C2, f.eta_tilde, f.p) == (1.0, 0.5, 1.0, 4.0)
    rep = audit(spec, FAST)
    assert rep.check("one-sided-lipschitz").passed
    assert rep.check("dissipativity").passed
    assert rep.check("antiderivative").passed


def test_small_m_fails_diffusion_bounds():
    spec = default_scenario("cubic-delayed").replace(diffusion=DiffusionLaw(base=2.0))
    rep = audit(spec, FAST)
    assert not rep.check("diffusion-bounds").passed
    with pytest.raises(HypothesisViolation) as exc:
        rep.raise_if_failed()
    assert exc.value.name == "diffusion-bounds"


def test_zero_delay_passes():
    spec = default_scenario("cubic-delayed").replace(delay=DelayKernel(kind="none"))
    rep = audit(spec, FAST)
    for name in ("delay-zero", "delay-lipschitz", "delay-measurable"):
        assert rep.check(name).passed
    assert rep.derived["C_g"] == 0.0


def test_understated_delay_constant_fails():
    delay = DelayKernel(kind="discrete", lag=1.0, gain=0.5, lipschitz_bound=0.1)
    rep = audit(default_scenario("cubic-delayed").replace(delay=delay), FAST)
    assert not rep.check("delay-lipschitz").passed


def test_lag_outside_window_fails():
    delay = DelayKernel(kind="discrete", window=1.0, lag=1.5, gain=0.5)
    rep = audit(default_scenario("cubic-delayed").replace(delay=delay), FAST)
    assert not rep.check("delay-lag").passed


def test_bad_dissipativity_constant_fails():
    f = cubic_nonlinearity(1.0, 1.0, C2=2.0)
    rep = audit(default_scenario("cubic-delayed").replace(nonlinearity=f), FAST)
    assert not rep.check("dissipativity").passed


def test_overstated_one_sided_constant_fails():
    f = cubic_nonlinearity(1.0, 1.0, eta_tilde=0.5)
    rep = audit(default_scenario("cubic-delayed").replace(nonlinearity=f), FAST)
    assert not rep.check("one-sided-lipschitz").passed


def test_eps_not_tending_to_one_fails():
    spec = default_scenario("cubic-delayed").replace(epsilon=TimeProfile(level=2.0))
    rep = audit(spec, FAST)
    assert not rep.check("eps-limit").passed


def test_eps_below_floor_fails():
    spec = default_scenario("cubic-delayed").replace(
        epsilon=TimeProfile(kind="increasing-tanh", amplitude=2.5))
    rep = audit(spec, FAST)
    assert not rep.check("eps-positive").passed


def test_profile_monotonicity():
    t = np.linspace(-50, 50, 2001)
    assert np.all(TimeProfile(kind="decreasing-tanh", amplitude=0.5).derivative(t) <= 0)
    assert np.all(TimeProfile(kind="increasing-tanh", amplitude=0.5).derivative(t) >= 0)


def test_decreasing_profile_sup():
    p = TimeProfile(kind="decreasing-tanh", amplitude=0.5)
    t = np.linspace(-60, 60, 100001)
    assert np.max(np.abs(p.value(t))) <= 1.5 + 1e-12
    assert p.sup_abs() == 1.5
    # sup(|eps| + |eps'|) from calculus on the tanh profile
    assert np.max(np.abs(p.value(t)) + np.abs(p.derivative(t))) <= p.bound + 1e-12
    assert p.bound == pytest.approx(1.5625)


def test_custom_profile_spline():
    p = TimeProfile(kind="custom-sampled", times=(-60.0, 0.0, 60.0), values=(1.0, 1.0, 1.0))
    assert p.value(3.0) == pytest.approx(1.0)
    assert p.derivative(3.0) == pytest.approx(0.0, abs=1e-14)


def test_derivative_matches_finite_difference():
    for kind in ("decreasing-tanh", "increasing-tanh"):
        p = TimeProfile(kind=kind, amplitude=0.4)
        t = np.linspace(-3, 3, 13)
        h = 1e-6
        fd = (p.value(t + h) - p.value(t - h)) / (2 * h)
        assert np.allclose(fd, p.derivative(t), atol=1e-8)


def test_zero_nonlinearity_note():
    spec = default_scenario("linear-single-mode")
    rep = audit(spec)
    assert rep.passed
    assert any("f = 0" in n for n in rep.notes)
    assert spec.nonlinearity == zero_nonlinearity()


def test_derived_tilde_constants():
    rep = audit(default_scenario("cubic-delayed"), FAST)
    f = default_scenario("cubic-delayed").nonlinearity
    assert rep.derived["Ctilde2"] == pytest.approx(f.C2 / (2 * f.p))
    assert rep.derived["Ctilde1"] == pytest.approx(2 * f.C1 / f.p)
    # F(u) = u^2/2 - u^4/4 >= -Ct0 - Ct1 u^4 and <= Ct0 - Ct2 u^4
    u = np.linspace(-10, 10, 20001)
    F = f.antiderivative(u)
    c0, c1, c2 = (rep.derived[k] for k in ("Ctilde0", "Ctilde1", "Ctilde2"))
    assert np.all(F <= c0 - c2 * u ** 4 + 1e-9)
    assert np.all(F >= -c0 - c1 * u ** 4 - 1e-9)


@pytest.mark.parametrize("name", SCENARIOS)
def test_shipped_scenarios_pass(name):
    require_audited(default_scenario(name))


def test_audit_deterministic():
    spec = default_scenario("cubic-delayed")
    a = audit(spec, FAST)
    b = audit(spec, FAST)
    assert [(c.name, c.passed, c.witness) for c in a.checks] == \
           [(c.name, c.passed, c.witness) for c in b.checks]
    assert a.derived == b.derived


def test_domain_measure():
    spec = default_scenario("cubic-delayed")
    assert spec.domain.measure == spec.domain.length == pytest.approx(math.pi)

import io
import math

import numpy as np
import pytest

from pullback_lab.errors import DegenerateMass, TimestampMismatch
from pullback_lab.history import HistorySegment
from pullback_lab.oracle import single_mode_closed_form
from pullback_lab.problem import DelayKernel, Forcing, InitialHistory, TimeProfile
from pullback_lab.scenarios import default_scenario
from pullback_lab.solver import (TRAJECTORY_COLUMNS, SolverConfig, continuous_dependence,
                                 integrate, rhs, write_trajectory_csv)
from pullback_lab.spectral import SpectralField


def linear():
    return default_scenario("linear-single-mode")


def segment_for(spec, history, tau=0.0, dt=0.01):
    return HistorySegment(spec.k, dt, spec.domain.mode_count).seed(history, tau)


def test_rhs_single_mode():
    spec = linear()
    out = rhs(0.0, SpectralField(np.array([2.0]), 0.0), None, spec)
    assert out.coefficients[0] == pytest.approx(-3.0, abs=1e-15)


def test_rhs_rest_state():
    spec = default_scenario("cubic-delayed").replace(forcing=Forcing())
    zero = InitialHistory()
    seg = segment_for(spec, zero)
    out = rhs(0.0, np.zeros(spec.domain.mode_count), seg, spec)
    assert np.all(out.coefficients == 0.0)


def test_rhs_discrete_delay():
    spec = linear().replace(delay=DelayKernel(kind="discrete", window=1.0, lag=1.0, gain=0.5))
    hist = InitialHistory.constant([1.0])
    out = rhs(0.0, np.array([1.0]), segment_for(spec, hist), spec)
    assert out.coefficients[0] == pytest.approx(-1.25, abs=1e-14)


def test_degenerate_mass():
    spec = linear().replace(epsilon=TimeProfile(level=-1.0))
    with pytest.raises(DegenerateMass):
        rhs(0.0, np.array([1.0]), None, spec)


def test_closed_form_linear():
    rec = integrate(linear(), SolverConfig(dt=1e-3), 0.0, 1.0)
    exact = single_mode_closed_form(3.0, 1.0, 1.0, 1.0, 0.0, 1.0)
    assert abs(rec.final_state[0] - exact) / exact < 1e-10
    full = np.exp(-1.5 * (rec.times - 0.0))
    assert np.allclose(rec.states[:, 0], full, rtol=1e-10)


def test_order_four():
    spec = default_scenario("cubic-delayed")
    ends = [integrate(spec, SolverConfig(dt=dt), 0.0, 1.0).final_state
            for dt in (1 / 25, 1 / 50, 1 / 100)]
    r = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert 12 < r < 20


def test_zero_rest_state():
    spec = default_scenario("cubic-delayed").replace(forcing=Forcing(),
                                                     initial_history=InitialHistory())
    rec = integrate(spec, SolverConfig(dt=0.05), 0.0, 3.0)
    assert np.all(rec.states == 0.0)
    assert np.all(rec.monitors["C_Ht_sq"] == 0.0)


def test_deterministic():
    spec = default_scenario("decreasing-eps")
    cfg = SolverConfig(dt=0.02, record_every=5)
    a = integrate(spec, cfg, -1.0, 1.0)
    b = integrate(spec, cfg, -1.0, 1.0)
    assert np.array_equal(a.states, b.states)
    for key in a.monitors:
        assert np.array_equal(a.monitors[key], b.monitors[key])


def test_energy_residual_small():
    rec = integrate(default_scenario("increasing-eps"), SolverConfig(dt=1e-2), 0.0, 2.0)
    assert np.max(np.abs(rec.monitors["energy_residual"])) < 1e-5


def test_final_segment_span():
    rec = integrate(default_scenario("cubic-delayed"), SolverConfig(dt=0.05), 0.0, 2.0)
    seg = rec.final_segment
    assert seg.times[0] == pytest.approx(1.0)
    assert seg.times[-1] == pytest.approx(2.0)
    assert np.array_equal(seg.values[-1], rec.final_state)


def test_record_every():
    rec = integrate(linear(), SolverConfig(dt=1e-2, record_every=10), 0.0, 1.0)
    assert rec.times.shape == (11,)
    assert np.allclose(np.diff(rec.times), 0.1)
    with pytest.raises(ValueError):
        rec.full_path()


@pytest.mark.parametrize("cfg", [
    SolverConfig(dt=0.3),            # does not divide k
    SolverConfig(dt=0.25),           # > k / 16
    SolverConfig(dt=-0.01),
    SolverConfig(dt=0.01, record_every=0),
    SolverConfig(dt=0.01, order="euler"),
])
def test_config_rejected(cfg):
    with pytest.raises(ValueError):
        cfg.validated(linear())


def test_bad_interval():
    with pytest.raises(ValueError):
        integrate(linear(), SolverConfig(dt=0.01), 0.0, 0.005)


def test_grid_default():
    assert SolverConfig().validated(default_scenario("cubic-delayed")).grid_size == 33


def test_csv_schema():
    rec = integrate(linear(), SolverConfig(dt=0.01, record_every=50), 0.0, 1.0)
    buf = io.StringIO()
    write_trajectory_csv(rec, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == 4
    last = [float(x) for x in lines[-1].split(",")]
    assert last[0] == 1.0
    assert last[1] == rec.monitors["L2_sq"][-1]


def test_dependence_identical():
    spec = default_scenario("cubic-delayed")
    rep = continuous_dependence(spec, SolverConfig(dt=0.05), 0.0, 2.0,
                                spec.initial_history, spec.initial_history)
    assert np.all(rep.distance_sq == 0.0)
    assert rep.rate == 0.0


def test_dependence_linear_ratio():
    spec = linear()
    rep = continuous_dependence(spec, SolverConfig(dt=1e-3), 0.0, 2.0,
                                InitialHistory.constant([1.0]), InitialHistory.constant([2.0]))
    # u1 - u2 = -exp(-1.5 t); windowed sup over [t-1, t] sits at the oldest node
    t = rep.times
    oldest = np.maximum(t - 1.0, 0.0)
    expected = 2.0 * np.exp(-3.0 * oldest)   # |u|^2 + eps |grad u|^2 with lambda1 = eps = 1
    assert np.allclose(rep.distance_sq, expected, rtol=1e-9)
    assert rep.rate <= 0.0


def test_dependence_cubic_finite():
    spec = default_scenario("cubic-delayed")
    near = InitialHistory(terms=spec.initial_history.terms + ((type(spec.initial_history.terms[0])
                                                                (mode=1, value=1e-3)),))
    rep = continuous_dependence(spec, SolverConfig(dt=0.02), 0.0, 3.0, spec.initial_history, near)
    assert math.isfinite(rep.rate)
    assert np.all(rep.distance_sq <= np.exp(rep.rate * (rep.times + spec.k)) *
                  rep.distance_sq[0] * (1 + 1e-12))


def test_window_norms_mismatch():
    spec = linear()
    a = integrate(spec, SolverConfig(dt=0.01), 0.0, 1.0)
    b = integrate(spec, SolverConfig(dt=0.01), 0.5, 1.5)
    with pytest.raises(TimestampMismatch):
        a.window_norms(spec.eigenvalues, spec.epsilon.value, other=b)

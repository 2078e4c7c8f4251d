"""Faedo-Galerkin mode equations integrated by method-of-steps RK4.

Testing the equation against the eigenfunction w_j gives, per mode,

    (1 + eps(t) lambda_j) u_j' = F_j - a(l(u)) lambda_j u_j,
    F = P_N [f(u)] + g(t, u_t) + h(t),

where P_N f(u) is evaluated pseudo-spectrally.  Delayed arguments are read
from a HistorySegment by cubic Hermite interpolation.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import DegenerateMass, NonFinite
from .history import HistorySegment, SegmentSnapshot, sliding_composite_sq, steps_per_window
from .spectral import SineTransform, SpectralField

BLOWUP_GUARD = 1e30


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-2
    order: str = "rk4"
    grid_size: int = 0          # 0 selects 2N + 1
    record_every: int = 1
    max_dt_fraction: float = 1.0 / 16.0

    def validated(self, spec):
        if self.order != "rk4":
            raise ValueError(f"unsupported integrator {self.order!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        steps_per_window(spec.k, self.dt)
        if self.dt > spec.k * self.max_dt_fraction * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt:g} exceeds k * {self.max_dt_fraction:g}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        n = spec.domain.mode_count
        grid = self.grid_size or 2 * n + 1
        return replace(self, grid_size=grid)


class GalerkinSystem:
    """Precomputed operators for one spec; ``rhs`` is the mode-wise vector field."""

    def __init__(self, spec, grid_size=0, forcing=None):
        self.spec = spec
        n = spec.domain.mode_count
        self.n = n
        self.lam = spec.eigenvalues
        self.weights = spec.nonlocal_.vector(n)
        self.transform = SineTransform(spec.domain.length, n, grid_size or 2 * n + 1)
        self.forcing = spec.forcing if forcing is None else forcing
        self._f_active = spec.nonlinearity.kind != "zero"
        self._h_active = not self.forcing.is_zero(n)
        self._h_const, self._h_amp, self._h_freq, self._h_phase = self.forcing._arrays(n)
        self._h_periodic = bool(self._h_amp.any())

    def mass(self, t):
        m = 1.0 + self.spec.epsilon.value(t) * self.lam
        if np.any(m <= 0):
            raise DegenerateMass(f"1 + eps(t) lambda_j <= 0 at t = {t}")
        return m

    def coefficient(self, u):
        l_value = float(self.weights @ u)
        return float(self.spec.diffusion(l_value)), l_value

    def source(self, t, u, lookup):
        """F = P_N f(u) + g(t, u_t) + h(t); lookup maps theta offsets to states."""
        F = np.zeros(self.n)
        if self._f_active:
            F += self.transform.apply(u, self.spec.nonlinearity)
        if self.spec.delay.active:
            F += self.spec.delay.apply(t, lookup, self.n)
        if self._h_active:
            F += self._h_const
            if self._h_periodic:
                F += self._h_amp * np.sin(self._h_freq * t + self._h_phase)
        return F

    def rhs(self, t, u, lookup):
        a, _ = self.coefficient(u)
        F = self.source(t, u, lookup)
        return (F - a * self.lam * u) / self.mass(t), a, F


def rhs(t, state, segment, spec, grid_size=0):
    """Time derivative of the mode coefficients at time t."""
    u = np.asarray(getattr(state, "coefficients", state), dtype=float)
    system = GalerkinSystem(spec, grid_size)
    du, _, _ = system.rhs(t, u, _lookup_from(segment, t))
    return SpectralField(du, t)


def _lookup_from(segment, t):
    if segment is None:
        return lambda thetas: np.zeros((len(np.atleast_1d(thetas)), 0))
    return lambda thetas: segment.lookup(t + np.asarray(thetas))


@dataclass
class TrajectoryRecord:
    tau: float
    dt: float
    k: float
    record_every: int
    times: np.ndarray
    states: np.ndarray
    history_times: np.ndarray
    history_states: np.ndarray
    monitors: dict
    final_segment: SegmentSnapshot
    stages: dict = field(default_factory=dict)

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def final_state(self):
        return self.states[-1]

    def full_path(self):
        """History nodes followed by recorded states (shared node at tau once)."""
        if self.record_every != 1:
            raise ValueError("full path needs record_every = 1")
        return (np.concatenate([self.history_times[:-1], self.times]),
                np.concatenate([self.history_states[:-1], self.states]))

    def window_norms(self, eigenvalues, eps_fn, kind="C_Ht", weight="argmax", other=None):
        """Windowed sup-norms at every recorded time (of u, or of u - other.u)."""
        times, values = self.full_path()
        if other is not None:
            t2, v2 = other.full_path()
            if t2.shape != times.shape or np.max(np.abs(t2 - times)) > 1e-9:
                from .errors import TimestampMismatch
                raise TimestampMismatch("trajectories do not share timestamps")
            values = values - v2
        w = steps_per_window(self.k, self.dt) + 1
        return sliding_composite_sq(times, values, w, eigenvalues, eps_fn, kind, weight)


def integrate(spec, cfg, tau, t_end, history=None, forcing=None, keep_stages=False):
    """Advance the Galerkin system from tau to t_end with classical RK4."""
    cfg = cfg.validated(spec)
    history = spec.initial_history if history is None else history
    system = GalerkinSystem(spec, cfg.grid_size, forcing)
    n = system.n
    dt = cfg.dt
    lam = system.lam
    eps = spec.epsilon

    ratio = (t_end - tau) / dt
    n_steps = int(round(ratio))
    if n_steps < 0 or abs(ratio - n_steps) > 1e-7 * max(1.0, ratio):
        raise ValueError("t_end - tau must be a non-negative multiple of dt")

    seg = HistorySegment(spec.k, dt, n).seed(history, tau)
    hist_times, hist_states = seg.window_arrays()
    u = seg.latest

    def at(ts):
        return lambda thetas: seg.lookup(ts + np.asarray(thetas))

    k1, a1, F1 = system.rhs(tau, u, at(tau))
    seg.set_derivative(k1, side="right")

    # per-step integrands of the energy balance
    diss = np.empty(n_steps + 1)
    work = np.empty(n_steps + 1)
    energy = np.empty(n_steps + 1)

    def balance(i, t, u, a, F):
        g2 = float(lam @ (u * u))
        diss[i] = (2.0 * a - eps.derivative(t)) * g2
        work[i] = 2.0 * float(F @ u)
        energy[i] = float(u @ u) + eps.value(t) * g2

    balance(0, tau, u, a1, F1)

    n_rec = n_steps // cfg.record_every + 1
    rec_idx = np.empty(n_rec, dtype=int)
    states = np.empty((n_rec, n))
    c_l2 = np.empty(n_rec)
    c_ht = np.empty(n_rec)
    a_rec = np.empty(n_rec)
    l_rec = np.empty(n_rec)

    def record(r, i, t, u, a):
        times_w, values_w = seg.window_arrays()
        sq = values_w * values_w
        base = sq.sum(axis=1)
        up = sq @ lam
        j = int(np.argmax(up))
        rec_idx[r] = i
        states[r] = u
        c_l2[r] = base.max()
        c_ht[r] = base.max() + abs(eps.value(times_w[j])) * up[j]
        a_rec[r] = a
        l_rec[r] = float(system.weights @ u)

    record(0, 0, tau, u, a1)
    r = 1

    if keep_stages:
        st_a = np.empty((n_steps, 4))
        st_F = np.empty((n_steps, 4, n))
        st_t = np.empty((n_steps, 4))

    for i in range(n_steps):
        t = tau + i * dt
        th = t + 0.5 * dt
        t1 = t + dt
        k2, a2, F2 = system.rhs(th, u + 0.5 * dt * k1, at(th))
        k3, a3, F3 = system.rhs(th, u + 0.5 * dt * k2, at(th))
        k4, a4, F4 = system.rhs(t1, u + dt * k3, at(t1))
        if keep_stages:
            st_a[i] = (a1, a2, a3, a4)
            st_F[i] = (F1, F2, F3, F4)
            st_t[i] = (t, th, th, t1)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        l2 = float(u @ u)
        if not math.isfinite(l2) or l2 > BLOWUP_GUARD:
            raise NonFinite(f"state blew up at t = {t1:.6g} (L2_sq = {l2:.3g})")
        seg.push(u)
        k1, a1, F1 = system.rhs(t1, u, at(t1))
        seg.set_derivative(k1)
        balance(i + 1, t1, u, a1, F1)
        if (i + 1) % cfg.record_every == 0:
            record(r, i + 1, t1, u, a1)
            r += 1

    if n_steps >= 2:
        cum = cumulative_simpson(diss - work, dx=dt, initial=0.0)
    elif n_steps == 1:
        cum = np.array([0.0, 0.5 * dt * ((diss - work)[0] + (diss - work)[1])])
    else:
        cum = np.zeros(1)
    residual = energy - energy[0] + cum

    times = tau + rec_idx * dt
    g2 = np.einsum("ij,j,ij->i", states, lam, states)
    l2 = np.einsum("ij,ij->i", states, states)
    monitors = {
        "L2_sq": l2,
        "grad_sq": g2,
        "Ht_sq": l2 + np.asarray(eps.value(times)) * g2,
        "C_L2_sq": c_l2,
        "C_Ht_sq": c_ht,
        "a_value": a_rec,
        "l_value": l_rec,
        "energy_residual": residual[rec_idx],
    }
    stages = {}
    if keep_stages:
        stages = {"a": st_a, "F": st_F, "t": st_t}
    return TrajectoryRecord(
        tau=tau, dt=dt, k=spec.k, record_every=cfg.record_every, times=times,
        states=states, history_times=hist_times, history_states=hist_states,
        monitors=monitors, final_segment=seg.snapshot(), stages=stages)


TRAJECTORY_COLUMNS = ("t", "L2_sq", "grad_sq", "Ht_sq", "C_L2_sq", "C_Ht_sq",
                      "a_value", "l_value", "energy_residual")


def write_trajectory_csv(record, path_or_file):
    own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for i, t in enumerate(record.times):
            row = [t] + [record.monitors[c][i] for c in TRAJECTORY_COLUMNS[1:]]
            w.writerow([format(float(x), ".17g") for x in row])
    finally:
        if own:
            fh.close()


@dataclass
class DependenceReport:
    times: np.ndarray
    distance_sq: np.ndarray
    rate: float


def continuous_dependence(spec, cfg, tau, t_end, phi1, phi2):
    """D(t) = |u1_t - u2_t|^2 in the composite segment norm and the smallest
    C with D(t) <= exp(C (t + k - tau)) D(tau) along the run."""
    cfg = replace(cfg, record_every=1)
    r1 = integrate(spec, cfg, tau, t_end, history=phi1)
    r2 = integrate(spec, cfg, tau, t_end, history=phi2)
    D = r1.window_norms(spec.eigenvalues, spec.epsilon.value, "C_Ht", other=r2)
    D0 = D[0]
    if D0 == 0.0:
        return DependenceReport(r1.times, D, 0.0)
    with np.errstate(divide="ignore"):
        logs = np.log(np.maximum(D, 1e-300) / D0) / (r1.times + spec.k - tau)
    return DependenceReport(r1.times, D, float(np.max(logs)))

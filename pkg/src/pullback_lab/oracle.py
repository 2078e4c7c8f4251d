"""Independent references: the closed-form single mode and a finite-difference solver.

The finite-difference solver works on M interior grid values with the
centred Dirichlet Laplacian A and integrates

    (I + eps(t) A) u' = -a(l(u)) A u + f(u) + g(t, u_t) + h(t)

with the same RK4 / Hermite-history stepping as the spectral solver but a
completely separate spatial discretisation (no sine transform, trapezoid
rule for l(u)).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import DegenerateMass, NonFinite
from .history import HistorySegment
from .solver import BLOWUP_GUARD, TrajectoryRecord


def single_mode_closed_form(a0, eps0, lambda1, c, tau, t):
    """c exp(-a0 lambda1 (t - tau) / (1 + eps0 lambda1))."""
    mass = 1.0 + eps0 * lambda1
    if mass <= 0:
        raise DegenerateMass("1 + eps0 lambda1 <= 0")
    return c * math.exp(-a0 * lambda1 * (t - tau) / mass)


@dataclass
class GridTrajectory(TrajectoryRecord):
    nodes: np.ndarray = field(default=None)
    spacing: float = 0.0

    def to_modes(self, n, length):
        """Discrete sine coefficients of every recorded grid state."""
        j = np.arange(1, n + 1)
        basis = math.sqrt(2.0 / length) * np.sin(np.outer(self.nodes, j) * np.pi / length)
        return self.states @ basis * self.spacing

    def l2_distance(self, coeffs, length, index=-1):
        """Discrete L2 distance between a recorded grid state and a sine series."""
        j = np.arange(1, len(coeffs) + 1)
        basis = math.sqrt(2.0 / length) * np.sin(np.outer(self.nodes, j) * np.pi / length)
        d = self.states[index] - basis @ np.asarray(coeffs)
        return math.sqrt(self.spacing * float(d @ d))


class _GridHistory:
    def __init__(self, history, basis, n_modes):
        self.history = history
        self.basis = basis
        self.n_modes = n_modes

    def value(self, theta, n):
        return self.basis @ self.history.value(theta, self.n_modes)

    def derivative(self, theta, n):
        return self.basis @ self.history.derivative(theta, self.n_modes)


class _MassSolver:
    """Banded Cholesky of I + eps A, refactored when eps moves by > 1e-12 relative."""

    def __init__(self, M, h):
        self.M = M
        self.inv_h2 = 1.0 / (h * h)
        self._eps = None
        self._factor = None

    def solve(self, eps, rhs):
        if self._eps is None or abs(eps - self._eps) > 1e-12 * max(abs(self._eps), 1e-300):
            ab = np.empty((2, self.M))
            ab[0, :] = -eps * self.inv_h2
            ab[1, :] = 1.0 + 2.0 * eps * self.inv_h2
            try:
                self._factor = cholesky_banded(ab)
            except np.linalg.LinAlgError as exc:
                raise DegenerateMass(f"I + eps A not positive definite (eps = {eps})") from exc
            self._eps = eps
        return cho_solve_banded((self._factor, False), rhs)


def finite_difference_reference(spec, cfg, tau, t_end, grid_points=256, history=None):
    """Solve the equation on a centred finite-difference grid of interior points."""
    cfg = cfg.validated(spec)
    dt = cfg.dt
    M = int(grid_points)
    length = spec.domain.length
    n_modes = spec.domain.mode_count
    h = length / (M + 1)
    x = h * np.arange(1, M + 1)
    j = np.arange(1, n_modes + 1)
    basis = math.sqrt(2.0 / length) * np.sin(np.outer(x, j) * np.pi / length)
    weight = basis @ spec.nonlocal_.vector(n_modes)  # j(x) on the grid
    inv_h2 = 1.0 / (h * h)
    eps = spec.epsilon
    f = spec.nonlinearity
    delay = spec.delay
    history = spec.initial_history if history is None else history
    f_active = f.kind != "zero"
    mass = _MassSolver(M, h)

    def lap(u):
        # A u with A = -D2 (positive)
        out = 2.0 * u
        out[..., 1:] -= u[..., :-1]
        out[..., :-1] -= u[..., 1:]
        return out * inv_h2

    def source(t, u, lookup):
        F = f(u) if f_active else np.zeros(M)
        if delay.active:
            F = F + delay.apply(t, lookup, M)
        return F + basis @ spec.forcing.coefficients(t, n_modes)

    def rhs(t, u, lookup):
        l_value = h * float(weight @ u)
        a = float(spec.diffusion(l_value))
        F = source(t, u, lookup)
        return mass.solve(float(eps.value(t)), F - a * lap(u)), a, F, l_value

    ratio = (t_end - tau) / dt
    n_steps = int(round(ratio))
    if n_steps < 0 or abs(ratio - n_steps) > 1e-7 * max(1.0, ratio):
        raise ValueError("t_end - tau must be a non-negative multiple of dt")

    seg = HistorySegment(spec.k, dt, M).seed(_GridHistory(history, basis, n_modes), tau)
    hist_times, hist_states = seg.window_arrays()
    u = seg.latest

    def at(ts):
        return lambda thetas: seg.lookup(ts + np.asarray(thetas))

    k1, a1, F1, l1 = rhs(tau, u, at(tau))
    seg.set_derivative(k1, side="right")

    energy = np.empty(n_steps + 1)
    net = np.empty(n_steps + 1)

    def balance(i, t, u, a, F):
        g2 = h * float(u @ lap(u))
        energy[i] = h * float(u @ u) + eps.value(t) * g2
        net[i] = (2.0 * a - eps.derivative(t)) * g2 - 2.0 * h * float(F @ u)

    balance(0, tau, u, a1, F1)
    keep = [0]
    states = [u.copy()]
    a_rec = [a1]
    l_rec = [l1]
    win_l2 = []
    win_ht = []

    def window_norms():
        tw, vw = seg.window_arrays()
        l2 = h * np.einsum("ij,ij->i", vw, vw)
        g2 = h * np.einsum("ij,ij->i", vw, lap(vw))
        jmax = int(np.argmax(g2))
        win_l2.append(float(l2.max()))
        win_ht.append(float(l2.max() + abs(eps.value(tw[jmax])) * g2[jmax]))

    window_norms()
    for i in range(n_steps):
        t = tau + i * dt
        th = t + 0.5 * dt
        t1 = t + dt
        k2 = rhs(th, u + 0.5 * dt * k1, at(th))[0]
        k3 = rhs(th, u + 0.5 * dt * k2, at(th))[0]
        k4 = rhs(t1, u + dt * k3, at(t1))[0]
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        l2 = h * float(u @ u)
        if not math.isfinite(l2) or l2 > BLOWUP_GUARD:
            raise NonFinite(f"grid state blew up at t = {t1:.6g}")
        seg.push(u)
        k1, a1, F1, l1 = rhs(t1, u, at(t1))
        seg.set_derivative(k1)
        balance(i + 1, t1, u, a1, F1)
        if (i + 1) % cfg.record_every == 0:
            keep.append(i + 1)
            states.append(u.copy())
            a_rec.append(a1)
            l_rec.append(l1)
            window_norms()

    if n_steps >= 2:
        cum = cumulative_simpson(net, dx=dt, initial=0.0)
    elif n_steps == 1:
        cum = np.array([0.0, 0.5 * dt * (net[0] + net[1])])
    else:
        cum = np.zeros(1)
    residual = energy - energy[0] + cum
    keep = np.array(keep)
    states = np.array(states)
    times = tau + keep * dt
    l2 = h * np.einsum("ij,ij->i", states, states)
    g2 = h * np.einsum("ij,ij->i", states, lap(states))
    monitors = {
        "L2_sq": l2,
        "grad_sq": g2,
        "Ht_sq": l2 + np.asarray(eps.value(times)) * g2,
        "C_L2_sq": np.array(win_l2),
        "C_Ht_sq": np.array(win_ht),
        "a_value": np.array(a_rec),
        "l_value": np.array(l_rec),
        "energy_residual": residual[keep],
    }
    return GridTrajectory(tau=tau, dt=dt, k=spec.k, record_every=cfg.record_every,
                          times=times, states=states, history_times=hist_times,
                          history_states=hist_states, monitors=monitors,
                          final_segment=seg.snapshot(), nodes=x, spacing=h)


@dataclass
class CrossCheck:
    grid_points: int
    mode_count: int
    dt: float
    l2_difference: float


def cross_check(spec, cfg, tau, t_end, grid_points=256):
    """Endpoint L2 distance between the spectral and finite-difference solutions."""
    from .solver import integrate

    cfg = replace(cfg, record_every=max(1, int(round((t_end - tau) / cfg.dt))))
    spectral = integrate(spec, cfg, tau, t_end)
    grid = finite_difference_reference(spec, cfg, tau, t_end, grid_points)
    d = grid.l2_distance(spectral.final_state, spec.domain.length)
    return CrossCheck(grid_points, spec.domain.mode_count, cfg.dt, d)

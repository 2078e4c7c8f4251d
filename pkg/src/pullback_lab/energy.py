"""Explicit constants and bounds for the pullback energy estimate.

With eta in (0, eta_max), eta_max = (1 + L) lambda_1 / (1 + lambda_1 L), the
delay-corrected decay rate is

    eta1 = eta - C_g e^{eta k} / (1 + lambda_1 L),

and a trajectory started at tau from phi obeys

    |u_t|^2_C + |eps_t| |grad u_t|^2_C
        <= coef_b (2 C0 |Omega| / eta) e^{eta k}
         + coef_a (|phi|^2_C + eps_tau |grad phi|^2_C) e^{-eta1 (t - tau)}
         + coef_c e^{eta k} int_tau^t e^{-eta1 (t - s)} |h(s)|^2_{-1} ds.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import DelayTooStrong, ForcingNotTempered, TimestampMismatch

TAIL_RTOL = 1e-16
MONITOR_SLACK = 1e-9


@dataclass(frozen=True)
class BoundConstants:
    eta: float
    eta1: float
    coef_a: float
    coef_b: float
    coef_c: float
    const_term: float
    delta: float
    k: float
    C_g: float
    eta_tilde: float
    lambda1: float
    L: float
    varrho1: float
    varrho2: float

    def rho_sq(self, spec, t, h_integral_fn=None):
        return absorbing_radius(self, spec, t, h_integral_fn)


def eta_interval(spec):
    lam1, L = spec.lambda1, spec.L
    return (1.0 + L) * lam1 / (1.0 + lam1 * L)


def eta1_of(eta, C_g, k, lambda1, L):
    return eta - C_g * math.exp(eta * k) / (1.0 + lambda1 * L)


def sup_eta1(C_g, k, lambda1, L, eta_max):
    """Supremum of eta1 over (0, eta_max); the maximiser solves C_g k e^{eta k} = 1 + lambda1 L."""
    if C_g <= 0:
        return eta_max, eta_max
    star = math.log((1.0 + lambda1 * L) / (C_g * k)) / k if C_g * k > 0 else eta_max
    star = min(max(star, 0.0), eta_max)
    return eta1_of(star, C_g, k, lambda1, L), star


def _coefficients(eta, eta1, C_g, k, lambda1, L):
    corr = C_g * math.exp(eta * k) / (1.0 + lambda1 * L)
    coef_b = 1.0 + corr / eta1
    gap = eta - eta1
    coef_ac = 1.0 if C_g == 0 else 1.0 + corr / gap
    return coef_ac, coef_b, coef_ac


def constants_from(eta, C_g, k, lambda1, L):
    """(eta1, coef_a, coef_b, coef_c) for raw parameters; no admissibility checks."""
    eta1 = eta1_of(eta, C_g, k, lambda1, L)
    a, b, c = _coefficients(eta, eta1, C_g, k, lambda1, L)
    return eta1, a, b, c


def regularity_rates(spec, sup_eps=None):
    """Constant-rate forms: varrho1 = (2+L)/(1/lambda1 + sup|eps|) and
    varrho2 = 0.9 (1+L)/(1/lambda1 + sup|eps|)."""
    if sup_eps is None:
        sup_eps = spec.epsilon.sup_abs()
    denom = 1.0 / spec.lambda1 + abs(sup_eps)
    return (2.0 + spec.L) / denom, 0.9 * (1.0 + spec.L) / denom


def derive_constants(spec, eta_choice=None, delta=None):
    C_g = float(spec.delay.lipschitz_bound)
    k, lam1, L = spec.k, spec.lambda1, spec.L
    eta_max = eta_interval(spec)
    best, eta_star = sup_eta1(C_g, k, lam1, L, eta_max)
    if best <= 0:
        raise DelayTooStrong(best)
    if eta_choice is None:
        eta = 0.9 * eta_max
        if eta1_of(eta, C_g, k, lam1, L) <= 0:
            eta = eta_star
    else:
        eta = float(eta_choice)
        if not 0 < eta < eta_max:
            raise ValueError(f"eta = {eta:g} outside (0, {eta_max:.6g})")
    eta1 = eta1_of(eta, C_g, k, lam1, L)
    if eta1 <= 0:
        raise ValueError(f"eta = {eta:g} gives eta1 = {eta1:.6g} <= 0 (best {best:.6g})")
    coef_a, coef_b, coef_c = _coefficients(eta, eta1, C_g, k, lam1, L)
    f = spec.nonlinearity
    const_term = coef_b * (2.0 * f.C0 * spec.domain.measure / eta) * math.exp(eta * k)
    if delta is None:
        delta = 1e-3 * const_term
    r1, r2 = regularity_rates(spec)
    return BoundConstants(eta=eta, eta1=eta1, coef_a=coef_a, coef_b=coef_b, coef_c=coef_c,
                          const_term=const_term, delta=float(delta), k=k, C_g=C_g,
                          eta_tilde=f.eta_tilde, lambda1=lam1, L=L, varrho1=r1, varrho2=r2)


def _h_fn(spec, h_integral_fn):
    if h_integral_fn is not None:
        return h_integral_fn
    lam = spec.eigenvalues
    return lambda s: spec.forcing.hminus1_sq(s, lam)


def _simpson_points(span, per_unit=100, minimum=64):
    n = max(minimum, int(math.ceil(span * per_unit)))
    return n + (n % 2) + 1


def forcing_memory(consts, tau, t, hfn):
    """int_tau^t e^{-eta1 (t - s)} |h(s)|^2_{-1} ds by composite Simpson."""
    if t <= tau:
        return 0.0
    s = np.linspace(tau, t, _simpson_points(t - tau))
    y = np.exp(-consts.eta1 * (t - s)) * np.array([hfn(x) for x in s])
    return float(simpson(y, x=s))


def lemma41_rhs(consts, spec, tau, t, phi_norms, h_integral_fn=None):
    """Right-hand side of the pullback bound at time t for a run started at tau.

    phi_norms: mapping with C_L2_sq and eps_tau_grad_sq of the initial segment.
    """
    hfn = _h_fn(spec, h_integral_fn)
    phi_term = float(phi_norms["C_L2_sq"]) + float(phi_norms["eps_tau_grad_sq"])
    mem = forcing_memory(consts, tau, t, hfn)
    return (consts.const_term
            + consts.coef_a * phi_term * math.exp(-consts.eta1 * (t - tau))
            + consts.coef_c * math.exp(consts.eta * consts.k) * mem)


def lemma41_series(consts, spec, tau, times, phi_norms, h_integral_fn=None):
    """lemma41_rhs on a uniform increasing grid of times starting at tau."""
    times = np.asarray(times, dtype=float)
    hfn = _h_fn(spec, h_integral_fn)
    phi_term = float(phi_norms["C_L2_sq"]) + float(phi_norms["eps_tau_grad_sq"])
    decay = np.exp(-consts.eta1 * (times - tau))
    if len(times) > 2:
        H = np.array([hfn(s) for s in times])
        # e^{-eta1 (t - s)} = decay(t) / decay(s)
        mem = decay * cumulative_simpson(H / decay, x=times, initial=0.0)
    else:
        mem = np.array([forcing_memory(consts, tau, t, hfn) for t in times])
    return (consts.const_term + consts.coef_a * phi_term * decay
            + consts.coef_c * math.exp(consts.eta * consts.k) * mem)


def absorbing_radius(consts, spec, t, h_integral_fn=None, max_blocks=4000):
    """rho^2(t): the phi-independent part of the bound plus the margin delta.

    The improper integral is accumulated backwards in blocks of length
    1/eta1 until a block adds less than 1e-16 of the running total.
    """
    hfn = _h_fn(spec, h_integral_fn)
    width = 1.0 / consts.eta1
    total = 0.0
    for b in range(max_blocks):
        hi = t - b * width
        lo = hi - width
        s = np.linspace(lo, hi, 129)
        y = np.exp(-consts.eta1 * (t - s)) * np.array([hfn(x) for x in s])
        piece = float(simpson(y, x=s))
        if not math.isfinite(piece):
            break
        total += piece
        if piece <= TAIL_RTOL * total or (total == 0.0 and b >= 8):
            mem = total
            return (consts.const_term + consts.coef_c * math.exp(consts.eta * consts.k) * mem
                    + consts.delta)
    raise ForcingNotTempered(f"forcing memory integral did not converge at t = {t:g}")


def radius_series(consts, spec, times):
    """rho^2 at every time of a uniform increasing grid."""
    lam = spec.eigenvalues
    H = np.array([spec.forcing.hminus1_sq(s, lam) for s in times])
    base = absorbing_radius(consts, spec, times[0]) - consts.const_term - consts.delta
    decay = np.exp(-consts.eta1 * (times - times[0]))
    mem = decay * base / (consts.coef_c * math.exp(consts.eta * consts.k))
    if len(times) > 2:
        mem = mem + decay * cumulative_simpson(H / decay, x=times, initial=0.0)
    return (consts.const_term + consts.coef_c * math.exp(consts.eta * consts.k) * mem
            + consts.delta)


def tempered_test(radius_fn, eta1, probe_taus, tol=1e-8):
    """True iff e^{eta1 tau} r^2(tau) falls below tol along receding probes.

    Evaluated in log space so both fast growth and fast decay stay finite.
    """
    taus = np.asarray(list(probe_taus), dtype=float)
    logs = []
    for tau in taus:
        r2 = float(radius_fn(tau))
        if r2 < 0 or math.isnan(r2):
            return False
        logs.append(-math.inf if r2 == 0 else eta1 * tau + math.log(r2))
    logs = np.array(logs)
    tail = logs[len(logs) // 2:]
    return bool(logs[-1] < math.log(tol) and np.all(np.diff(tail) <= 1e-12))


def default_probe_taus(eta1, t=0.0, horizon=None, count=41):
    horizon = 40.0 / eta1 if horizon is None else horizon
    return np.linspace(t, t - horizon, count)


def _check_pair(rec1, rec2):
    if (rec1.times.shape != rec2.times.shape
            or np.max(np.abs(rec1.times - rec2.times)) > 1e-9):
        raise TimestampMismatch("trajectories do not share timestamps")


def contraction_functional(traj1, traj2, consts, spec, tau, t):
    """psi_{t,T}(u1, u2) on the recorded nodes in [tau, t].

    The weight e^{-2 eta (t - k)} (int e^{4 eta s} ...)^{1/2} is evaluated as
    e^{2 eta k} (int e^{4 eta (s - t)} ...)^{1/2} to avoid overflow.
    """
    _check_pair(traj1, traj2)
    sel = (traj1.times >= tau - 1e-12) & (traj1.times <= t + 1e-12)
    s = traj1.times[sel]
    if s.size < 2:
        return 0.0
    diff = traj1.states[sel] - traj2.states[sel]
    d2 = np.einsum("ij,ij->i", diff, diff)
    cs = traj1.monitors["C_L2_sq"][sel] + traj2.monitors["C_L2_sq"][sel]
    return _psi(consts, s, d2, cs, t)


def _psi(consts, s, d2, cs, t):
    I = float(simpson(d2, x=s))
    W = float(simpson(np.exp(4.0 * consts.eta * (s - t)) * cs, x=s))
    return (2.0 * consts.eta_tilde * I
            + 4.0 * consts.C_g * math.exp(2.0 * consts.eta * consts.k)
            * math.sqrt(max(W, 0.0)) * math.sqrt(max(I, 0.0)))


def contraction_series(traj1, traj2, consts, spec, tau):
    """(times, lhs, rhs) of the contraction inequality at every recorded time.

    Both records need record_every = 1 so the windowed norms are exact.
    """
    _check_pair(traj1, traj2)
    lam = spec.eigenvalues
    lhs = traj1.window_norms(lam, spec.epsilon.value, "C_Ht", other=traj2)
    times = traj1.times
    _, v0 = traj1.full_path()
    _, w0 = traj2.full_path()
    m = int(round(spec.k / traj1.dt)) + 1
    d0 = (v0 - w0)[:m]
    init = float(np.max(np.einsum("ij,ij->i", d0, d0))
                 + spec.L * np.max(np.einsum("ij,j,ij->i", d0, lam, d0)))
    diff = traj1.states - traj2.states
    d2 = np.einsum("ij,ij->i", diff, diff)
    cs = traj1.monitors["C_L2_sq"] + traj2.monitors["C_L2_sq"]
    rhs = np.empty_like(lhs)
    for i, t in enumerate(times):
        psi = _psi(consts, times[: i + 1], d2[: i + 1], cs[: i + 1], t) if i >= 1 else 0.0
        rhs[i] = init * math.exp(-2.0 * consts.eta1 * (t - spec.k - tau)) + psi
    return times, lhs, rhs


# ---------------------------------------------------------------------- monitor / report

@dataclass
class BoundReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    rho_sq: np.ndarray

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def violations(self):
        return int(np.sum(self.slack < -MONITOR_SLACK * (1.0 + self.rhs)))

    @property
    def passed(self):
        return self.violations == 0


def initial_norms(record, spec):
    """C_L2_sq and eps_tau |grad phi|^2_C of the initial segment of a record."""
    v = record.history_states
    lam = spec.eigenvalues
    return {
        "C_L2_sq": float(np.max(np.einsum("ij,ij->i", v, v))),
        "eps_tau_grad_sq": float(abs(spec.epsilon.value(record.tau))
                                 * np.max(np.einsum("ij,j,ij->i", v, lam, v))),
    }


def bound_report(record, spec, consts, with_rho=True):
    phi = initial_norms(record, spec)
    rhs = lemma41_series(consts, spec, record.tau, record.times, phi)
    if with_rho:
        rho = radius_series(consts, spec, record.times)
    else:
        rho = np.full(record.times.shape, np.nan)
    return BoundReport(times=record.times, lhs=record.monitors["C_Ht_sq"], rhs=rhs,
                       rho_sq=rho)


BOUND_COLUMNS = ("t", "lhs_C_Ht_sq", "rhs_lemma41", "rho_sq", "slack")


def write_bound_csv(report, path_or_file):
    own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUND_COLUMNS)
        for row in zip(report.times, report.lhs, report.rhs, report.rho_sq, report.slack):
            w.writerow([format(float(x), ".17g") for x in row])
    finally:
        if own:
            fh.close()

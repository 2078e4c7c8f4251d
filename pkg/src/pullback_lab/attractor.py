"""Pullback ensembles, finite attractor sections and the regularity split.

An attractor section at time t is represented by a point cloud of final
segments U(t, tau_far) phi for histories phi sampled from the absorbing ball
at tau_far.  The regularity experiment splits u = v + v1 where v carries the
initial data and the small part of the forcing and v1 the rest; both linear
systems reuse the diffusion coefficient and sources stored from the u run,
stage by stage, so their sum reproduces u to round-off.
"""

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_simpson

from .energy import absorbing_radius, derive_constants, radius_series
from .errors import CannotSplit, EmptySet
from .history import composite_sq, sliding_composite_sq, steps_per_window
from .problem import InitialHistory
from .solver import integrate

THREADS_ENV = "PULLBACK_LAB_THREADS"


def thread_count(requested=None):
    if requested is not None:
        return max(1, int(requested))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------- ensembles

def segment_norm_sq(spec, tau, coeffs):
    """C_Ht norm squared of the constant segment phi(theta) = coeffs on [tau-k, tau]."""
    c = np.asarray(coeffs, dtype=float)
    lam = spec.eigenvalues
    # constant segment: every node ties, argmax picks the oldest one
    return float(c @ c + abs(spec.epsilon.value(tau - spec.k)) * (lam * c) @ c)


def sample_ball(spec, tau, radius_sq, count, rng):
    """Constant histories with C_Ht norm^2 equal to radius_sq (first half) or
    uniformly below it (second half)."""
    n = spec.domain.mode_count
    on_sphere = (count + 1) // 2
    out = []
    for i in range(count):
        c = rng.uniform(-1.0, 1.0, size=n)
        norm = segment_norm_sq(spec, tau, c)
        target = radius_sq if i < on_sphere else radius_sq * rng.uniform(0.0, 1.0)
        if norm > 0:
            c = c * math.sqrt(target / norm)
        out.append(c)
    return out


@dataclass
class EnsembleRun:
    t: float
    taus: list
    radius_sq: dict
    histories: dict
    endpoints: dict
    endpoint_C_Ht_sq: dict
    target_radius_sq: float

    def within_rho(self, tau):
        return [x <= self.target_radius_sq for x in self.endpoint_C_Ht_sq[tau]]

    def all_endpoints(self):
        return [seg for tau in self.taus for seg in self.endpoints[tau]]


def _run_member(spec, cfg, tau, t, coeffs):
    cfg = replace(cfg, record_every=max(1, int(round((t - tau) / cfg.dt))))
    rec = integrate(spec, cfg, tau, t, history=InitialHistory.constant(coeffs))
    return rec.final_segment


def pullback_ensemble(spec, cfg, t, taus, samples_per_tau, seed=0, consts=None,
                      threads=None, histories=None):
    """Integrate seeded samples of the absorbing ball at each tau up to t.

    ``histories`` optionally maps tau to explicit coefficient vectors.
    """
    taus = [float(x) for x in taus]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly decreasing")
    if any(tau >= t - spec.k for tau in taus):
        raise ValueError("every tau must precede t - k")
    consts = consts or derive_constants(spec)
    radius = {}
    samples = {}
    for i, tau in enumerate(taus):
        radius[tau] = absorbing_radius(consts, spec, tau)
        if histories is not None and tau in histories:
            samples[tau] = [np.asarray(c, dtype=float) for c in histories[tau]]
        else:
            rng = np.random.default_rng([int(seed), i])
            samples[tau] = sample_ball(spec, tau, radius[tau], samples_per_tau, rng)
    jobs = [(tau, c) for tau in taus for c in samples[tau]]
    workers = thread_count(threads)
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            segs = list(pool.map(lambda job: _run_member(spec, cfg, job[0], t, job[1]), jobs))
    else:
        segs = [_run_member(spec, cfg, tau, t, c) for tau, c in jobs]
    endpoints = {tau: [] for tau in taus}
    for (tau, _), seg in zip(jobs, segs):
        endpoints[tau].append(seg)
    lam = spec.eigenvalues
    norms = {tau: [composite_sq(s.times, s.values, lam, spec.epsilon.value, "C_Ht")
                   for s in endpoints[tau]] for tau in taus}
    return EnsembleRun(t=t, taus=taus, radius_sq=radius, histories=samples,
                       endpoints=endpoints, endpoint_C_Ht_sq=norms,
                       target_radius_sq=absorbing_radius(consts, spec, t))


def attractor_approximation(spec, cfg, t, tau_far=None, samples=8, seed=0, consts=None,
                            threads=None):
    """Point cloud U(t, tau_far) D1(tau_far); an outer approximation of the section."""
    consts = consts or derive_constants(spec)
    if tau_far is None:
        # gap of at least 5 / eta1, rounded up to whole delay windows so it stays on the step grid
        tau_far = t - spec.k * max(2, math.ceil(5.0 / (consts.eta1 * spec.k)))
    run = pullback_ensemble(spec, cfg, t, [tau_far], samples, seed, consts, threads)
    return run.endpoints[float(tau_far)]


def semidistance(setA, setB, norm_kind="C_Ht", eigenvalues=None, eps_fn=None,
                 weight="argmax"):
    """sup over A of inf over B of the segment-norm distance (not squared)."""
    A = list(setA)
    B = list(setB)
    if not A or not B:
        raise EmptySet("semidistance needs two nonempty sets")
    if eigenvalues is None:
        n = A[0].values.shape[1]
        eigenvalues = np.arange(1, n + 1, dtype=float) ** 2
    if eps_fn is None:
        eps_fn = lambda s: 1.0
    worst = 0.0
    for a in A:
        best = math.inf
        for b in B:
            d = composite_sq(a.times, a.values - b.values, eigenvalues, eps_fn,
                             norm_kind, weight)
            best = min(best, d)
            if best == 0.0:
                break
        worst = max(worst, best)
    return math.sqrt(worst)


ENSEMBLE_COLUMNS = ("tau", "sample_id", "endpoint_C_Ht_sq", "within_rho")


def write_ensemble_csv(run, path_or_file):
    own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENSEMBLE_COLUMNS)
        for tau in run.taus:
            for i, (x, ok) in enumerate(zip(run.endpoint_C_Ht_sq[tau], run.within_rho(tau))):
                w.writerow([format(tau, ".17g"), i, format(float(x), ".17g"), int(ok)])
    finally:
        if own:
            fh.close()


@dataclass
class AbsorptionEntry:
    tau: float
    phi_norm_sq: float
    T_star: float
    entry_time: float
    times: np.ndarray
    lhs: np.ndarray
    radius_sq: np.ndarray

    @property
    def within(self):
        return self.entry_time <= self.T_star


def absorption_entry(spec, cfg, tau, scale=100.0, seed=0, consts=None, extra=None):
    """Start on the sphere |phi|^2 = scale * rho^2(tau) and find when the
    trajectory enters (and stays in) the ball rho^2(t).

    T* = log(coef_a |phi|^2 / delta) / eta1 is the entry time predicted by the
    pullback bound; the run continues ``extra`` (default 2k) past it.
    """
    consts = consts or derive_constants(spec)
    target = scale * absorbing_radius(consts, spec, tau)
    rng = np.random.default_rng(int(seed))
    c = sample_ball(spec, tau, target, 1, rng)[0]
    phi_sq = segment_norm_sq(spec, tau, c)
    T_star = math.log(consts.coef_a * phi_sq / consts.delta) / consts.eta1
    extra = 2.0 * spec.k if extra is None else extra
    n_steps = int(math.ceil((T_star + extra) / cfg.dt))
    cfg = replace(cfg, record_every=1)
    rec = integrate(spec, cfg, tau, tau + n_steps * cfg.dt, history=InitialHistory.constant(c))
    lhs = rec.monitors["C_Ht_sq"]
    rad = radius_series(consts, spec, rec.times)
    outside = np.nonzero(lhs > rad)[0]
    if outside.size == 0:
        entry = 0.0
    elif outside[-1] == len(lhs) - 1:
        entry = math.inf
    else:
        entry = float(rec.times[outside[-1] + 1] - tau)
    return AbsorptionEntry(tau=tau, phi_norm_sq=phi_sq, T_star=T_star, entry_time=entry,
                           times=rec.times, lhs=lhs, radius_sq=rad)


# ---------------------------------------------------------------------- forcing split

def _mode_bounds(forcing, n):
    const, amp, _, _ = forcing._arrays(n)
    return np.abs(const) + np.abs(amp)


def split_forcing(forcing, theta, n, eigenvalues=None, norm="Hminus1"):
    """(h_theta, remainder): keep the fewest leading modes so that the
    remainder norm stays below theta for all t (bounded by |const| + |amp|)."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    bound = _mode_bounds(forcing, n)
    if norm == "Hminus1":
        if eigenvalues is None:
            raise ValueError("H^-1 split needs eigenvalues")
        w = 1.0 / np.asarray(eigenvalues, dtype=float)
    elif norm == "L2":
        w = np.ones(n)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    if not np.all(np.isfinite(bound)):
        raise CannotSplit("forcing coefficients are not finite")
    # tail[K] = squared norm of modes K+1..n
    sq = bound * bound * w
    tail = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tail < theta * theta))
    if tail[keep] >= theta * theta:
        raise CannotSplit(f"remainder norm {math.sqrt(tail[-1]):.3g} >= theta")
    head = forcing.restrict(keep_to=keep)
    rest = forcing.restrict(keep_from=keep + 1)
    return head, rest


def default_theta(spec, times=None):
    """1e-2 times the sup of |h(t)|_{-1} over a probe grid."""
    lam = spec.eigenvalues
    ts = np.linspace(-50, 50, 2001) if times is None else times
    return 1e-2 * math.sqrt(max(spec.forcing.hminus1_sq(s, lam) for s in ts))


# ---------------------------------------------------------------------- decomposition

@dataclass
class RegularityReport:
    theta: float
    h_theta: object
    remainder: object
    tau: float
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    v1: np.ndarray
    varrho1: float
    varrho2: float
    I1: np.ndarray
    I2: np.ndarray
    phi_Ht1_sq: float
    R1: np.ndarray
    I2_bound: np.ndarray
    superposition_err: np.ndarray
    k: float
    extras: dict = field(default_factory=dict)

    def I1_bound(self, form="printed"):
        """Gronwall bound on I1: e^{-r1 (t + k - tau)} |phi|^2 + theta^2 / r1
        (printed) or with the window shift t - k - tau (shifted)."""
        if form == "printed":
            lag = self.times + self.k - self.tau
        elif form == "shifted":
            lag = self.times - self.k - self.tau
        else:
            raise ValueError(f"unknown decay form {form!r}")
        return (np.exp(-self.varrho1 * lag) * self.phi_Ht1_sq
                + self.theta ** 2 / self.varrho1)

    @property
    def R2(self):
        return float(self.I2_bound[-1])

    @property
    def superposition_rel(self):
        scale = float(np.max(np.linalg.norm(self.u, axis=1)))
        err = float(np.max(self.superposition_err))
        return err / scale if scale > 0 else err

    def I1_holds(self, form="printed", rtol=1e-9):
        b = self.I1_bound(form)
        return bool(np.all(self.I1 <= b + rtol * (1.0 + b)))

    def I2_holds(self, rtol=1e-9):
        b = self.I2_bound
        return bool(np.all(self.I2 <= b + rtol * (1.0 + b)))


def _linear_run(lam, a_st, t_st, mass_fn, source_fn, v0, dt):
    """RK4 for v' = (G(t) - a lambda v)/mass(t) with a frozen per stage."""
    n_steps = a_st.shape[0]
    out = np.empty((n_steps + 1, v0.shape[0]))
    out[0] = v = np.array(v0, dtype=float)
    for i in range(n_steps):
        a1, a2, a3, a4 = a_st[i]
        t1, t2, t3, t4 = t_st[i]
        k1 = (source_fn(i, 0, t1) - a1 * lam * v) / mass_fn(t1)
        k2 = (source_fn(i, 1, t2) - a2 * lam * (v + 0.5 * dt * k1)) / mass_fn(t2)
        k3 = (source_fn(i, 2, t3) - a3 * lam * (v + 0.5 * dt * k2)) / mass_fn(t3)
        k4 = (source_fn(i, 3, t4) - a4 * lam * (v + dt * k3)) / mass_fn(t4)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = v
    return out


def solve_decomposed(spec, cfg, tau, t, phi=None, theta=None, consts=None, split_norm="L2"):
    """Run u, then the split systems v (data plus small forcing) and v1 (rest)."""
    consts = consts or derive_constants(spec)
    n = spec.domain.mode_count
    lam = spec.eigenvalues
    if theta is None:
        theta = default_theta(spec)
    if theta <= 0:
        theta = 1e-12
    h_theta, rest = split_forcing(spec.forcing, theta, n, lam, norm=split_norm)
    cfg = replace(cfg, record_every=1)
    rec = integrate(spec, cfg, tau, t, history=phi, keep_stages=True)
    dt = rec.dt
    st = rec.stages
    eps = spec.epsilon

    def mass(s):
        return 1.0 + eps.value(s) * lam

    rest_cache = {}

    def rest_at(s):
        if s not in rest_cache:
            rest_cache[s] = rest.coefficients(s, n)
        return rest_cache[s]

    v = _linear_run(lam, st["a"], st["t"], mass, lambda i, j, s: rest_at(s),
                    rec.history_states[-1], dt)
    v1 = _linear_run(lam, st["a"], st["t"], mass,
                     lambda i, j, s: st["F"][i, j] - rest_at(s),
                     np.zeros(n), dt)
    err = np.linalg.norm(v + v1 - rec.states, axis=1)

    w = steps_per_window(spec.k, dt) + 1
    hist_t = rec.history_times[:-1]
    path_t = np.concatenate([hist_t, rec.times])
    I1 = sliding_composite_sq(path_t, np.concatenate([rec.history_states[:-1], v]), w,
                              lam, eps.value, "C_Ht1")
    I2 = sliding_composite_sq(path_t, np.concatenate([np.zeros_like(rec.history_states[:-1]),
                                                      v1]), w, lam, eps.value, "C_Ht1")
    phi_sq = composite_sq(rec.history_times, rec.history_states, lam, eps.value, "C_Ht1")

    sup_eps = float(np.max(np.abs(eps.value(path_t))))
    denom = 1.0 / spec.lambda1 + sup_eps
    r1 = (2.0 + spec.L) / denom
    r2 = 0.9 * (1.0 + spec.L) / denom

    R1 = radius_series(consts, spec, rec.times)
    Hth = np.array([h_theta.hminus1_sq(s, lam) for s in rec.times])
    integrand = (2.0 * consts.eta_tilde + consts.C_g) * R1 + 2.0 * Hth
    decay = np.exp(-r2 * (rec.times - tau))
    I2_bound = decay * cumulative_simpson(integrand / decay, x=rec.times, initial=0.0)

    return RegularityReport(theta=theta, h_theta=h_theta, remainder=rest, tau=tau,
                            times=rec.times, u=rec.states, v=v, v1=v1, varrho1=r1,
                            varrho2=r2, I1=I1, I2=I2, phi_Ht1_sq=phi_sq, R1=R1,
                            I2_bound=I2_bound, superposition_err=err, k=spec.k,
                            extras={"record": rec})


def in_regular_ball(segments, spec, R2):
    """C_Ht1 norm^2 of every segment against R2."""
    lam = spec.eigenvalues
    vals = [composite_sq(s.times, s.values, lam, spec.epsilon.value, "C_Ht1")
            for s in segments]
    return all(x <= R2 for x in vals), vals


REGULARITY_COLUMNS = ("t", "I1", "I1_bound", "I2", "I2_bound", "superposition_err")


def write_regularity_csv(report, path_or_file, form="printed"):
    own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGULARITY_COLUMNS)
        rows = zip(report.times, report.I1, report.I1_bound(form), report.I2,
                   report.I2_bound, report.superposition_err)
        for row in rows:
            w.writerow([format(float(x), ".17g") for x in row])
    finally:
        if own:
            fh.close()

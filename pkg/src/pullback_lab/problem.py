"""Configuration model for the delayed nonlocal pseudo-parabolic problem

    u_t - eps(t) u_txx - a(l(u)) u_xx = f(u) + g(t, u_t) + h(t)   on (0, length),

with homogeneous Dirichlet conditions and an initial history phi on [-k, 0].

Every coefficient is a small frozen dataclass carrying pure evaluators, so one
ProblemSpec can be shared by concurrent runs.  ``audit`` samples each structural
hypothesis on a probe grid and reports the worst witness per hypothesis.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import HypothesisViolation
from .spectral import eigenvalues_for

EPS_MIN_DEFAULT = 1e-6


@dataclass(frozen=True)
class DomainSpec:
    length: float
    mode_count: int

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("domain length must be positive")
        if int(self.mode_count) < 1:
            raise ValueError("mode_count must be >= 1")

    @property
    def measure(self):
        return self.length

    @property
    def eigenvalues(self):
        return eigenvalues_for(self.length, self.mode_count)

    @property
    def lambda1(self):
        return (math.pi / self.length) ** 2


# --------------------------------------------------------------------------- eps(t)

@dataclass(frozen=True)
class TimeProfile:
    """Coefficient eps(t) of the pseudo-parabolic term.

    kinds
      constant          eps = level
      decreasing-tanh   eps = 1 + amplitude (1 - tanh t) / 2
      increasing-tanh   eps = 1 - amplitude (1 - tanh t) / 2
      custom-sampled    cubic spline through (times, values), clamped outside
    """

    kind: str = "constant"
    amplitude: float = 0.0
    bound: Optional[float] = None
    level: float = 1.0
    eps_min: float = EPS_MIN_DEFAULT
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "decreasing-tanh", "increasing-tanh", "custom-sampled"):
            raise ValueError(f"unknown eps profile kind {self.kind!r}")
        if self.kind == "custom-sampled":
            if len(self.times) < 2 or len(self.times) != len(self.values):
                raise ValueError("custom-sampled profile needs matching times/values")
            object.__setattr__(self, "_spline",
                               CubicSpline(np.asarray(self.times, float),
                                           np.asarray(self.values, float)))
        if self.bound is None:
            object.__setattr__(self, "bound", self.analytic_sup())

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, self.level)
        elif self.kind == "decreasing-tanh":
            out = 1.0 + 0.5 * self.amplitude * (1.0 - np.tanh(t))
        elif self.kind == "increasing-tanh":
            out = 1.0 - 0.5 * self.amplitude * (1.0 - np.tanh(t))
        else:
            lo, hi = self.times[0], self.times[-1]
            out = self._spline(np.clip(t, lo, hi))
        return out if out.ndim else float(out)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.zeros_like(t)
        elif self.kind in ("decreasing-tanh", "increasing-tanh"):
            sech2 = 1.0 / np.cosh(np.clip(t, -350.0, 350.0)) ** 2
            sign = -1.0 if self.kind == "decreasing-tanh" else 1.0
            out = sign * 0.5 * self.amplitude * sech2
        else:
            lo, hi = self.times[0], self.times[-1]
            inside = (t >= lo) & (t <= hi)
            out = np.where(inside, self._spline(np.clip(t, lo, hi), 1), 0.0)
        return out if out.ndim else float(out)

    def analytic_sup(self):
        """sup_t (|eps| + |eps'|); closed form for the built-in kinds."""
        a = abs(self.amplitude)
        if self.kind == "constant":
            return abs(self.level)
        if self.kind == "decreasing-tanh":
            # with s = tanh t: 1 + a/2 (1 - s + 1 - s^2), maximal at s = -1/2
            return 1.0 + 1.125 * a
        if self.kind == "increasing-tanh":
            # 1 - a/2 (1 - s) + a/2 (1 - s^2) = 1 + a/2 (s - s^2), maximal at s = 1/2
            return max(1.0 + a / 8.0, 1.0)
        t = np.linspace(self.times[0], self.times[-1], 20001)
        return float(np.max(np.abs(self.value(t)) + np.abs(self.derivative(t))))

    def sup_abs(self):
        """sup_t |eps(t)|."""
        if self.kind == "constant":
            return abs(self.level)
        if self.kind == "decreasing-tanh":
            return max(abs(1.0 + self.amplitude), 1.0)
        if self.kind == "increasing-tanh":
            return max(abs(1.0 - self.amplitude), 1.0)
        return float(np.max(np.abs(self.values)))


# --------------------------------------------------------------------------- a(s)

@dataclass(frozen=True)
class DiffusionLaw:
    """Nonlocal diffusion a(s) = base + amplitude * tanh(s / scale)."""

    base: float
    amplitude: float = 0.0
    scale: float = 1.0
    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if self.lower is None:
            object.__setattr__(self, "lower", self.base - abs(self.amplitude))
        if self.upper is None:
            object.__setattr__(self, "upper", self.base + abs(self.amplitude))

    def __call__(self, s):
        if self.amplitude == 0.0:
            return self.base if np.ndim(s) == 0 else np.full(np.shape(s), self.base)
        return self.base + self.amplitude * np.tanh(np.asarray(s) / self.scale)

    def lipschitz_constant_on(self, radius):
        # tanh is 1-Lipschitz globally, so the local constant does not grow with R
        return abs(self.amplitude) / self.scale


@dataclass(frozen=True)
class NonlocalFunctional:
    weights: tuple = (1.0,)

    def vector(self, n):
        w = np.zeros(n)
        src = np.asarray(self.weights, dtype=float)[:n]
        w[: src.shape[0]] = src
        return w

    @property
    def norm(self):
        return float(np.linalg.norm(np.asarray(self.weights, dtype=float)))


# --------------------------------------------------------------------------- f(u)

@dataclass(frozen=True)
class Nonlinearity:
    """f(u) = linear u - cubic u^3 together with its structural constants.

    ``kind == "zero"`` is f = 0; its dissipativity bound only holds on the
    bounded probe range, which the audit reports as a note.
    """

    kind: str = "cubic"
    linear: float = 1.0
    cubic: float = 1.0
    p: float = 4.0
    C0: float = 1.0
    C1: float = 1.0
    C2: float = 0.5
    eta_tilde: float = 1.0

    def __call__(self, u):
        if self.kind == "zero":
            return np.zeros_like(np.asarray(u, dtype=float))
        return self.linear * u - self.cubic * u * u * u

    def antiderivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        return 0.5 * self.linear * u ** 2 - 0.25 * self.cubic * u ** 4

    @property
    def vanishes_at_zero(self):
        return True


def zero_nonlinearity(C0=1.0, C1=1e-6, C2=1e-6, eta_tilde=1e-6, p=2.0):
    return Nonlinearity(kind="zero", linear=0.0, cubic=0.0, p=p, C0=C0, C1=C1,
                        C2=C2, eta_tilde=eta_tilde)


def cubic_nonlinearity(linear=1.0, cubic=1.0, C0=None, C1=None, C2=None, eta_tilde=None):
    """f(u) = linear*u - cubic*u^3 with constants valid for all real u.

    f'(u) <= linear gives eta_tilde; f(u)u = linear u^2 - cubic u^4 is bounded
    above by linear^2/(2 cubic) - (cubic/2) u^4 and below by -cubic u^4.
    """
    if cubic <= 0:
        raise ValueError("cubic coefficient must be positive")
    if C2 is None:
        C2 = 0.5 * cubic
    if C0 is None:
        C0 = max(1.0, linear * linear / (4.0 * (cubic - C2))) if cubic > C2 else 1.0
    if C1 is None:
        C1 = cubic
    if eta_tilde is None:
        eta_tilde = max(linear, 1e-12)
    return Nonlinearity(kind="cubic", linear=linear, cubic=cubic, p=4.0, C0=C0,
                        C1=C1, C2=C2, eta_tilde=eta_tilde)


# --------------------------------------------------------------------------- g(t, u_t)

@dataclass(frozen=True)
class DelayKernel:
    """Delay operator acting on the history segment.

    kinds
      none          g = 0
      discrete      g(t, v) = gain * v(-lag)
      variable      g(t, v) = gain * v(-lag(t)),  lag(t) = lag + lag_swing * sin(lag_frequency t)
      distributed   g(t, v) = int_{-k}^0 kernel(theta) v(theta) dtheta  (kernel on a uniform grid)

    ``lipschitz_bound`` is C_g in ||g(t,v1) - g(t,v2)||^2 <= C_g ||v1 - v2||^2_C.
    """

    kind: str = "none"
    window: float = 1.0
    lag: float = 1.0
    gain: float = 0.0
    lag_swing: float = 0.0
    lag_frequency: float = 1.0
    kernel: tuple = ()
    lipschitz_bound: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("none", "discrete", "variable", "distributed"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if not self.window > 0:
            raise ValueError("delay window k must be positive")
        if self.kind == "distributed" and len(self.kernel) < 2:
            raise ValueError("distributed delay needs at least two kernel samples")
        if self.lipschitz_bound is None:
            object.__setattr__(self, "lipschitz_bound", self.natural_bound())

    @property
    def theta_grid(self):
        return np.linspace(-self.window, 0.0, len(self.kernel))

    @property
    def quadrature_weights(self):
        n = len(self.kernel)
        w = np.full(n, self.window / (n - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return w * np.asarray(self.kernel, dtype=float)

    def natural_bound(self):
        if self.kind == "none":
            return 0.0
        if self.kind == "distributed":
            return float(np.sum(np.abs(self.quadrature_weights)) ** 2)
        return float(self.gain) ** 2

    def lag_at(self, t):
        if self.kind == "variable":
            return self.lag + self.lag_swing * math.sin(self.lag_frequency * t)
        return self.lag

    def offsets(self, t):
        """theta values at which the operator reads the segment."""
        if self.kind == "none":
            return np.empty(0)
        if self.kind == "distributed":
            return self.theta_grid
        return np.array([-self.lag_at(t)])

    @property
    def active(self):
        return self.kind != "none" and (self.gain != 0.0 or self.kind == "distributed")

    def combine(self, t, values):
        """g(t, v) from the segment values at ``offsets(t)`` (rows = offsets)."""
        if self.kind == "none":
            return 0.0
        if self.kind == "distributed":
            return self.quadrature_weights @ values
        return self.gain * values[0]

    def apply(self, t, lookup, n):
        """g(t, v) where lookup(theta_array) -> array (len(theta), n)."""
        if not self.active:
            return np.zeros(n)
        return self.combine(t, lookup(self.offsets(t)))


# --------------------------------------------------------------------------- h(t), phi

@dataclass(frozen=True)
class ForcingTerm:
    mode: int
    constant: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0


@dataclass(frozen=True)
class ForcingTail:
    """Time-independent slowly decaying modes h_j = amplitude * j^(-exponent), j >= start.

    With exponent <= 1/2 the L2 norm grows with the truncation while the H^-1
    norm stays bounded, modelling a forcing that lives in H^-1 only.
    """

    start: int
    amplitude: float
    exponent: float = 0.0


@dataclass(frozen=True)
class Forcing:
    terms: tuple = ()
    tail: Optional[ForcingTail] = None
    keep_from: int = 1
    keep_to: Optional[int] = None

    def _arrays(self, n):
        const = np.zeros(n)
        amp = np.zeros(n)
        freq = np.zeros(n)
        phase = np.zeros(n)
        for term in self.terms:
            j = term.mode - 1
            if 0 <= j < n:
                const[j] += term.constant
                amp[j] = term.amplitude
                freq[j] = term.frequency
                phase[j] = term.phase
        if self.tail is not None:
            j = np.arange(1, n + 1, dtype=float)
            sel = j >= self.tail.start
            const[sel] += self.tail.amplitude * j[sel] ** (-self.tail.exponent)
        mask = np.zeros(n)
        hi = n if self.keep_to is None else min(n, self.keep_to)
        mask[self.keep_from - 1: hi] = 1.0
        return const * mask, amp * mask, freq, phase

    def coefficients(self, t, n):
        const, amp, freq, phase = self._arrays(n)
        if not amp.any():
            return const
        return const + amp * np.sin(freq * t + phase)

    def is_zero(self, n):
        const, amp, _, _ = self._arrays(n)
        return not (const.any() or amp.any())

    def restrict(self, keep_from=1, keep_to=None):
        lo = max(self.keep_from, keep_from)
        hi_candidates = [x for x in (self.keep_to, keep_to) if x is not None]
        hi = min(hi_candidates) if hi_candidates else None
        return replace(self, keep_from=lo, keep_to=hi)

    def hminus1_sq(self, t, eigenvalues):
        c = self.coefficients(t, len(eigenvalues))
        return float(np.sum(c * c / eigenvalues))

    def l2_sq(self, t, n):
        c = self.coefficients(t, n)
        return float(np.dot(c, c))


@dataclass(frozen=True)
class HistoryTerm:
    mode: int
    value: float
    rate: float = 0.0


@dataclass(frozen=True)
class InitialHistory:
    """phi_j(theta) = sum of value * exp(rate * theta) over the terms of mode j.

    ``vector`` overrides the terms with a constant-in-theta coefficient vector.
    """

    terms: tuple = ()
    vector: Optional[tuple] = None

    @classmethod
    def constant(cls, coeffs):
        return cls(vector=tuple(float(c) for c in coeffs))

    def value(self, theta, n):
        out = np.zeros(n)
        if self.vector is not None:
            v = np.asarray(self.vector, dtype=float)[:n]
            out[: v.shape[0]] = v
            return out
        for term in self.terms:
            if term.mode <= n:
                out[term.mode - 1] += term.value * math.exp(term.rate * theta)
        return out

    def derivative(self, theta, n):
        out = np.zeros(n)
        if self.vector is not None:
            return out
        for term in self.terms:
            if term.mode <= n:
                out[term.mode - 1] += term.value * term.rate * math.exp(term.rate * theta)
        return out


# --------------------------------------------------------------------------- spec

@dataclass(frozen=True)
class ProblemSpec:
    domain: DomainSpec
    epsilon: TimeProfile
    diffusion: DiffusionLaw
    nonlocal_: NonlocalFunctional
    nonlinearity: Nonlinearity
    delay: DelayKernel
    forcing: Forcing = field(default_factory=Forcing)
    initial_history: InitialHistory = field(default_factory=InitialHistory)
    name: str = "custom"

    @property
    def k(self):
        return self.delay.window

    @property
    def L(self):
        return float(self.epsilon.bound)

    @property
    def eigenvalues(self):
        return self.domain.eigenvalues

    @property
    def lambda1(self):
        return self.domain.lambda1

    def replace(self, **changes):
        return replace(self, **changes)


# --------------------------------------------------------------------------- audit

@dataclass(frozen=True)
class ProbeGrid:
    u_max: float = 100.0
    u_points: int = 8001
    t_min: float = -50.0
    t_max: float = 50.0
    t_points: int = 8001
    s_max: float = 50.0
    s_points: int = 4001
    pairs: int = 4000
    segments: int = 64
    seed: int = 0
    rtol: float = 1e-10
    limit_tol: float = 1e-8


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: object = None
    detail: str = ""


@dataclass
class AuditReport:
    checks: list
    derived: dict
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def violations(self):
        return [c for c in self.checks if not c.passed]

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def raise_if_failed(self):
        for c in self.checks:
            if not c.passed:
                raise HypothesisViolation(c.name, c.witness, c.detail)
        return self

    def lines(self):
        out = []
        for c in self.checks:
            status = "ok  " if c.passed else "FAIL"
            line = f"{status} {c.name}"
            if not c.passed:
                line += f"  witness={c.witness}  {c.detail}"
            out.append(line)
        for key, val in self.derived.items():
            out.append(f"     {key} = {val:.6g}")
        out.extend(f"note {n}" for n in self.notes)
        return out


def _worst(excess, points):
    i = int(np.argmax(excess))
    return float(excess[i]), points[i]


def _check_epsilon(spec, probe, checks):
    eps = spec.epsilon
    t = np.linspace(probe.t_min, probe.t_max, probe.t_points)
    val = np.asarray(eps.value(t))
    der = np.asarray(eps.derivative(t))

    far = eps.value(probe.t_max)
    checks.append(CheckResult(
        "eps-limit", abs(far - 1.0) <= probe.limit_tol, probe.t_max,
        f"eps({probe.t_max:g}) = {far:.12g}, expected -> 1"))

    total = np.abs(val) + np.abs(der)
    excess, w = _worst(total - eps.bound * (1 + probe.rtol), t)
    checks.append(CheckResult(
        "eps-bound", excess <= 0, float(w),
        f"|eps|+|eps'| exceeds L = {eps.bound:.6g} by {excess:.3g}"))

    excess, w = _worst(eps.eps_min - val, t)
    checks.append(CheckResult(
        "eps-positive", excess <= 0, float(w),
        f"eps drops below eps_min = {eps.eps_min:g}"))
    return float(np.max(der))


def _check_diffusion(spec, probe, sup_deps, checks):
    a = spec.diffusion
    s = np.linspace(-probe.s_max, probe.s_max, probe.s_points)
    vals = np.asarray(a(s), dtype=float)
    lo = a.lower - vals
    hi = vals - a.upper
    excess, w = _worst(np.maximum(lo, hi), s)
    threshold = 0.5 * (3.0 + spec.L + sup_deps)
    ok_range = excess <= probe.rtol * max(1.0, abs(a.upper))
    ok_floor = a.lower > threshold
    checks.append(CheckResult(
        "diffusion-bounds", ok_range and ok_floor,
        float(w) if not ok_range else a.lower,
        f"need (3 + L + sup eps')/2 = {threshold:.6g} < m = {a.lower:.6g} "
        f"<= a(s) <= M = {a.upper:.6g}"))

    lip = a.lipschitz_constant_on(probe.s_max)
    q = np.abs(np.diff(vals)) / np.diff(s)
    excess, w = _worst(q - lip * (1 + 1e-9) - 1e-14, s[:-1])
    checks.append(CheckResult(
        "diffusion-lipschitz", excess <= 0, float(w),
        f"difference quotient exceeds L_a = {lip:.6g}"))

    # the absorbing estimate also trades ||u||^2 for ||grad u||^2 / lambda1
    margin = 2 * a.lower - sup_deps - 1.0 - 1.0 / spec.lambda1 - (1.0 + spec.L)
    checks.append(CheckResult(
        "absorption-margin", margin >= 0, spec.lambda1,
        f"2m - sup eps' - 1 - 1/lambda1 - (1+L) = {margin:.6g} < 0"))


def _check_nonlinearity(spec, probe, rng, checks, notes):
    f = spec.nonlinearity
    u = np.linspace(-probe.u_max, probe.u_max, probe.u_points)
    fu = f(u)

    # one-sided Lipschitz on neighbours and random pairs
    a = np.concatenate([u[:-1], rng.uniform(-probe.u_max, probe.u_max, probe.pairs),
                        rng.uniform(-2.0, 2.0, probe.pairs)])
    b = np.concatenate([u[1:], rng.uniform(-probe.u_max, probe.u_max, probe.pairs),
                        rng.uniform(-2.0, 2.0, probe.pairs)])
    d = a - b
    lhs = (f(a) - f(b)) * d
    scale = np.abs(lhs) + f.eta_tilde * d * d
    excess, i = _worst(lhs - f.eta_tilde * d * d - probe.rtol * scale,
                       np.arange(a.shape[0]))
    checks.append(CheckResult(
        "one-sided-lipschitz", excess <= 0, (float(a[i]), float(b[i])),
        f"(f(u)-f(v))(u-v) > eta_tilde (u-v)^2 with eta_tilde = {f.eta_tilde:g}"))

    fuu = fu * u
    up = np.abs(u) ** f.p
    scale = np.abs(fuu) + f.C0 + f.C1 * up + f.C2 * up
    upper = fuu - (f.C0 - f.C2 * up) - probe.rtol * scale
    lower = (-f.C0 - f.C1 * up) - fuu - probe.rtol * scale
    excess, w = _worst(np.maximum(upper, lower), u)
    tail_ok = True
    if f.kind == "cubic":
        # f(u)u ~ -cubic u^4 at infinity must sit between -C1|u|^p and -C2|u|^p
        tail_ok = f.p == 4.0 and f.C2 <= f.cubic <= f.C1
    else:
        notes.append(f"f = 0 satisfies the dissipativity bound only for |u| <= "
                     f"{math.sqrt(f.C0 / f.C2) ** (2.0 / f.p):.3g}; checked on probes")
    checks.append(CheckResult(
        "dissipativity", excess <= 0 and tail_ok, float(w),
        f"-C0 - C1|u|^p <= f(u)u <= C0 - C2|u|^p fails (C0={f.C0:g}, C1={f.C1:g}, "
        f"C2={f.C2:g}, p={f.p:g}, tail_ok={tail_ok})"))

    # F' = f by centred differences
    hstep = 1e-5
    uu = np.linspace(-5, 5, 1001)
    fd = (f.antiderivative(uu + hstep) - f.antiderivative(uu - hstep)) / (2 * hstep)
    err = np.abs(fd - f(uu)) - 1e-6 * (1 + np.abs(f(uu)))
    excess, w = _worst(err, uu)
    checks.append(CheckResult(
        "antiderivative", excess <= 0, float(w), "F' differs from f"))

    # bounds on F derived from the constants above
    Ct2 = f.C2 / (2.0 * f.p)
    Ct1 = 2.0 * f.C1 / f.p
    Ct0 = max(0.0, _refined_max(lambda v: f.antiderivative(v) + Ct2 * np.abs(v) ** f.p, u),
              _refined_max(lambda v: -f.antiderivative(v) - Ct1 * np.abs(v) ** f.p, u))
    return {"Ctilde0": Ct0, "Ctilde1": Ct1, "Ctilde2": Ct2}


def _refined_max(fn, grid):
    """Max of fn on the probe grid, polished by a bounded search around the best node."""
    vals = fn(grid)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = float(vals[i])
    if hi > lo:
        res = minimize_scalar(lambda v: -float(fn(np.array([v]))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def _random_segment_pair(rng, n, nodes, k):
    theta = np.linspace(-k, 0.0, nodes)
    # smooth random paths: a few random Fourier components in theta per mode
    amps = rng.normal(size=(3, 2, n)) / np.arange(1, n + 1)
    freqs = np.array([0.0, 1.0, 2.0]) * np.pi / k
    segs = []
    for s in range(2):
        v = sum(np.outer(np.cos(freqs[i] * theta), amps[i, s]) for i in range(3))
        segs.append(v)
    return theta, segs[0], segs[1]


def _check_delay(spec, probe, rng, checks):
    g = spec.delay
    n = spec.domain.mode_count
    k = g.window
    t_probe = np.linspace(probe.t_min, probe.t_max, 17)

    if g.kind in ("discrete", "variable"):
        lags = [g.lag_at(t) for t in np.linspace(0, 2 * math.pi / max(g.lag_frequency, 1e-12), 257)] \
            if g.kind == "variable" else [g.lag]
        bad = [lag for lag in lags if not (0 < lag <= k * (1 + 1e-12))]
        checks.append(CheckResult(
            "delay-lag", not bad, bad[0] if bad else None, f"lag must lie in (0, k = {k:g}]"))

    nodes = 129
    zero_ok = True
    finite_ok = True
    worst = (-np.inf, None)
    for i in range(probe.segments):
        theta, v1, v2 = _random_segment_pair(rng, n, nodes, k)
        t = float(t_probe[i % t_probe.shape[0]])

        def look(values):
            def lookup(th):
                th = np.atleast_1d(th)
                if not th.size:
                    return np.empty((0, n))
                return np.stack([np.interp(th, theta, values[:, j]) for j in range(n)], axis=-1)
            return lookup

        g1 = np.asarray(g.apply(t, look(v1), n))
        g2 = np.asarray(g.apply(t, look(v2), n))
        g0 = np.asarray(g.apply(t, look(np.zeros_like(v1)), n))
        finite_ok &= bool(np.all(np.isfinite(g1)) and np.all(np.isfinite(g2)))
        zero_ok &= bool(np.all(g0 == 0.0))
        lhs = float(np.sum((g1 - g2) ** 2))
        rhs = g.lipschitz_bound * float(np.max(np.sum((v1 - v2) ** 2, axis=1)))
        excess = lhs - rhs - probe.rtol * (lhs + rhs)
        if excess > worst[0]:
            worst = (excess, t)
    checks.append(CheckResult("delay-measurable", finite_ok, None, "g produced non-finite output"))
    checks.append(CheckResult("delay-zero", zero_ok, None, "g(t, 0) != 0"))
    checks.append(CheckResult(
        "delay-lipschitz", worst[0] <= 0, worst[1],
        f"||g(v1)-g(v2)||^2 > C_g ||v1-v2||^2_C with C_g = {g.lipschitz_bound:g}"))


def _check_forcing(spec, probe, checks):
    lam = spec.eigenvalues
    ts = np.linspace(probe.t_min, probe.t_max, 401)
    vals = np.array([spec.forcing.hminus1_sq(t, lam) for t in ts])
    ok = bool(np.all(np.isfinite(vals)))
    checks.append(CheckResult("forcing-finite", ok, None, "non-finite H^-1 norm of h"))
    hist = spec.initial_history
    th = np.linspace(-spec.k, 0.0, 65)
    phis = np.array([hist.value(x, spec.domain.mode_count) for x in th])
    checks.append(CheckResult("history-finite", bool(np.all(np.isfinite(phis))), None,
                              "non-finite initial history"))
    checks.append(CheckResult("nonlocal-l2", np.isfinite(spec.nonlocal_.norm), None,
                              "weight vector of l is not square summable"))


def audit(spec, probe=None):
    """Sample every structural hypothesis; deterministic for a fixed probe seed."""
    probe = probe or ProbeGrid()
    rng = np.random.default_rng(probe.seed)
    checks = []
    notes = []
    sup_deps = _check_epsilon(spec, probe, checks)
    _check_diffusion(spec, probe, sup_deps, checks)
    derived = _check_nonlinearity(spec, probe, rng, checks, notes)
    _check_delay(spec, probe, rng, checks)
    _check_forcing(spec, probe, checks)
    derived["sup_eps_prime"] = sup_deps
    derived["L"] = spec.L
    derived["lambda1"] = spec.lambda1
    derived["C_g"] = spec.delay.lipschitz_bound
    return AuditReport(checks=checks, derived=derived, notes=notes)


def require_audited(spec, probe=None):
    return audit(spec, probe).raise_if_failed()

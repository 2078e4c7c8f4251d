"""Delayed segment u_t(theta) = u(t + theta), theta in [-k, 0].

Samples live on a uniform grid of spacing dt in a ring buffer holding k/dt + 1
nodes.  Each node keeps a left and a right derivative so the seam at the
initial time (history slope vs. first right-hand side) stays exact; lookups
use the cubic Hermite piece through the bracketing nodes.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfWindow
from .spectral import SpectralField

_TIME_TOL = 1e-9


def steps_per_window(k, dt):
    m = k / dt
    r = round(m)
    if r < 1 or abs(m - r) > 1e-9 * max(1.0, m):
        raise ValueError(f"dt = {dt:g} must divide the delay window k = {k:g}")
    return int(r)


def hermite(s, h, y0, d0, y1, d1):
    """Cubic Hermite piece at local coordinate s in [0, 1] (extrapolates outside)."""
    s = np.asarray(s, dtype=float)[..., None]
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)


class HistorySegment:
    """Ring buffer of the most recent k/dt + 1 states."""

    def __init__(self, window, dt, mode_count):
        self.window = float(window)
        self.dt = float(dt)
        self.steps = steps_per_window(window, dt)
        self.capacity = self.steps + 1
        self.n = int(mode_count)
        self._values = np.zeros((self.capacity, self.n))
        self._dleft = np.zeros((self.capacity, self.n))
        self._dright = np.zeros((self.capacity, self.n))
        self._origin = 0.0   # time of logical index 0
        self._first = 0      # logical index of the oldest stored node
        self._last = -1      # logical index of the newest stored node
        self._complete = -1  # newest node whose derivative is known

    # ------------------------------------------------------------------ filling
    def seed(self, history, tau):
        """Fill [tau - k, tau] from phi; history.value/derivative take (theta, n)."""
        self._origin = tau - self.window
        self._first = 0
        self._last = -1
        for i in range(self.capacity):
            theta = -self.window + i * self.dt
            if i == self.steps:
                theta = 0.0
            d = history.derivative(theta, self.n)
            self.push(history.value(theta, self.n), d)
        return self

    def push(self, value, derivative=None):
        """Append the next node; derivative may be supplied later."""
        self._last += 1
        if self._last - self._first >= self.capacity:
            self._first += 1
        slot = self._last % self.capacity
        self._values[slot] = value
        if derivative is not None:
            self._dleft[slot] = derivative
            self._dright[slot] = derivative
            self._complete = self._last

    def set_derivative(self, derivative, side="both"):
        """Attach the derivative of the newest node."""
        slot = self._last % self.capacity
        if side in ("both", "right"):
            self._dright[slot] = derivative
        if side in ("both", "left"):
            self._dleft[slot] = derivative
        self._complete = self._last

    # ------------------------------------------------------------------ access
    def time_of(self, index):
        return self._origin + index * self.dt

    @property
    def t(self):
        return self.time_of(self._last)

    @property
    def latest(self):
        return self._values[self._last % self.capacity].copy()

    def lookup(self, times):
        """States at absolute times; beyond the newest complete node the last
        complete Hermite piece is extrapolated."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.shape == (1,):
            return self._lookup_one(float(times[0]))[None, :]
        t_first = self.time_of(self._first)
        if times.size and times.min() < t_first - _TIME_TOL * max(1.0, self.dt):
            raise OutOfWindow(f"lookup at {times.min():.12g} precedes window start {t_first:.12g}")
        pos = (times - self._origin) / self.dt
        idx = np.floor(pos + 1e-12).astype(int)
        idx = np.clip(idx, self._first, self._complete - 1 if self._complete > self._first
                      else self._first)
        s = pos - idx
        a = idx % self.capacity
        b = (idx + 1) % self.capacity
        out = hermite(s, self.dt, self._values[a], self._dright[a],
                      self._values[b], self._dleft[b])
        exact = np.abs(s) <= 1e-12
        if exact.any():
            out[exact] = self._values[a[exact]]
        return out

    def _lookup_one(self, t):
        # scalar path of lookup; same arithmetic, no array dispatch
        t_first = self._origin + self._first * self.dt
        if t < t_first - _TIME_TOL * max(1.0, self.dt):
            raise OutOfWindow(f"lookup at {t:.12g} precedes window start {t_first:.12g}")
        pos = (t - self._origin) / self.dt
        hi = self._complete - 1 if self._complete > self._first else self._first
        idx = min(max(math.floor(pos + 1e-12), self._first), hi)
        s = pos - idx
        a = idx % self.capacity
        if abs(s) <= 1e-12:
            return self._values[a].copy()
        b = (idx + 1) % self.capacity
        s2 = s * s
        s3 = s2 * s
        h = self.dt
        return ((2 * s3 - 3 * s2 + 1) * self._values[a] + (s3 - 2 * s2 + s) * h * self._dright[a]
                + (-2 * s3 + 3 * s2) * self._values[b] + (s3 - s2) * h * self._dleft[b])

    def sample(self, theta):
        """u_t(theta) for theta in [-k, 0]."""
        if theta < -self.window - _TIME_TOL or theta > _TIME_TOL:
            raise OutOfWindow(f"theta = {theta} outside [-{self.window}, 0]")
        t = self.t + theta
        return SpectralField(self.lookup([t])[0], t)

    def window_arrays(self):
        """(times, values) of the stored window ordered oldest to newest."""
        idx = np.arange(self._first, self._last + 1)
        return self._origin + idx * self.dt, self._values[idx % self.capacity].copy()

    def snapshot(self):
        times, values = self.window_arrays()
        return SegmentSnapshot(times=times, values=values)


@dataclass(frozen=True)
class SegmentSnapshot:
    """Immutable copy of a segment's nodes."""

    times: np.ndarray
    values: np.ndarray

    @property
    def t(self):
        return float(self.times[-1])

    def __sub__(self, other):
        return SegmentSnapshot(self.times, self.values - other.values)


# ---------------------------------------------------------------------- sup norms

NORM_KINDS = ("C_L2", "C_Ht", "C_Ht1")
EPS_WEIGHTS = ("argmax", "current", "window-max", "window-min")


def composite_sq(times, values, eigenvalues, eps_fn=None, kind="C_Ht", weight="argmax"):
    """Squared sup-norm of a segment over its nodes.

    C_L2:  max ||u||^2
    C_Ht:  max ||u||^2 + |eps| max ||grad u||^2
    C_Ht1: max ||grad u||^2 + |eps| max ||Lap u||^2
    ``weight`` picks the eps value: at the node maximising the derivative
    term, at the newest node, or the max / min of |eps| over the window.
    """
    sq = values * values
    if kind == "C_L2":
        return float(np.max(sq.sum(axis=1)))
    if kind == "C_Ht":
        base = sq.sum(axis=1)
        upper = sq @ eigenvalues
    elif kind == "C_Ht1":
        base = sq @ eigenvalues
        upper = sq @ (eigenvalues * eigenvalues)
    else:
        raise ValueError(f"unknown norm kind {kind!r}")
    j = int(np.argmax(upper))
    w = _eps_weight(times, eps_fn, weight, j)
    return float(np.max(base) + w * upper[j])


def _eps_weight(times, eps_fn, weight, j):
    if weight == "argmax":
        return abs(eps_fn(times[j]))
    if weight == "current":
        return abs(eps_fn(times[-1]))
    e = np.abs(np.asarray(eps_fn(np.asarray(times))))
    if weight == "window-max":
        return float(np.max(e))
    if weight == "window-min":
        return float(np.min(e))
    raise ValueError(f"unknown eps weight {weight!r}")


def sup_norm(segment, kind, eps_profile, eigenvalues, weight="argmax"):
    """Sup-norm (not squared) of a HistorySegment or SegmentSnapshot."""
    if isinstance(segment, HistorySegment):
        times, values = segment.window_arrays()
    else:
        times, values = segment.times, segment.values
    eps_fn = eps_profile.value if eps_profile is not None else None
    return float(np.sqrt(composite_sq(times, values, eigenvalues, eps_fn, kind, weight)))


def sliding_composite_sq(times, values, nodes_per_window, eigenvalues, eps_fn=None,
                         kind="C_Ht", weight="argmax"):
    """composite_sq of every full trailing window along a uniformly spaced record.

    Row r of the result corresponds to the window ending at times[r + w - 1]
    where w = nodes_per_window.
    """
    from numpy.lib.stride_tricks import sliding_window_view

    sq = values * values
    if kind == "C_L2":
        base = sq.sum(axis=1)
        return sliding_window_view(base, nodes_per_window).max(axis=1)
    if kind == "C_Ht":
        base = sq.sum(axis=1)
        upper = sq @ eigenvalues
    elif kind == "C_Ht1":
        base = sq @ eigenvalues
        upper = sq @ (eigenvalues * eigenvalues)
    else:
        raise ValueError(f"unknown norm kind {kind!r}")
    bw = sliding_window_view(base, nodes_per_window).max(axis=1)
    uw = sliding_window_view(upper, nodes_per_window)
    j = uw.argmax(axis=1)
    start = np.arange(uw.shape[0])
    umax = uw[start, j]
    if weight == "argmax":
        w = np.abs(np.asarray(eps_fn(times[start + j]), dtype=float))
    elif weight == "current":
        w = np.abs(np.asarray(eps_fn(times[start + nodes_per_window - 1]), dtype=float))
    else:
        e = np.abs(np.asarray(eps_fn(times), dtype=float))
        ew = sliding_window_view(e, nodes_per_window)
        w = ew.max(axis=1) if weight == "window-max" else ew.min(axis=1)
    return bw + w * umax


# ---------------------------------------------------------------------- CSV

def write_long_csv(path_or_file, times, values):
    """Long-form dump ``t,j,coef`` with 17 significant digits (exact round trip)."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j", "coef"])
        for t, row in zip(times, values):
            for j, c in enumerate(row, start=1):
                w.writerow([format(float(t), ".17g"), j, format(float(c), ".17g")])
    finally:
        if own:
            fh.close()


def read_long_csv(path_or_file):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, newline="") if own else path_or_file
    try:
        rows = list(csv.DictReader(fh))
    finally:
        if own:
            fh.close()
    times = sorted({float(r["t"]) for r in rows})
    n = max(int(r["j"]) for r in rows)
    index = {t: i for i, t in enumerate(times)}
    values = np.zeros((len(times), n))
    for r in rows:
        values[index[float(r["t"])], int(r["j"]) - 1] = float(r["coef"])
    return np.array(times), values

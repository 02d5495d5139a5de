"""Adaptive integration of the moment flow along an eigenvalue path."""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, StiffnessError
from .generator import (
    DEFAULT_GAP_GUARD,
    MomentField,
    MomentGenerator,
    rates_from_lambda,
    split_short_long,
)

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

STEP_CAP_FACTOR = 0.5
MONITOR_FACTOR = 10.0


@dataclass
class EvolveTrace:
    """Per-run record of the integrator.

    ``maxima``/``minima`` hold ``max f`` and ``min f`` after every accepted
    step (index 0 is the initial field). ``monitor_rejections`` counts steps
    refused by the maximum-principle monitor.
    """

    times: list = field(default_factory=list)
    maxima: list = field(default_factory=list)
    minima: list = field(default_factory=list)
    accepted: int = 0
    error_rejections: int = 0
    monitor_rejections: int = 0
    guard_triggers: int = 0
    snapshots: dict = field(default_factory=dict)

    def monotonicity_violations(self, tol):
        """Accepted steps where the max rose or the min fell by more than ``tol``."""
        mx, mn = np.asarray(self.maxima), np.asarray(self.minima)
        return int(np.count_nonzero(np.diff(mx) > tol) + np.count_nonzero(np.diff(mn) < -tol))


class _RateSource:
    """Rate fields along a path, reusing the last one while lambda is unchanged."""

    def __init__(self, path, kind, gap_guard, cutoff):
        self.path, self.kind, self.gap_guard, self.cutoff = path, kind, gap_guard, cutoff
        self._key = None
        self._rates = None
        self.guard_triggers = 0

    def at(self, t):
        lam = self.path.at(t)
        key = lam.tobytes()
        if key != self._key:
            rates = rates_from_lambda(lam, self.kind, self.gap_guard)
            self.guard_triggers = max(self.guard_triggers, rates.guard_triggers)
            if self.cutoff is not None:
                rates = split_short_long(rates, self.cutoff)[0]
            self._key, self._rates = key, rates
        return self._rates


def _default_kind(cls):
    return "hermitian" if cls == "hermitian" else "symmetric"


def evolve(
    f0,
    lambda_path,
    t_end,
    cls="symmetric",
    tol=1e-10,
    *,
    kind=None,
    cutoff=None,
    gap_guard=DEFAULT_GAP_GUARD,
    snapshot_times=(),
    trace=None,
):
    """Solve ``d/dt f = B(t) f`` from ``f0`` up to ``t_end``.

    Rates are rebuilt from the linearly interpolated eigenvalues at every
    stage. Steps never exceed ``0.5 / max exit rate`` and never cross grid
    times of the path. A step is accepted when the embedded error estimate is
    at most ``tol * max(1, |f|_inf)`` and the max (min) of ``f`` has not risen
    (fallen) by more than ``10 tol``.

    ``kind`` selects the rates (``"covariance"`` for the Wishart flow; by
    default it follows ``cls``). ``cutoff`` restricts the generator to jumps
    with ``|i - j| <= cutoff``. Pass an :class:`EvolveTrace` to record the run.
    """
    if not isinstance(f0, MomentField):
        raise ContractError("f0 must be a MomentField")
    if lambda_path.N != f0.N:
        raise ContractError(f"path has N={lambda_path.N}, field has N={f0.N}")
    if t_end < 0:
        raise ContractError("t_end must be nonnegative")
    if lambda_path.kind != "frozen" and t_end > lambda_path.t_end * (1 + 1e-12):
        raise ContractError(f"t_end={t_end} lies beyond the path (ends at {lambda_path.t_end})")
    kind = kind or _default_kind(cls)
    gen = MomentGenerator.for_space(f0.space, cls)
    source = _RateSource(lambda_path, kind, gap_guard, cutoff)
    trace = trace if trace is not None else EvolveTrace()

    def rhs(t, y):
        return gen.apply(y, source.at(t))

    y = f0.values.copy()
    t = 0.0
    trace.times.append(t)
    trace.maxima.append(float(y.max()))
    trace.minima.append(float(y.min()))
    stops = sorted({float(s) for s in snapshot_times if 0 <= s <= t_end} | {float(t_end)})
    stops = sorted(set(stops) | {float(s) for s in lambda_path.times if 0 < s < t_end})
    wanted = {float(s) for s in snapshot_times}
    if 0.0 in wanted:
        trace.snapshots[0.0] = y.copy()
    h = None
    k1 = rhs(t, y) if t_end > 0 else None
    for stop in stops:
        while t < stop:
            exit_max = float(gen.matrix(source.at(t))[1].max())
            cap = STEP_CAP_FACTOR / exit_max if exit_max > 0 else stop - t
            h = cap if h is None else min(h, cap)
            h_step = min(h, stop - t)
            if h_step <= 1e-13 * max(1.0, t_end):
                lam = lambda_path.at(t)
                gap = float(np.min(np.diff(lam))) if lam.size > 1 else np.inf
                raise StiffnessError(f"step size underflow at t={t:.6g}; minimum eigenvalue gap {gap:.3e}", min_gap=gap)
            ks = [k1]
            for s in range(1, 7):
                ys = y + h_step * sum(a * k for a, k in zip(_A[s], ks))
                ks.append(rhs(t + _C[s] * h_step, ys))
            y_new = y + h_step * sum(b * k for b, k in zip(_B5, ks) if b)
            err = h_step * np.max(np.abs(sum(e * k for e, k in zip(_E, ks))))
            scale = tol * max(1.0, float(np.max(np.abs(y))))
            ratio = err / scale
            if ratio > 1.0:
                trace.error_rejections += 1
                h = h_step * max(0.2, 0.9 * ratio ** -0.2)
                continue
            if (y_new.max() > y.max() + MONITOR_FACTOR * tol) or (y_new.min() < y.min() - MONITOR_FACTOR * tol):
                trace.monitor_rejections += 1
                h = 0.5 * h_step
                continue
            t = stop if stop - (t + h_step) <= 1e-14 * max(1.0, stop) else t + h_step
            y = y_new
            k1 = ks[6]
            trace.accepted += 1
            trace.times.append(t)
            trace.maxima.append(float(y.max()))
            trace.minima.append(float(y.min()))
            growth = 5.0 if ratio == 0 else min(5.0, 0.9 * ratio ** -0.2)
            # a step shortened to land on a stop keeps the proposed size
            h = max(h, h_step * growth) if h_step < h else h_step * growth
        if stop in wanted:
            trace.snapshots[stop] = y.copy()
    trace.guard_triggers = max(trace.guard_triggers, source.guard_triggers)
    return MomentField(f0.space, y, meta={"t": float(t_end), "class": cls, "kind": kind, "cutoff": cutoff})

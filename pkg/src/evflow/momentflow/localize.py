"""Flattening/averaging operators and finite-speed diagnostics of the short-range flow."""
from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from ..errors import ContractError
from .generator import DEFAULT_GAP_GUARD, MomentField, MomentGenerator, get_space
from .integrate import EvolveTrace, evolve


def averaging_range(N, alpha):
    """Integers ``a`` with ``alpha N <= a <= 2 alpha N``."""
    if not 0 < alpha < 0.25:
        raise ContractError(f"alpha must lie in (0, 1/4), got {alpha}")
    if alpha * N < 1:
        raise ContractError(f"alpha * N = {alpha * N:.3g} must be at least 1")
    lo, hi = ceil(alpha * N - 1e-12), floor(2 * alpha * N + 1e-12)
    return np.arange(lo, hi + 1)


def flat_av(f, alpha):
    """Average of the flattened fields ``Flat_a f`` over ``a in [alpha N, 2 alpha N]``.

    ``Flat_a f(eta) = f(eta)`` when every particle lies in ``[a, N + 1 - a]``
    and 1 otherwise, so ``Av f = a_eta f + (1 - a_eta)`` where ``a_eta`` is
    the fraction of ``a`` values keeping ``eta`` inside. Returns
    ``(Av f, a_eta)``.
    """
    N = f.N
    a_vals = averaging_range(N, alpha)
    P = f.space.positions
    inner = np.minimum(P[:, 0], N + 1 - P[:, -1])
    coeff = (a_vals[None, :] <= inner[:, None]).mean(axis=1)
    av = coeff * f.values + (1.0 - coeff)
    return MomentField(f.space, av, meta={"alpha": alpha}), coeff


@dataclass
class PropagationProfile:
    """Mass of the short-range propagator started at ``eta0``, binned by distance."""

    distances: np.ndarray
    mass: np.ndarray
    total: float
    raw_total: float

    def beyond(self, threshold):
        """Mass at distance strictly greater than ``threshold``."""
        return float(self.mass[self.distances > threshold].sum())

    def rows(self):
        return zip(self.distances.tolist(), self.mass.tolist())


def _propagate_delta(eta0, lambda_path, t, cutoff, cls, tol, gap_guard, kind=None, trace=None):
    space = get_space(eta0.N, eta0.n)
    delta = MomentField.delta(space, eta0)
    return evolve(delta, lambda_path, t, cls, tol, kind=kind, cutoff=cutoff, gap_guard=gap_guard, trace=trace)


def propagation_profile(eta0, lambda_path, t, cutoff, cls="symmetric", *, tol=1e-12, gap_guard=DEFAULT_GAP_GUARD, trace=None):
    """Distance histogram of ``r_t(eta0, .) = (U_S(0, t) delta_eta0)``.

    The generator acts on functions, so ``r_t(eta0, xi)`` is the chance that
    the walk started at ``xi`` sits at ``eta0`` at time ``t``. The reported
    mass is ``pi(xi) |r_t(eta0, xi)| / pi(eta0)``, the forward transition
    probability from ``eta0`` under the reversible measure; it sums to one and
    equals ``|r_t|`` whenever ``pi`` is uniform (one particle, or the Hermitian class).
    """
    r = _propagate_delta(eta0, lambda_path, t, cutoff, cls, tol, gap_guard, trace=trace)
    space = r.space
    pi = MomentGenerator.for_space(space, cls).weights()
    mass = pi * np.abs(r.values) / pi[space.index(eta0)]
    d = space.distances_from(eta0)
    dist = np.arange(d.max() + 1)
    hist = np.bincount(d, mass, minlength=dist.size)
    return PropagationProfile(dist, hist, float(mass.sum()), float(r.values.sum()))


def short_range_error(eta0, lambda_path, t, cutoff, cls="symmetric", *, tol=1e-12, gap_guard=DEFAULT_GAP_GUARD, traces=None):
    """``|| (U_B(0, t) - U_S(0, t)) delta_eta0 ||_1`` for the full and short-range flows.

    If ``traces`` is a list, the traces of both runs are appended to it.
    """
    runs = (EvolveTrace(), EvolveTrace())
    full = _propagate_delta(eta0, lambda_path, t, None, cls, tol, gap_guard, trace=runs[0])
    short = _propagate_delta(eta0, lambda_path, t, cutoff, cls, tol, gap_guard, trace=runs[1])
    if traces is not None:
        traces.extend(runs)
    return float(np.abs(full.values - short.values).sum())


def localized_evolve(f0, lambda_path, t_end, cutoff, alpha, cls="symmetric", tol=1e-10, *, gap_guard=DEFAULT_GAP_GUARD, trace=None):
    """Short-range flow started from the flattened field ``Av f0``."""
    g0, _ = flat_av(f0, alpha)
    trace = trace if trace is not None else EvolveTrace()
    return evolve(g0, lambda_path, t_end, cls, tol, cutoff=cutoff, gap_guard=gap_guard, trace=trace)

"""Variance profiles and random matrix samplers.

All samplers are pure functions of their arguments and a 64-bit seed.
"""
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .errors import (
    ContractError,
    InfeasibleProfileError,
    InvalidDimensionError,
    NumericError,
    UnsupportedAspectError,
)

ENTRY_LAWS = ("gaussian", "bernoulli_symmetric", "uniform_centered")
SYMMETRY_CLASSES = ("symmetric", "hermitian", "covariance")

COLUMN_SUM_TOL = 1e-12
SINKHORN_MAX_ITER = 10_000


@dataclass(frozen=True)
class VarianceProfile:
    """Entry variances ``sigma2[i, j]`` of a generalized Wigner matrix.

    ``C`` is the declared comparability constant: every entry must lie in
    ``[1/(C N), C/N]``.
    """

    sigma2: np.ndarray
    C: float = 1.0

    @property
    def N(self):
        return self.sigma2.shape[0]

    def violations(self):
        """List the violated invariants (empty when the profile is valid)."""
        s = self.sigma2
        out = []
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            return ["sigma2 must be a square matrix"]
        N = s.shape[0]
        if not np.array_equal(s, s.T):
            out.append("sigma2 is not exactly symmetric")
        resid = np.max(np.abs(s.sum(axis=0) - 1.0))
        if resid > COLUMN_SUM_TOL:
            out.append(f"column sums deviate from 1 by {resid:.3e}")
        lo, hi = 1.0 / (self.C * N), self.C / N
        # relative slack absorbs the last-ulp effects of the renormalization
        if np.any(s < lo * (1 - 1e-12)) or np.any(s > hi * (1 + 1e-12)):
            out.append(f"entries outside [{lo:.6g}, {hi:.6g}]")
        return out

    def check(self):
        problems = self.violations()
        if problems:
            raise ContractError("invalid variance profile: " + "; ".join(problems))
        return self


def _check_dimension(N):
    if int(N) != N or N < 2:
        raise InvalidDimensionError(f"matrix dimension must be an integer >= 2, got {N}")
    return int(N)


def uniform_profile(N):
    """Wigner profile with every variance equal to ``1/N``."""
    N = _check_dimension(N)
    return VarianceProfile(np.full((N, N), 1.0 / N), C=1.0)


def _symmetric_sinkhorn(a):
    # x <- sqrt(x / (a x)) converges to the scaling with diag(x) a diag(x) doubly stochastic
    x = np.ones(a.shape[0])
    for _ in range(SINKHORN_MAX_ITER):
        x = np.sqrt(x / (a @ x))
        s = x[:, None] * a * x[None, :]
        s = 0.5 * (s + s.T)
        if np.max(np.abs(s.sum(axis=0) - 1.0)) < 0.1 * COLUMN_SUM_TOL:
            return s
    raise NumericError(f"symmetric Sinkhorn scaling did not converge in {SINKHORN_MAX_ITER} iterations")


def banded_profile(N, c_min, c_max, seed):
    """Random symmetric profile with entries in ``[c_min/N, c_max/N]``.

    A random symmetric matrix with entries in the target band is scaled to
    unit column sums (symmetric Sinkhorn) and then mixed with the uniform
    profile just enough to pull every entry back into the band. Mixing with
    the uniform profile keeps the column sums exactly at one.
    """
    N = _check_dimension(N)
    if not 0 < c_min <= c_max:
        raise ContractError(f"need 0 < c_min <= c_max, got ({c_min}, {c_max})")
    if c_max < 1 or c_min > 1:
        raise InfeasibleProfileError(
            f"column sums must equal 1 but every sum lies in [{c_min}, {c_max}]"
        )
    lo, hi = c_min / N, c_max / N
    if c_min == c_max:
        return VarianceProfile(np.full((N, N), 1.0 / N), C=1.0)
    rng = make_rng(seed)
    r = rng.uniform(lo, hi, size=(N, N))
    r = np.triu(r) + np.triu(r, 1).T
    s = _symmetric_sinkhorn(r)
    u = 1.0 / N
    theta = 0.0
    above, below = s > hi, s < lo
    if np.any(above):
        theta = max(theta, np.max((s[above] - hi) / (s[above] - u)))
    if np.any(below):
        theta = max(theta, np.max((lo - s[below]) / (u - s[below])))
    s = (1.0 - theta) * s + theta * u
    s = np.clip(s, lo, hi)
    s = 0.5 * (s + s.T)
    prof = VarianceProfile(s, C=max(c_max, 1.0 / c_min))
    if prof.violations():
        raise NumericError("banded profile failed its own invariant checks: " + "; ".join(prof.violations()))
    return prof


def standardized_entries(law, size, rng):
    """Mean-zero, unit-variance samples of the given entry law."""
    if law == "gaussian":
        return rng.standard_normal(size)
    if law == "bernoulli_symmetric":
        return rng.choice(np.array([-1.0, 1.0]), size=size)
    if law == "uniform_centered":
        return np.sqrt(3.0) * rng.uniform(-1.0, 1.0, size=size)
    raise ContractError(f"unknown entry law {law!r}; expected one of {ENTRY_LAWS}")


def _symmetrize_upper(upper_with_diag):
    return np.triu(upper_with_diag) + np.triu(upper_with_diag, 1).conj().T


def sample_matrix(profile, law="gaussian", symmetry="symmetric", seed=0):
    """Generalized Wigner matrix with entry variances from ``profile``.

    Hermitian off-diagonal entries have independent real and imaginary parts,
    each carrying half the entry variance; diagonals are real.
    """
    profile.check()
    N = profile.N
    sd = np.sqrt(profile.sigma2)
    rng = make_rng(seed)
    if symmetry == "symmetric":
        x = standardized_entries(law, (N, N), rng)
        return _symmetrize_upper(sd * x)
    if symmetry == "hermitian":
        re = standardized_entries(law, (N, N), rng)
        im = standardized_entries(law, (N, N), rng)
        off = sd * (re + 1j * im) / np.sqrt(2.0)
        h = _symmetrize_upper(np.triu(off, 1))
        h[np.diag_indices(N)] = np.diag(sd) * np.diag(re)
        return h
    raise ContractError(f"sample_matrix supports 'symmetric' and 'hermitian', got {symmetry!r}")


def sample_goe(N, seed):
    """GOE: off-diagonal variance 1/N, diagonal variance 2/N."""
    N = _check_dimension(N)
    rng = make_rng(seed)
    a = rng.standard_normal((N, N)) / np.sqrt(N)
    h = np.triu(a, 1)
    h = h + h.T
    h[np.diag_indices(N)] = np.sqrt(2.0) * np.diag(a)
    return h


def sample_gue(N, seed):
    """GUE: real and imaginary off-diagonal parts of variance 1/(2N), diagonal variance 1/N."""
    N = _check_dimension(N)
    rng = make_rng(seed)
    re = rng.standard_normal((N, N))
    im = rng.standard_normal((N, N))
    off = np.triu((re + 1j * im) / np.sqrt(2 * N), 1)
    h = off + off.conj().T
    h[np.diag_indices(N)] = np.diag(re) / np.sqrt(N)
    return h


def sample_wishart_factor(M, N, seed):
    """M x N factor with i.i.d. N(0, 1/N) entries; ``X.T @ X`` is the covariance matrix."""
    if int(N) != N or N < 1 or int(M) != M:
        raise InvalidDimensionError(f"bad factor shape ({M}, {N})")
    if M < N:
        raise UnsupportedAspectError(f"covariance class requires M >= N, got M={M}, N={N}")
    rng = make_rng(seed)
    return rng.standard_normal((int(M), int(N))) / np.sqrt(N)


def marchenko_pastur_edges(M, N):
    """Support edges of the spectrum of ``X.T @ X`` for the factor normalization above."""
    ratio = M / N
    return ratio * (1 - np.sqrt(N / M)) ** 2, ratio * (1 + np.sqrt(N / M)) ** 2


def sample_gaussian_divisible(N, t, law="bernoulli_symmetric", seed=0):
    """``H_0 + sqrt(t) G`` with ``H_0`` a Wigner matrix of the given law and
    ``G`` an independent GOE; the law of the additive flow at time ``t``."""
    N = _check_dimension(N)
    if t < 0:
        raise ContractError("t must be nonnegative")
    h0_seed, goe_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    H0 = sample_matrix(uniform_profile(N), law, "symmetric", int(h0_seed))
    return H0 + np.sqrt(t) * sample_goe(N, int(goe_seed))

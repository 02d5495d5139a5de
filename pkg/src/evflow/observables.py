"""Eigenvector statistics: normalized overlap moments, Monte Carlo estimates of
the moment field, Gaussian comparisons, the QUE statistic and maximum-principle
diagnostics."""
from dataclasses import dataclass, field
from itertools import product
from math import factorial, lgamma, exp

import numpy as np

from ._rng import make_rng
from .dyson import DEFAULT_GAP_GUARD, simulate_projections
from .errors import ContractError, StatisticsError
from .momentflow.configs import Configuration
from .semicircle import stieltjes_m

MAX_ORDER = 8
MIN_SAMPLES = 30
Q_KINDS = ("e1", "uniform", "random")


def gaussian_moment(order):
    """``a(order) = E N^order`` for a standard Gaussian: ``(order - 1)!!`` for even order."""
    if order < 0 or order % 2:
        raise ContractError("Gaussian targets are defined for even orders")
    out = 1
    for k in range(1, order, 2):
        out *= k
    return out


def complex_gaussian_moment(j):
    """``E |N_1 + i N_2|^(2j) = 2^j j!``."""
    return 2**j * factorial(j)


@dataclass(frozen=True)
class GaussianTargets:
    max_order: int = MAX_ORDER

    def real(self, order):
        return gaussian_moment(order)

    def complex(self, j):
        return complex_gaussian_moment(j)

    def table(self):
        return {order: gaussian_moment(order) for order in range(2, self.max_order + 1, 2)}


def haar_overlap_moment(N, j, symmetry="symmetric"):
    """Exact ``E (N |u_1|^2)^j`` for a uniform unit vector in R^N or C^N.

    ``|u_1|^2`` is Beta(1/2, (N-1)/2) in the real case and Beta(1, N-1) in
    the complex case.
    """
    if symmetry == "symmetric":
        a, b = 0.5, 0.5 * (N - 1)
    elif symmetry == "hermitian":
        a, b = 1.0, N - 1.0
    else:
        raise ContractError("symmetry must be 'symmetric' or 'hermitian'")
    log_m = lgamma(a + j) - lgamma(a) + lgamma(a + b) - lgamma(a + b + j)
    return N**j * exp(log_m)


def haar_que_second_moment(N, support, symmetry="symmetric"):
    """Exact ``E stat^2`` of the QUE statistic for a uniform unit vector and a +-1 test function."""
    if symmetry == "symmetric":
        return 2.0 * N / ((N + 2.0) * support)
    return N / ((N + 1.0) * support)


def test_vector(kind, N, seed=0):
    """Unit probe vectors: ``e1``, ``uniform`` or a seeded ``random`` direction."""
    if kind == "e1":
        q = np.zeros(N)
        q[0] = 1.0
        return q
    if kind == "uniform":
        return np.full(N, 1.0 / np.sqrt(N))
    if kind == "random":
        q = make_rng(seed).standard_normal(N)
        return q / np.linalg.norm(q)
    raise ContractError(f"unknown q kind {kind!r}; expected one of {Q_KINDS}")


@dataclass
class OverlapSample:
    """``z_k = sqrt(N) <q, u_k>`` for the 1-based indices in ``indices``."""

    z: np.ndarray
    indices: tuple
    seed: int = None
    t: float = 0.0
    tag: str = ""

    @classmethod
    def from_frame(cls, U, q, indices=None, **meta):
        U = np.asarray(U)
        N = U.shape[0]
        indices = tuple(range(1, N + 1)) if indices is None else tuple(indices)
        z = np.sqrt(N) * (np.conj(q) @ U[:, np.asarray(indices) - 1])
        return cls(z, indices, **meta)

    @property
    def is_complex(self):
        return np.iscomplexobj(self.z)


def normalized_moment(sample, eta):
    """``prod_x |z_x|^(2 eta_x) / a(2 eta_x)`` (real) or ``/ (2^j j!)`` (complex)."""
    pos = {k: i for i, k in enumerate(sample.indices)}
    out = 1.0
    for x, j in eta.sites():
        if x not in pos:
            raise ContractError(f"site {x} is not among the sampled indices")
        w = abs(sample.z[pos[x]]) ** 2
        norm = complex_gaussian_moment(j) if sample.is_complex else gaussian_moment(2 * j)
        out *= w**j / norm
    return float(out)


def moment_normalizers(configs, complex_case=False):
    out = []
    for eta in configs:
        norm = 1.0
        for _, j in eta.sites():
            norm *= complex_gaussian_moment(j) if complex_case else gaussian_moment(2 * j)
        out.append(norm)
    return np.array(out)


def normalized_moments(Z, configs):
    """Per-trial ``Q`` for every configuration: array of shape ``(trials, len(configs))``.

    ``Z`` holds overlaps for all N indices, one row per trial.
    """
    Z = np.atleast_2d(Z)
    W = np.abs(Z) ** 2
    out = np.empty((Z.shape[0], len(configs)))
    norms = moment_normalizers(configs, np.iscomplexobj(Z))
    for c, eta in enumerate(configs):
        prod = np.ones(Z.shape[0])
        for x in eta.positions:
            prod *= W[:, x - 1]
        out[:, c] = prod / norms[c]
    return out


@dataclass
class MCEstimate:
    configs: list
    mean: np.ndarray
    stderr: np.ndarray
    trials: int
    guard_triggers: int = 0
    meta: dict = field(default_factory=dict)

    def rows(self):
        for eta, m, s in zip(self.configs, self.mean, self.stderr):
            yield eta.label, m, s


def estimate_from_samples(Z, configs, **meta):
    Qs = normalized_moments(Z, configs)
    T = Qs.shape[0]
    mean = Qs.mean(axis=0)
    se = Qs.std(axis=0, ddof=1) / np.sqrt(T) if T > 1 else np.zeros(len(configs))
    return MCEstimate(list(configs), mean, se, T, meta=meta)


def _check_configs(configs, N):
    configs = list(configs)
    if not configs:
        raise ContractError("at least one configuration is required")
    n = configs[0].n
    for eta in configs:
        if eta.n != n:
            raise ContractError("all configurations must share the particle count")
        if eta.N != N:
            raise ContractError(f"configuration has N={eta.N}, path has N={N}")
    return configs


def estimate_f_mc(
    lambda_path,
    u0,
    q,
    configs,
    trials,
    micro_dt,
    seed,
    *,
    normalization="generator",
    gap_guard=DEFAULT_GAP_GUARD,
    threads=1,
    block_size=10_000,
):
    """Monte Carlo estimate of ``f_t(eta) = E(Q_t(eta) | lambda)`` at the path's end time.

    All trials share the eigenvalue path and ``u0``; only the eigenvector
    noise is resampled. Returns means with standard errors.
    """
    configs = _check_configs(configs, lambda_path.N)
    if trials < 100:
        raise ContractError("estimate_f_mc needs at least 100 trials")
    info = {}
    Z = simulate_projections(
        lambda_path, u0, q, trials, micro_dt, seed,
        normalization=normalization, gap_guard=gap_guard, threads=threads,
        block_size=block_size, info=info,
    )
    est = estimate_from_samples(Z, configs, seed=seed, t=lambda_path.t_end, micro_dt=micro_dt)
    est.guard_triggers = info["guard_triggers"]
    return est


def initial_field_values(space, u0, q):
    """Deterministic ``Q_0(eta)`` for every configuration of ``space``."""
    U = np.asarray(u0)
    z = np.sqrt(U.shape[0]) * (np.conj(q) @ U)
    configs = [Configuration.from_positions(space.N, p.tolist()) for p in space.positions]
    return normalized_moments(z[None, :], configs)[0]


# --- Gaussian comparison ------------------------------------------------------


def exponent_vectors(m, max_order):
    """Nonzero ``(j_1..j_m)`` with ``2 sum j <= max_order``."""
    top = max_order // 2
    return [j for j in product(range(top + 1), repeat=m) if 0 < sum(j) <= top]


@dataclass
class NormalityReport:
    indices: tuple
    rows: list
    samples: int

    def lookup(self, exponents):
        for row in self.rows:
            if row["exponents"] == tuple(exponents):
                return row
        raise KeyError(exponents)

    def csv_rows(self):
        for r in self.rows:
            yield r["label"], r["order"], r["empirical"], r["target"], r["stderr"], r["z_score"]


def normality_report(samples, indices, max_order=4, symmetry=None):
    """Mixed moments of ``w_k = N |<q, u_k>|^2`` (``2N |<q,u_k>|^2`` for complex
    overlaps) for ``k in indices`` against independent Gaussian targets.

    ``samples`` is a list of :class:`OverlapSample` or an array of overlaps
    with one row per draw and one column per index.
    """
    if max_order % 2 or not 2 <= max_order <= MAX_ORDER:
        raise ContractError(f"max_order must be even and at most {MAX_ORDER}")
    indices = tuple(indices)
    if isinstance(samples, np.ndarray):
        Z = np.atleast_2d(samples)
    else:
        Z = np.array([[s.z[s.indices.index(k)] for k in indices] for s in samples])
    if Z.shape[0] < MIN_SAMPLES:
        raise StatisticsError(f"need at least {MIN_SAMPLES} samples, got {Z.shape[0]}")
    if Z.shape[1] != len(indices):
        raise ContractError("one column per index is required")
    complex_case = np.iscomplexobj(Z) if symmetry is None else symmetry == "hermitian"
    W = np.abs(Z) ** 2 * (2.0 if complex_case else 1.0)
    rows = []
    for j in exponent_vectors(len(indices), max_order):
        vals = np.prod(W ** np.array(j)[None, :], axis=1)
        target = 1.0
        for jj in j:
            target *= complex_gaussian_moment(jj) if complex_case else gaussian_moment(2 * jj)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(vals.size))
        label = "*".join(f"{k}^{jj}" for k, jj in zip(indices, j) if jj)
        rows.append(
            dict(
                exponents=j, label=label, order=2 * sum(j), empirical=mean, target=float(target),
                stderr=se, z_score=(mean - target) / se if se > 0 else np.inf * np.sign(mean - target),
                rel_dev=(mean - target) / target,
            )
        )
    return NormalityReport(indices, rows, Z.shape[0])


def pooled_moment(W, j):
    """Mean of ``W^j`` over all entries of a (draws, indices) array, with the
    standard error taken across draws (entries of one draw are dependent)."""
    per_draw = (np.asarray(W) ** j).mean(axis=1)
    return float(per_draw.mean()), float(per_draw.std(ddof=1) / np.sqrt(per_draw.size))


# --- QUE ------------------------------------------------------------------------


@dataclass(frozen=True)
class QueInput:
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if np.any(np.abs(a) > 1):
            raise ContractError("a_N must take values in [-1, 1]")
        if abs(a.sum()) > 1e-12:
            raise ContractError("a_N must sum to zero")
        object.__setattr__(self, "a", a)

    @property
    def support(self):
        return int(np.count_nonzero(self.a))


def balanced_que_input(N, support, seed=0):
    """+-1 test function on a random support of even size, zero elsewhere."""
    if support % 2 or not 2 <= support <= N:
        raise ContractError("support must be an even number between 2 and N")
    rng = make_rng(seed)
    sites = rng.permutation(N)[:support]
    a = np.zeros(N)
    a[sites[: support // 2]] = 1.0
    a[sites[support // 2:]] = -1.0
    return QueInput(a)


def que_statistic(u, a):
    """``(N/|a|) sum_alpha a(alpha) |u(alpha)|^2``."""
    u = np.asarray(u)
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise ContractError("u must be a unit vector")
    if a.support == 0:
        raise ContractError("a_N has empty support")
    return float(u.size / a.support * np.sum(a.a * np.abs(u) ** 2))


def que_tail(stats, delta):
    """Empirical ``P(|stat| > delta)``."""
    return float(np.mean(np.abs(np.asarray(stats)) > delta))


# --- maximum principle ----------------------------------------------------------


def delta1(weights, lam, k, eta):
    """``sum_j w_j eta / ((lambda_j - E)^2 + eta^2) - Im m(E + i eta)`` at ``E = lambda_k``.

    With ``w_j = <q, u_j>^2`` this is ``Im <q, G q> - Im m``; with
    ``w_j = f_t(j)/N`` from a one-particle moment field it is the conditional
    expectation given the eigenvalues.
    """
    E = lam[k - 1]
    val = np.sum(np.asarray(weights) * eta / ((lam - E) ** 2 + eta**2))
    return float(val - stieltjes_m(E + 1j * eta).imag)


def delta2(lam, k, eta):
    """``Im N^-1 Tr G(lambda_k + i eta) - Im m(lambda_k + i eta)``."""
    lam = np.asarray(lam)
    return delta1(np.full(lam.size, 1.0 / lam.size), lam, k, eta)


@dataclass
class MaxPrincipleReport:
    times: np.ndarray
    sup: np.ndarray
    inf: np.ndarray
    argmax: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    etas: tuple
    violations: int

    def rows(self):
        for a, t in enumerate(self.times):
            for b, eta in enumerate(self.etas):
                yield t, self.sup[a], self.inf[a], int(self.argmax[a]), eta, self.delta1[a, b], self.delta2[a, b]


def max_principle_diagnostics(snapshots, lambda_path, q=None, eta_grid=(), *, frames=None, tol=1e-9):
    """Time series of ``S_t = sup(f_t - 1)``, ``inf(f_t - 1)`` and the residuals ``Delta_1, Delta_2``.

    ``snapshots`` maps times to moment fields. For one-particle fields
    ``Delta_1`` is the exact conditional expectation built from ``f_t``; for
    more particles it uses ``frames[t]`` (one realization) when given and is
    NaN otherwise. The residuals are evaluated at the configuration's
    arg-max site. ``violations`` counts increases of ``S_t`` (or decreases of
    the infimum) larger than ``tol``.
    """
    times = np.array(sorted(snapshots))
    etas = tuple(float(e) for e in eta_grid)
    sup, inf, arg = [], [], []
    d1 = np.full((times.size, len(etas)), np.nan)
    d2 = np.full((times.size, len(etas)), np.nan)
    for a, t in enumerate(times):
        f = snapshots[t]
        v = f.values - 1.0
        sup.append(v.max())
        inf.append(v.min())
        top = f.space.positions[int(np.argmax(v))]
        k = int(top[0])
        arg.append(k)
        lam = lambda_path.at(t)
        for b, eta in enumerate(etas):
            d2[a, b] = delta2(lam, k, eta)
            if f.n == 1:
                d1[a, b] = delta1(f.values / f.N, lam, k, eta)
            elif frames is not None and t in frames and q is not None:
                w = np.abs(np.conj(q) @ frames[t]) ** 2
                d1[a, b] = delta1(w, lam, k, eta)
    sup, inf = np.array(sup), np.array(inf)
    violations = int(np.count_nonzero(np.diff(sup) > tol) + np.count_nonzero(np.diff(inf) < -tol))
    return MaxPrincipleReport(times, sup, inf, np.array(arg), d1, d2, etas, violations)

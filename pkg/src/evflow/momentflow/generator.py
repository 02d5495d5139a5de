"""Jump rates, the moment-flow generator and its reversible measure."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .._rng import make_rng
from ..errors import ContractError, EnumerationCapError
from .configs import ConfigurationSpace

RATE_KINDS = ("symmetric", "hermitian", "covariance")
CLASSES = ("symmetric", "hermitian")
DEFAULT_GAP_GUARD = 1e-6
EDGE_CAP = 5 * 10**7


@dataclass
class RateField:
    """Symmetric nonnegative jump rates with zero diagonal.

    ``cutoff`` records how the field was derived from a full field:
    ``None``, ``("short", ell)`` or ``("long", ell)``.
    """

    rates: np.ndarray
    kind: str = "symmetric"
    guard_triggers: int = 0
    cutoff: tuple = None

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ContractError("rates must be a square matrix")
        if self.kind not in RATE_KINDS:
            raise ContractError(f"rate kind must be one of {RATE_KINDS}")
        if not np.array_equal(r, r.T):
            raise ContractError("rates must be symmetric")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ContractError("rates must be finite and nonnegative")
        if np.any(np.diag(r) != 0):
            raise ContractError("rates must have a zero diagonal")
        self.rates = r

    @property
    def N(self):
        return self.rates.shape[0]

    @property
    def default_class(self):
        return "hermitian" if self.kind == "hermitian" else "symmetric"


def rates_from_lambda(lam, kind="symmetric", gap_guard=DEFAULT_GAP_GUARD):
    """``c_ij = 1/(N max(|lambda_i - lambda_j|, g)^2)``, or the covariance rates
    ``d_ij = (lambda_i + lambda_j)/(N max(|lambda_i - lambda_j|, g)^2)``."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise ContractError("lambda must be a vector")
    if np.any(np.diff(lam) < 0):
        raise ContractError("lambda must be sorted ascending")
    if kind not in RATE_KINDS:
        raise ContractError(f"rate kind must be one of {RATE_KINDS}")
    if kind == "covariance":
        if np.any(lam < -1e-10):
            raise ContractError("covariance rates need nonnegative eigenvalues")
        lam = np.clip(lam, 0.0, None)
    N = lam.size
    gap = np.abs(lam[:, None] - lam[None, :])
    off = ~np.eye(N, dtype=bool)
    clamped = off & (gap < gap_guard)
    gap = np.maximum(gap, gap_guard)
    num = lam[:, None] + lam[None, :] if kind == "covariance" else 1.0
    rates = np.where(off, num / (N * gap * gap), 0.0)
    return RateField(rates, kind, int(np.count_nonzero(clamped)) // 2)


def random_rate_field(N, seed, kind="symmetric", low=0.1, high=2.0):
    """Random symmetric rate field, used by the detailed-balance sweeps."""
    rng = make_rng(seed)
    r = np.triu(rng.uniform(low, high, size=(N, N)), 1)
    return RateField(r + r.T, kind)


def split_short_long(rates, ell):
    """Split into pairs with ``|i - j| <= ell`` and the rest; the parts sum to the input exactly."""
    N = rates.N
    if int(ell) != ell or not 1 <= ell <= N:
        raise ContractError(f"cutoff must satisfy 1 <= ell <= N={N}, got {ell}")
    idx = np.arange(N)
    near = np.abs(idx[:, None] - idx[None, :]) <= ell
    short = np.where(near, rates.rates, 0.0)
    long = np.where(near, 0.0, rates.rates)
    return (
        RateField(short, rates.kind, rates.guard_triggers, ("short", int(ell))),
        RateField(long, rates.kind, 0, ("long", int(ell))),
    )


def phi(k):
    """``prod_{i<=k} (1 - 1/(2i))`` with ``phi(0) = 1``."""
    out = 1.0
    for i in range(1, int(k) + 1):
        out *= 1.0 - 0.5 / i
    return out


def reversible_weight(eta, cls="symmetric"):
    """Reversible measure: ``prod_x phi(eta_x)`` (symmetric) or 1 (hermitian)."""
    if cls == "hermitian":
        return 1.0
    if cls != "symmetric":
        raise ContractError(f"class must be one of {CLASSES}")
    out = 1.0
    for _, c in eta.sites():
        out *= phi(c)
    return out


def jump_multiplicity(eta_i, eta_j, cls):
    """Rate factor ``2 eta_i (1 + 2 eta_j)`` (symmetric) or ``eta_i (1 + eta_j)`` (hermitian)."""
    if cls == "symmetric":
        return 2.0 * eta_i * (1.0 + 2.0 * eta_j)
    if cls == "hermitian":
        return eta_i * (1.0 + eta_j)
    raise ContractError(f"class must be one of {CLASSES}")


@dataclass
class MomentField:
    """Values of a function on every configuration of a space, in index order."""

    space: ConfigurationSpace
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.space),):
            raise ContractError(f"expected {len(self.space)} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("moment field values must be finite")

    @classmethod
    def constant(cls, space, value=1.0):
        return cls(space, np.full(len(space), float(value)))

    @classmethod
    def delta(cls, space, eta):
        v = np.zeros(len(space))
        v[space.index(eta)] = 1.0
        return cls(space, v)

    @classmethod
    def from_function(cls, space, fn):
        return cls(space, np.array([fn(eta) for eta in space], dtype=float))

    @property
    def N(self):
        return self.space.N

    @property
    def n(self):
        return self.space.n

    def __getitem__(self, eta):
        return self.values[self.space.index(eta)]

    def rows(self):
        for i, (label, v) in enumerate(zip(self.space.labels, self.values)):
            yield i, label, v


@lru_cache(maxsize=32)
def get_space(N, n):
    return ConfigurationSpace(N, n)


class MomentGenerator:
    """Cached transition table of the moment flow on one configuration space.

    Each edge is a move ``eta -> eta^{ij}`` with ``eta_i > 0``. The table is
    built once per space; applying the generator for a new rate field only
    rebuilds the nonzero values of a CSR matrix.
    """

    def __init__(self, space, cls="symmetric"):
        if cls not in CLASSES:
            raise ContractError(f"class must be one of {CLASSES}")
        self.space, self.cls = space, cls
        M, N, n = len(space), space.N, space.n
        if M * n * (N - 1) > EDGE_CAP:
            raise EnumerationCapError(f"transition table would exceed {EDGE_CAP} edges")
        P = space.positions
        src, tgt, si, sj, ei, ej = [], [], [], [], [], []
        for a in range(n):
            first = np.ones(M, dtype=bool) if a == 0 else P[:, a] != P[:, a - 1]
            rows = np.flatnonzero(first)
            Pr = P[rows]
            i = Pr[:, a]
            eta_i = (Pr == i[:, None]).sum(axis=1)
            for j in range(1, N + 1):
                keep = i != j
                if not np.any(keep):
                    continue
                new = Pr[keep].copy()
                new[:, a] = j
                new.sort(axis=1)
                src.append(rows[keep])
                tgt.append(space.rank(new))
                si.append(i[keep])
                sj.append(np.full(keep.sum(), j))
                ei.append(eta_i[keep])
                ej.append((Pr[keep] == j).sum(axis=1))
        src, tgt = np.concatenate(src), np.concatenate(tgt)
        order = np.lexsort((tgt, src))
        self.src, self.tgt = src[order], tgt[order]
        self.i = np.concatenate(si)[order] - 1
        self.j = np.concatenate(sj)[order] - 1
        self.mult = jump_multiplicity(np.concatenate(ei)[order], np.concatenate(ej)[order], cls)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(self.src, minlength=M))])
        self._cache_key = None
        self._cache = None

    @classmethod
    def for_space(cls, space, gen_class="symmetric"):
        cache = space.__dict__.setdefault("_generators", {})
        if gen_class not in cache:
            cache[gen_class] = cls(space, gen_class)
        return cache[gen_class]

    @property
    def n_edges(self):
        return self.src.size

    def edge_rates(self, rates):
        if rates.N != self.space.N:
            raise ContractError(f"rate field has N={rates.N}, space has N={self.space.N}")
        return self.mult * rates.rates[self.i, self.j]

    def matrix(self, rates):
        """``(A, exit)``: off-diagonal jump matrix (CSR) and total exit rate per configuration."""
        key = rates.rates.tobytes()
        if self._cache_key != key:
            w = self.edge_rates(rates)
            M = len(self.space)
            A = sp.csr_matrix((w, self.tgt, self.indptr), shape=(M, M))
            self._cache = (A, np.bincount(self.src, w, minlength=M))
            self._weights = w
            self._cache_key = key
        return self._cache

    def operator(self, rates):
        """Full generator as a sparse matrix ``A - diag(exit)``."""
        A, exit_rate = self.matrix(rates)
        return (A - sp.diags(exit_rate)).tocsr()

    def apply(self, values, rates):
        """``B f`` summed edge by edge over differences, so constants map to exact zeros."""
        self.matrix(rates)
        contrib = self._weights * (values[self.tgt] - values[self.src])
        if self.n_edges and np.all(np.diff(self.indptr) > 0):
            return np.add.reduceat(contrib, self.indptr[:-1])
        return np.bincount(self.src, contrib, minlength=len(self.space))

    def weights(self):
        """Reversible measure on the space, in index order."""
        if self.cls == "hermitian":
            return np.ones(len(self.space))
        P = self.space.positions
        tab = np.array([phi(k) for k in range(self.space.n + 1)])
        w = np.ones(len(P))
        start = np.ones(len(P), dtype=bool)
        run = np.zeros(len(P), dtype=np.int64)
        for a in range(self.space.n):
            if a > 0:
                start = P[:, a] != P[:, a - 1]
                # close the previous run where a new site starts
                w = np.where(start, w * tab[run], w)
                run = np.where(start, 0, run)
            run += 1
        return w * tab[run]


def _resolve(f, rates, cls):
    if not isinstance(f, MomentField):
        raise ContractError("f must be a MomentField")
    if rates.N != f.N:
        raise ContractError(f"rate field has N={rates.N}, field has N={f.N}")
    return cls or rates.default_class


def generator_apply(f, rates, cls=None):
    """``(B f)(eta) = sum_{i != j} c_ij m(eta_i, eta_j) (f(eta^{ij}) - f(eta))``."""
    cls = _resolve(f, rates, cls)
    gen = MomentGenerator.for_space(f.space, cls)
    return MomentField(f.space, gen.apply(f.values, rates))


def dense_generator(space, rates, cls="symmetric"):
    """Generator as a dense matrix, assembled configuration by configuration.

    Independent of the cached edge table; intended as a test oracle for tiny spaces.
    """
    configs = list(space)
    index = {eta: k for k, eta in enumerate(configs)}
    N = space.N
    G = np.zeros((len(configs), len(configs)))
    for k, eta in enumerate(configs):
        for i in range(1, N + 1):
            if eta[i] == 0:
                continue
            for j in range(1, N + 1):
                if j == i:
                    continue
                r = rates.rates[i - 1, j - 1] * jump_multiplicity(eta[i], eta[j], cls)
                G[k, index[eta.move(i, j)]] += r
                G[k, k] -= r
    return G


@dataclass(frozen=True)
class DetailedBalanceReport:
    balance: float
    adjointness: float
    pairs: int


def pi_inner(space, cls, f, g):
    w = MomentGenerator.for_space(space, cls).weights()
    return float(np.sum(w * f * g))


def detailed_balance_residual(rates, N, n, cls=None, *, pairs=100, seed=0):
    """Detailed balance and self-adjointness of the generator under its reversible measure.

    ``balance`` is ``max |pi(eta) r(eta -> xi) - pi(xi) r(xi -> eta)|`` over
    all configurations and moves. ``adjointness`` is the largest relative
    residual of ``<g, B f>_pi = <B g, f>_pi`` over random pairs ``(f, g)``.
    """
    cls = cls or rates.default_class
    if rates.N != N:
        raise ContractError(f"rate field has N={rates.N}, expected {N}")
    space = get_space(N, n)
    gen = MomentGenerator.for_space(space, cls)
    pi = gen.weights()
    A, _ = gen.matrix(rates)
    F = sp.diags(pi) @ A
    diff = (F - F.T).tocoo()
    balance = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
    L = gen.operator(rates)
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        f = rng.standard_normal(len(space))
        g = rng.standard_normal(len(space))
        Lf, Lg = L @ f, L @ g
        lhs, rhs = np.sum(pi * g * Lf), np.sum(pi * Lg * f)
        scale = max(np.sum(pi * np.abs(g * Lf)), np.sum(pi * np.abs(Lg * f)), np.finfo(float).tiny)
        worst = max(worst, abs(lhs - rhs) / scale)
    return DetailedBalanceReport(balance, worst, pairs)


def dirichlet_form(f, rates, cls=None):
    """``(1/2) sum_eta pi(eta) sum_{i != j} r_ij(eta) (f(eta^{ij}) - f(eta))^2``.

    For the symmetric class this is ``sum pi c_ij eta_i (1 + 2 eta_j) (df)^2``;
    it equals ``-<f, B f>_pi`` by reversibility.
    """
    cls = _resolve(f, rates, cls)
    gen = MomentGenerator.for_space(f.space, cls)
    pi = gen.weights()
    w = gen.edge_rates(rates)
    d = f.values[gen.tgt] - f.values[gen.src]
    return 0.5 * float(np.sum(pi[gen.src] * w * d * d))


def pi_dirichlet_identity(f, rates, cls=None):
    """``-<f, B f>_pi`` computed from the generator."""
    cls = _resolve(f, rates, cls)
    Bf = generator_apply(f, rates, cls).values
    return -pi_inner(f.space, cls, f.values, Bf)


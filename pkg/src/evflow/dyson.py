"""Matrix Dyson Brownian motion, spectral paths and the Dyson eigenvector flow.

Eigenvalue paths come from diagonalizing the matrix flow at grid times; the
eigenvector SDE is simulated conditionally on a given eigenvalue path.

Normalization of the real eigenvector SDE
-----------------------------------------
The eigenvector flow induced by ``H_t = H_0 + B_t / sqrt(N)`` moves each pair
``(k, l)`` with variance ``c_kl dt`` where ``c_kl = 1 / (N (lambda_k - lambda_l)^2)``.
Its generator on polynomials of the overlaps is *half* the symmetric moment
flow generator ``sum c_ij 2 eta_i (1 + 2 eta_j)``. ``normalization="generator"``
(the default) doubles the pair variance so that conditional moments follow
that generator exactly; ``normalization="matrix"`` keeps the flow induced by
the matrix motion, whose moments follow the same equation at half speed.
The Hermitian flow already matches its moment generator and ignores the flag.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import make_rng, substreams
from .errors import ContractError, GapError, NumericError, StabilityError, UnsupportedAspectError

DEFAULT_GAP_GUARD = 1e-6
FLOW_KINDS = ("additive", "ou")
NORMALIZATIONS = ("generator", "matrix")


@dataclass(frozen=True)
class TimeChange:
    """Rescaling that keeps the additive flow inside the generalized Wigner class.

    ``alpha(t)`` restores unit column variance of ``H_t``; ``u(t)`` is the
    integral of ``alpha^-2``. ``clock(t)`` is the integral of ``alpha^2``: the
    time at which the moment flow driven by ``alpha * lambda`` reaches the
    same state as the raw flow at time ``t``.
    """

    N: int

    def alpha(self, t):
        return (1.0 + (self.N + 1) * np.asarray(t, dtype=float) / self.N) ** -0.5

    def u(self, t):
        t = np.asarray(t, dtype=float)
        return t + (self.N + 1) * t * t / (2.0 * self.N)

    def clock(self, t):
        t = np.asarray(t, dtype=float)
        return self.N / (self.N + 1.0) * np.log1p((self.N + 1) * t / self.N)


@dataclass
class SpectralPath:
    """Eigenvalues (and optionally aligned eigenvector frames) on a time grid."""

    times: np.ndarray
    lambdas: np.ndarray
    frames: np.ndarray = None
    kind: str = "additive"
    symmetry: str = "symmetric"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.lambdas = np.atleast_2d(np.asarray(self.lambdas, dtype=float))
        if self.lambdas.shape[0] != self.times.size:
            raise ContractError("one eigenvalue vector per grid time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ContractError("path times must be strictly increasing")

    @classmethod
    def frozen(cls, lambdas, t_end, symmetry="symmetric"):
        """Constant eigenvalue path on ``[0, t_end]``."""
        lam = np.asarray(lambdas, dtype=float)
        if t_end <= 0:
            return cls(np.array([0.0]), lam[None, :], kind="frozen", symmetry=symmetry)
        return cls(np.array([0.0, float(t_end)]), np.vstack([lam, lam]), kind="frozen", symmetry=symmetry)

    @property
    def N(self):
        return self.lambdas.shape[1]

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def min_gap(self):
        if self.N < 2:
            return np.inf
        return float(np.min(np.diff(np.sort(self.lambdas, axis=1), axis=1)))

    def at(self, t):
        """Linearly interpolated eigenvalues at time ``t`` (clamped to the grid)."""
        times = self.times
        if times.size == 1 or t <= times[0]:
            return self.lambdas[0].copy()
        if t >= times[-1]:
            return self.lambdas[-1].copy()
        i = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        return (1.0 - w) * self.lambdas[i] + w * self.lambdas[i + 1]

    def rows(self):
        """(time, k, lambda_k) rows with 1-based k."""
        for t, lam in zip(self.times, self.lambdas):
            for k, v in enumerate(lam, start=1):
                yield t, k, v


@dataclass(frozen=True)
class MatrixFlowSpec:
    N: int
    t_end: float
    dt: float
    seed: int = 0
    symmetry: str = "symmetric"
    flow_kind: str = "additive"
    s: np.ndarray = None
    M: int = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ContractError("dt must be positive")
        if self.t_end < 0:
            raise ContractError("t_end must be nonnegative")
        if self.flow_kind not in FLOW_KINDS:
            raise ContractError(f"flow_kind must be one of {FLOW_KINDS}")

    def grid(self):
        steps = int(np.ceil(self.t_end / self.dt - 1e-9)) if self.t_end > 0 else 0
        return np.linspace(0.0, self.t_end, steps + 1)


def _align(prev, new):
    """Fix the sign (real) or phase (complex) of each column to overlap positively with ``prev``."""
    overlap = np.einsum("ij,ij->j", prev.conj(), new)
    mag = np.abs(overlap)
    phase = np.where(mag > 0, overlap.conj() / np.where(mag > 0, mag, 1.0), 1.0)
    if not np.iscomplexobj(new):
        phase = phase.real
    return new * phase[None, :]


def _diagonalize(h, step):
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed at step {step}: {exc}") from exc


def _spectral_path(matrices_iter, times, kind, symmetry, meta):
    lambdas, frames = [], []
    prev = None
    for step, h in enumerate(matrices_iter):
        lam, vec = _diagonalize(h, step)
        if prev is not None:
            vec = _align(prev, vec)
        lambdas.append(lam)
        frames.append(vec)
        prev = vec
    return SpectralPath(times, np.array(lambdas), np.array(frames), kind=kind, symmetry=symmetry, meta=meta)


def _brownian_increment(N, h, symmetry, rng):
    """Increment of ``B_t / sqrt(N)`` (real) or ``B_t / sqrt(2N)`` (complex) over time ``h``."""
    if symmetry == "symmetric":
        a = rng.standard_normal((N, N)) * np.sqrt(h / N)
        d = np.triu(a, 1)
        d = d + d.T
        d[np.diag_indices(N)] = np.sqrt(2.0) * np.diag(a)
        return d
    if symmetry == "hermitian":
        re = rng.standard_normal((N, N))
        im = rng.standard_normal((N, N))
        off = np.triu((re + 1j * im) * np.sqrt(h / (2 * N)), 1)
        d = off + off.conj().T
        d[np.diag_indices(N)] = np.diag(re) * np.sqrt(h / N)
        return d
    raise ContractError(f"unsupported symmetry class {symmetry!r}")


def _check_h0(spec, H0):
    H0 = np.asarray(H0)
    if H0.shape != (spec.N, spec.N):
        raise ContractError(f"H0 must be {spec.N}x{spec.N}, got {H0.shape}")
    if spec.symmetry == "symmetric" and (np.iscomplexobj(H0) or not np.array_equal(H0, H0.T)):
        raise ContractError("H0 must be real symmetric")
    if spec.symmetry == "hermitian" and not np.allclose(H0, H0.conj().T, atol=0, rtol=0):
        raise ContractError("H0 must be Hermitian")
    return H0


def dbm_integrate(spec, H0):
    """Additive matrix Dyson Brownian motion ``H_t = H_0 + B_t / sqrt(N)``.

    Increments are exact Gaussians per macro step. Returns
    ``(path, H_terminal)``.
    """
    if spec.flow_kind != "additive":
        raise ContractError("dbm_integrate needs flow_kind='additive'")
    H = _check_h0(spec, H0).astype(complex if spec.symmetry == "hermitian" else float)
    times = spec.grid()
    rng = make_rng(spec.seed)
    mats = [H.copy()]
    for h in np.diff(times):
        H = H + _brownian_increment(spec.N, h, spec.symmetry, rng)
        mats.append(H.copy())
    path = _spectral_path(mats, times, "additive", spec.symmetry, {"seed": spec.seed})
    return path, H


def ou_transition(h, s, dt, N, xi):
    """Exact Ornstein-Uhlenbeck transition of ``dh = dB/sqrt(N) - h/(2 N s) dt`` over ``dt``."""
    return np.exp(-dt / (2 * N * s)) * h + np.sqrt(s * (1 - np.exp(-dt / (N * s)))) * xi


def ou_integrate(spec, H0):
    """Variance-preserving generalized Dyson Brownian motion (real symmetric).

    ``spec.s`` holds the stationary entry variances; each macro step applies
    the exact OU transition kernel entrywise. Returns ``(path, H_terminal)``.
    """
    if spec.flow_kind != "ou":
        raise ContractError("ou_integrate needs flow_kind='ou'")
    if spec.symmetry != "symmetric":
        raise ContractError("the OU flow is implemented for the real symmetric class only")
    s = np.asarray(spec.s, dtype=float)
    if s.shape != (spec.N, spec.N) or not np.array_equal(s, s.T) or np.any(s <= 0):
        raise ContractError("s must be a symmetric positive N x N matrix")
    H = _check_h0(spec, H0).astype(float)
    times = spec.grid()
    rng = make_rng(spec.seed)
    iu = np.triu_indices(spec.N)
    mats = [H.copy()]
    for h in np.diff(times):
        upper = ou_transition(H[iu], s[iu], h, spec.N, rng.standard_normal(iu[0].size))
        H = np.zeros_like(H)
        H[iu] = upper
        H = H + np.triu(H, 1).T
        mats.append(H.copy())
    path = _spectral_path(mats, times, "ou", spec.symmetry, {"seed": spec.seed})
    return path, H


def rescale_to_wigner(path):
    """Scale an additive-flow path by ``alpha(t)`` and move it to the matching clock.

    Rigidity and local-law diagnostics apply to the rescaled eigenvalues.
    The moment flow driven by the rescaled path at time ``clock(t)`` equals the
    raw flow at time ``t``.
    """
    if path.kind != "additive":
        raise ContractError(f"rescale_to_wigner applies to additive paths only, got {path.kind!r}")
    tc = TimeChange(path.N)
    a = tc.alpha(path.times)
    return replace(
        path,
        times=tc.clock(path.times),
        lambdas=path.lambdas * a[:, None],
        kind="rescaled",
        meta={**path.meta, "raw_times": path.times.copy()},
    )


def wishart_integrate(spec, M0):
    """Real Wishart process ``X_t = M_t^T M_t`` with ``M_t = M_0 + B_t / sqrt(N)``.

    Returns ``(path, M_terminal)``; the path carries the N eigenvalues of
    ``X_t`` at each grid time.
    """
    M0 = np.asarray(M0, dtype=float)
    if spec.M is None or M0.shape != (spec.M, spec.N):
        raise ContractError(f"M0 must have shape (M, N) = ({spec.M}, {spec.N})")
    if spec.M < spec.N:
        raise UnsupportedAspectError(f"covariance class requires M >= N, got M={spec.M}, N={spec.N}")
    times = spec.grid()
    rng = make_rng(spec.seed)
    Mt = M0.copy()
    mats = [Mt.T @ Mt]
    for h in np.diff(times):
        Mt = Mt + rng.standard_normal(Mt.shape) * np.sqrt(h / spec.N)
        mats.append(Mt.T @ Mt)
    path = _spectral_path(mats, times, "wishart", "covariance", {"seed": spec.seed, "M": spec.M})
    worst = float(np.min(path.lambdas))
    if worst < -1e-10:
        raise NumericError(f"Wishart eigenvalue {worst:.3e} is negative beyond round-off")
    return path, Mt


# --- eigenvector flow -------------------------------------------------------


def _pair_indices(N):
    return np.triu_indices(N, 1)


def _pair_scale(symmetry, normalization):
    if normalization not in NORMALIZATIONS:
        raise ContractError(f"normalization must be one of {NORMALIZATIONS}")
    if symmetry == "hermitian":
        return 1.0
    return 2.0 if normalization == "generator" else 1.0


def _pair_amplitudes(lam, K, L, N, dt, scale, symmetry, gap_guard):
    """Per-pair noise amplitude ``sqrt(scale * w * dt / N) / (lambda_k - lambda_l)``.

    ``w = lambda_k + lambda_l`` for the covariance class and 1 otherwise.
    Returns (amplitude, variance, number of guard clamps).
    """
    gap = lam[K] - lam[L]
    small = np.abs(gap) < gap_guard
    gap = np.where(small, np.where(gap < 0, -gap_guard, gap_guard), gap)
    weight = lam[K] + lam[L] if symmetry == "covariance" else 1.0
    var = scale * weight * dt / (N * gap * gap)
    return np.sqrt(var) * np.sign(gap), var, int(np.count_nonzero(small))


def _check_vector_flow(path, micro_dt, gap_guard):
    if micro_dt <= 0:
        raise ContractError("micro_dt must be positive")
    lam = path.lambdas
    gaps = np.diff(lam, axis=1)
    if np.any(gaps < gap_guard):
        step, k = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
        raise GapError(
            f"eigenvalues {k + 1} and {k + 2} collide (gap {gaps[step, k]:.3e} < guard {gap_guard:.1e}) "
            f"at t={path.times[step]:.6g}",
            pair=(int(k) + 1, int(k) + 2),
        )
    g = float(np.min(gaps)) if gaps.size else np.inf
    if micro_dt > path.N * g * g / 10:
        raise StabilityError(
            f"micro_dt={micro_dt:.3e} exceeds the stability budget N*gap^2/10={path.N * g * g / 10:.3e}"
        )


def _micro_grid(t_end, micro_dt):
    if t_end <= 0:
        return np.array([0.0])
    steps = int(np.ceil(t_end / micro_dt - 1e-9))
    return np.linspace(0.0, t_end, steps + 1)


def _cayley(S):
    eye = np.eye(S.shape[-1], dtype=S.dtype)
    return np.linalg.solve(eye - 0.5 * S, eye + 0.5 * S)


def _reorthonormalize(U):
    Q, R = np.linalg.qr(U)
    d = np.diagonal(R)
    phase = d / np.abs(d)
    return Q * phase[None, :]


def eigenvector_sde_simulate(
    lambda_path,
    u0,
    micro_dt,
    seed,
    *,
    symmetry=None,
    normalization="generator",
    gap_guard=DEFAULT_GAP_GUARD,
    info=None,
):
    """Simulate the Dyson eigenvector flow along a given eigenvalue path.

    Each micro step applies ``U <- U Cay(S)`` where ``S`` is the
    antisymmetric (anti-Hermitian) Euler-Maruyama increment with shared noise
    ``dB_kl`` between columns k and l. The Cayley map equals
    ``I + S + S^2/2`` to second order, so the Ito drift is produced exactly
    and orthogonality is kept to round-off; a QR re-orthonormalization
    follows each step. Eigenvalues are interpolated linearly in time.

    If ``info`` is a dict it receives ``guard_triggers``, ``max_drift``
    (largest ``|U^*U - I|`` before re-orthonormalization) and ``steps``.
    """
    symmetry = symmetry or lambda_path.symmetry
    U = np.array(u0, dtype=complex if symmetry == "hermitian" else float)
    N = lambda_path.N
    if U.shape != (N, N):
        raise ContractError(f"u0 must be {N}x{N}")
    _check_vector_flow(lambda_path, micro_dt, gap_guard)
    scale = _pair_scale(symmetry, normalization)
    K, L = _pair_indices(N)
    rng = make_rng(seed)
    grid = _micro_grid(lambda_path.t_end, micro_dt)
    triggers, drift = 0, 0.0
    eye = np.eye(N)
    for t0, t1 in zip(grid[:-1], grid[1:]):
        lam = lambda_path.at(t0)
        amp, _, clamps = _pair_amplitudes(lam, K, L, N, t1 - t0, scale, symmetry, gap_guard)
        triggers += clamps
        xi = rng.standard_normal(K.size)
        S = np.zeros((N, N), dtype=U.dtype)
        if symmetry == "hermitian":
            xi = (xi + 1j * rng.standard_normal(K.size)) / np.sqrt(2.0)
            S[L, K] = amp * xi
            S[K, L] = -np.conj(amp * xi)
        else:
            S[L, K] = amp * xi
            S[K, L] = -amp * xi
        U = U @ _cayley(S)
        drift = max(drift, float(np.max(np.abs(U.conj().T @ U - eye))))
        U = _reorthonormalize(U)
    if info is not None:
        info.update(guard_triggers=triggers, max_drift=drift, steps=grid.size - 1)
    return U


def _projection_block(lambda_path, z0, grid, rng, symmetry, scale, gap_guard):
    """Row-projected Euler-Maruyama for a block of independent trials.

    Propagates ``z = sqrt(N) q^T U`` directly: ``z <- z (I + S + D)`` with
    ``D`` the Ito drift. Needs O(N^2) work per trial per step instead of O(N^3).
    """
    N = lambda_path.N
    K, L = _pair_indices(N)
    P = K.size
    EK = np.zeros((P, N))
    EK[np.arange(P), K] = 1.0
    EL = np.zeros((P, N))
    EL[np.arange(P), L] = 1.0
    z = np.array(z0, dtype=complex if symmetry == "hermitian" else float)
    triggers = 0
    for t0, t1 in zip(grid[:-1], grid[1:]):
        lam = lambda_path.at(t0)
        amp, var, clamps = _pair_amplitudes(lam, K, L, N, t1 - t0, scale, symmetry, gap_guard)
        triggers += clamps
        decay = 1.0 - 0.5 * (np.bincount(K, var, N) + np.bincount(L, var, N))
        if symmetry == "hermitian":
            xi = (rng.standard_normal((z.shape[0], P)) + 1j * rng.standard_normal((z.shape[0], P))) / np.sqrt(2.0)
            xi *= amp
            # dz_k += z_l S_lk, dz_l += z_k S_kl with S_kl = -conj(S_lk)
            dz = (z[:, L] * xi) @ EK - (z[:, K] * np.conj(xi)) @ EL
        else:
            xi = rng.standard_normal((z.shape[0], P))
            xi *= amp
            dz = (z[:, L] * xi) @ EK - (z[:, K] * xi) @ EL
        z = z * decay + dz
    return z, triggers


def simulate_projections(
    lambda_path,
    u0,
    q,
    trials,
    micro_dt,
    seed,
    *,
    symmetry=None,
    normalization="generator",
    gap_guard=DEFAULT_GAP_GUARD,
    block_size=10_000,
    threads=1,
    info=None,
):
    """Terminal overlaps ``z_k = sqrt(N) <q, u_k(t_end)>`` for independent trials.

    All trials share ``u0`` and the eigenvalue path. Trials are split into
    fixed-size blocks with their own random substreams, so results do not
    depend on ``threads``. Returns an array of shape ``(trials, N)``.
    """
    symmetry = symmetry or lambda_path.symmetry
    N = lambda_path.N
    q = np.asarray(q)
    u0 = np.asarray(u0)
    if q.shape != (N,) or u0.shape != (N, N):
        raise ContractError("q must have length N and u0 shape (N, N)")
    _check_vector_flow(lambda_path, micro_dt, gap_guard)
    scale = _pair_scale(symmetry, normalization)
    z_init = np.sqrt(N) * (q.conj() @ u0)
    grid = _micro_grid(lambda_path.t_end, micro_dt)
    sizes = [block_size] * (trials // block_size)
    if trials % block_size:
        sizes.append(trials % block_size)
    streams = substreams(seed, len(sizes))

    def run(i):
        z0 = np.broadcast_to(z_init, (sizes[i], N))
        return _projection_block(lambda_path, z0, grid, streams[i], symmetry, scale, gap_guard)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(len(sizes))))
    else:
        results = [run(i) for i in range(len(sizes))]
    if info is not None:
        info.update(guard_triggers=sum(r[1] for r in results), steps=grid.size - 1, blocks=len(sizes))
    if not results:
        return np.empty((0, N), dtype=z_init.dtype)
    return np.concatenate([r[0] for r in results], axis=0)

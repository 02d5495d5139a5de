import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from evflow import observables as obs
from evflow.dyson import SpectralPath
from evflow.ensemble import sample_goe, sample_gue
from evflow.errors import ContractError, StatisticsError
from evflow.momentflow import Configuration, EvolveTrace, MomentField, evolve, get_space
from evflow.semicircle import classical_locations


def sample(z, complex_case=False):
    z = np.asarray(z, dtype=complex if complex_case else float)
    return obs.OverlapSample(z, tuple(range(1, z.size + 1)))


# --- targets and exact Haar moments ----------------------------------------------------


def test_gaussian_targets():
    t = obs.GaussianTargets()
    assert [t.real(k) for k in (2, 4, 6, 8)] == [1, 3, 15, 105]
    for k in range(4, 9, 2):
        assert t.real(k) == (k - 1) * t.real(k - 2)
    assert [t.complex(j) for j in (1, 2, 3)] == [2, 8, 48]
    with pytest.raises(ContractError):
        obs.gaussian_moment(3)


def test_haar_moments_against_beta_distribution():
    N = 100
    assert obs.haar_overlap_moment(N, 1) == pytest.approx(1.0)
    assert obs.haar_overlap_moment(N, 2) == pytest.approx(3 * N / (N + 2))
    assert obs.haar_overlap_moment(N, 2, "hermitian") == pytest.approx(2 * N / (N + 1))
    # scipy's beta moments as an independent oracle
    assert obs.haar_overlap_moment(N, 3) == pytest.approx(N**3 * stats.beta(0.5, (N - 1) / 2).moment(3), rel=1e-12)
    assert obs.haar_overlap_moment(N, 3, "hermitian") == pytest.approx(N**3 * stats.beta(1, N - 1).moment(3), rel=1e-12)


def test_haar_que_second_moment_by_simulation():
    N, T = 40, 20_000
    rng = np.random.default_rng(0)
    a = obs.balanced_que_input(N, N, seed=1)
    u = rng.standard_normal((T, N))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    s = N / a.support * (u**2 @ a.a)
    assert abs(np.mean(s**2) - obs.haar_que_second_moment(N, N)) < 4 * np.std(s**2) / np.sqrt(T)


# --- normalized moments ---------------------------------------------------------------


def test_normalized_moment_examples():
    s = sample([1.0, 2.0, 0.5])
    assert obs.normalized_moment(s, Configuration.from_positions(3, [1])) == 1
    assert obs.normalized_moment(s, Configuration.from_positions(3, [1, 1])) == pytest.approx(1 / 3)
    assert obs.normalized_moment(s, Configuration.from_positions(3, [2, 3])) == pytest.approx(4 * 0.25)
    c = sample([1 + 1j, 0.5j], complex_case=True)
    assert obs.normalized_moment(c, Configuration.from_positions(2, [1, 1])) == pytest.approx(4 / 8)
    part = obs.OverlapSample(np.array([1.0]), (2,))
    with pytest.raises(ContractError):
        obs.normalized_moment(part, Configuration.from_positions(3, [1]))


def test_vectorized_moments_match_single_trial():
    rng = np.random.default_rng(4)
    Z = rng.standard_normal((5, 4))
    configs = list(get_space(4, 2))
    Q = obs.normalized_moments(Z, configs)
    for t in range(5):
        for c, eta in enumerate(configs):
            assert Q[t, c] == pytest.approx(obs.normalized_moment(sample(Z[t]), eta), rel=1e-14)


def test_completeness_of_full_frame_samples():
    H = sample_goe(30, 2)
    _, U = np.linalg.eigh(H)
    for kind in obs.Q_KINDS:
        q = obs.test_vector(kind, 30, seed=5)
        s = obs.OverlapSample.from_frame(U, q)
        assert abs(np.sum(s.z**2) / 30 - 1) < 1e-10
    with pytest.raises(ContractError):
        obs.test_vector("bogus", 3)


# --- Monte Carlo estimator --------------------------------------------------------------


def test_estimate_at_time_zero_is_exact():
    N = 5
    path = SpectralPath.frozen(np.linspace(-1, 1, N), 0.0)
    U0 = np.linalg.qr(np.random.default_rng(0).standard_normal((N, N)))[0]
    q = obs.test_vector("uniform", N)
    configs = list(get_space(N, 2))
    est = obs.estimate_f_mc(path, U0, q, configs, 200, 1e-3, 0)
    exact = obs.initial_field_values(get_space(N, 2), U0, q)
    assert np.allclose(est.mean, exact, rtol=1e-13) and np.all(est.stderr < 1e-12)


def test_estimate_contracts():
    path = SpectralPath.frozen(np.linspace(-1, 1, 3), 0.01)
    q = obs.test_vector("e1", 3)
    with pytest.raises(ContractError):
        obs.estimate_f_mc(path, np.eye(3), q, [Configuration.from_positions(3, [1])], 50, 1e-3, 0)
    with pytest.raises(ContractError):
        obs.estimate_f_mc(path, np.eye(3), q, [Configuration.from_positions(3, [1]), Configuration.from_positions(3, [1, 2])], 200, 1e-3, 0)


def test_standard_error_scales_with_trials():
    N = 4
    path = SpectralPath.frozen(np.linspace(-1.5, 1.5, N), 0.1)
    q = obs.test_vector("e1", N)
    configs = [Configuration.from_positions(N, [1])]
    a = obs.estimate_f_mc(path, np.eye(N), q, configs, 4_000, 2e-3, 1).stderr[0]
    b = obs.estimate_f_mc(path, np.eye(N), q, configs, 8_000, 2e-3, 2).stderr[0]
    assert abs(a / b - np.sqrt(2)) < 0.2 * np.sqrt(2)


def test_short_time_estimate_matches_moment_flow():
    N, t = 4, 0.1
    path = SpectralPath.frozen(np.linspace(-1.5, 1.5, N), t)
    q = obs.test_vector("e1", N)
    space = get_space(N, 1)
    est = obs.estimate_f_mc(path, np.eye(N), q, list(space), 20_000, 1e-3, 3)
    f0 = MomentField(space, obs.initial_field_values(space, np.eye(N), q))
    ode = evolve(f0, path, t, tol=1e-12).values
    assert np.all(np.abs(est.mean - ode) <= 4 * est.stderr + 5e-3)


# --- normality ---------------------------------------------------------------------------


def test_normality_report_needs_samples_and_valid_orders():
    with pytest.raises(StatisticsError):
        obs.normality_report(np.ones((10, 1)), (1,))
    with pytest.raises(ContractError):
        obs.normality_report(np.ones((40, 1)), (1,), max_order=5)


def test_normality_report_on_gaussian_samples():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((20_000, 2))
    rep = obs.normality_report(Z, (3, 7), max_order=4)
    for row in rep.rows:
        assert abs(row["z_score"]) < 4.5
    assert rep.lookup((2, 0))["target"] == 3 and rep.lookup((1, 1))["target"] == 1
    single = obs.normality_report(Z[:, :1], (3,), max_order=4)
    assert single.lookup((2,))["empirical"] == pytest.approx(rep.lookup((2, 0))["empirical"], rel=1e-14)
    assert len(list(rep.csv_rows())) == len(rep.rows)


def test_normality_report_complex_targets():
    rng = np.random.default_rng(1)
    Z = (rng.standard_normal((20_000, 1)) + 1j * rng.standard_normal((20_000, 1))) / np.sqrt(2)
    rep = obs.normality_report(Z, (1,), max_order=4)
    assert rep.lookup((2,))["target"] == 8
    assert abs(rep.lookup((1,))["z_score"]) < 4.5 and abs(rep.lookup((2,))["z_score"]) < 4.5


def test_normality_from_overlap_samples():
    draws = [obs.OverlapSample.from_frame(np.linalg.eigh(sample_goe(20, s))[1], obs.test_vector("e1", 20), (5, 10)) for s in range(40)]
    rep = obs.normality_report(draws, (5, 10), max_order=2)
    assert rep.samples == 40 and len(rep.rows) == 2


def test_pooled_moment():
    W = np.arange(12.0).reshape(4, 3)
    m, se = obs.pooled_moment(W, 2)
    per = (W**2).mean(axis=1)
    assert m == pytest.approx(per.mean()) and se == pytest.approx(per.std(ddof=1) / 2)


# --- QUE -----------------------------------------------------------------------------------


def test_que_flat_vector_gives_zero():
    N = 16
    a = obs.balanced_que_input(N, 8, seed=3)
    u = np.where(np.arange(N) % 2, 1.0, -1.0) / np.sqrt(N)
    assert obs.que_statistic(u, a) == 0.0


def test_que_inputs():
    with pytest.raises(ContractError):
        obs.QueInput(np.array([1.0, 1.0]))
    with pytest.raises(ContractError):
        obs.QueInput(np.array([2.0, -2.0]))
    with pytest.raises(ContractError):
        obs.balanced_que_input(10, 3)
    with pytest.raises(ContractError):
        obs.que_statistic(np.ones(4) / 2, obs.QueInput(np.zeros(4)))
    with pytest.raises(ContractError):
        obs.que_statistic(np.ones(4), obs.balanced_que_input(4, 4))
    a = obs.balanced_que_input(10, 6, seed=0)
    assert a.support == 6 and a.a.sum() == 0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), theta=st.floats(0, 2 * np.pi))
def test_que_phase_invariance(seed, theta):
    N = 12
    a = obs.balanced_que_input(N, 6, seed=seed)
    _, U = np.linalg.eigh(sample_gue(N, seed))
    u = U[:, 3]
    assert obs.que_statistic(np.exp(1j * theta) * u, a) == pytest.approx(obs.que_statistic(u, a), abs=1e-12)
    _, V = np.linalg.eigh(sample_goe(N, seed))
    assert obs.que_statistic(-V[:, 2], a) == pytest.approx(obs.que_statistic(V[:, 2], a), abs=1e-14)


def test_que_chebyshev_consistency():
    N = 60
    a = obs.balanced_que_input(N, N, seed=0)
    s = np.array([obs.que_statistic(np.linalg.eigh(sample_goe(N, k))[1][:, N // 2], a) for k in range(200)])
    m2 = np.mean(s**2)
    for delta in (0.1, 0.3, 0.5, 1.0):
        assert obs.que_tail(s, delta) <= m2 / delta**2


# --- maximum principle ---------------------------------------------------------------------


def test_max_principle_constant_field():
    space = get_space(6, 2)
    path = SpectralPath.frozen(np.linspace(-1, 1, 6), 1.0)
    snaps = {0.0: MomentField.constant(space), 1.0: MomentField.constant(space)}
    rep = obs.max_principle_diagnostics(snaps, path, eta_grid=(0.1,))
    assert np.all(rep.sup == 0) and np.all(rep.inf == 0) and rep.violations == 0
    assert np.all(np.isnan(rep.delta1))  # two particles and no frames


def test_max_principle_decay_on_rigid_path():
    N, ell = 200, 20
    t = ell / N
    lam = classical_locations(N).gamma
    path = SpectralPath.frozen(lam, t)
    space = get_space(N, 1)
    U = np.linalg.eigh(sample_goe(N, 1))[1]
    q = obs.test_vector("e1", N)
    f0 = MomentField(space, obs.initial_field_values(space, U, q))
    trace = EvolveTrace()
    evolve(f0, path, t, snapshot_times=np.linspace(0, t, 5), trace=trace)
    snaps = {s: MomentField(space, v) for s, v in trace.snapshots.items()}
    rep = obs.max_principle_diagnostics(snaps, path, q, (N**-0.5,))
    assert rep.violations == 0
    assert np.all(np.diff(rep.sup) <= 0)
    assert rep.sup[-1] / rep.sup[0] < 0.5
    assert np.all(np.isfinite(rep.delta1))
    assert len(list(rep.rows())) == 5


def test_delta2_scale_on_goe():
    N = 200
    eta = N**-0.5
    ok = [abs(obs.delta2(np.linalg.eigvalsh(sample_goe(N, s)), N // 2, eta)) <= 10 / (N * eta) for s in range(40)]
    assert np.mean(ok) >= 0.95


def test_delta1_with_uniform_weights_is_delta2():
    lam = classical_locations(50).gamma
    assert obs.delta1(np.full(50, 1 / 50), lam, 10, 0.1) == obs.delta2(lam, 10, 0.1)

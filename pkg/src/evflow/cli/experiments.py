"""Experiment implementations behind the CLI subcommands.

Each runner takes a resolved config, an output directory and a thread count
and returns ``(artifacts, guard_triggers, summary)``. Sub-seeds are derived
from the run seed with fixed integer labels so that every artifact is a pure
function of the config.
"""
import numpy as np

from .. import dyson, ensemble, observables as obs, semicircle
from .._rng import derive_seed
from ..io import save_matrix, write_csv
from ..momentflow import (
    Configuration,
    EvolveTrace,
    MomentField,
    detailed_balance_residual,
    evolve,
    get_space,
    propagation_profile,
    rates_from_lambda,
    short_range_error,
)


def bulk_window(N):
    """Indices ``N/4 .. 3N/4`` (1-based, inclusive)."""
    return list(range(max(1, N // 4), max(1, (3 * N) // 4) + 1))


def _indices(c):
    return list(c["indices"]) or bulk_window(c["N"])


def _eta(c):
    return c["eta"] or c["N"] ** -0.5


def _profile(c):
    if c["profile"] == "banded":
        return ensemble.banded_profile(c["N"], c["c_min"], c["c_max"], derive_seed(c["seed"], 90))
    return ensemble.uniform_profile(c["N"])


def _sample(c, profile, seed):
    sym = "hermitian" if c["symmetry"] == "hermitian" else "symmetric"
    if c["profile"] == "uniform" and c["law"] == "gaussian":
        return ensemble.sample_gue(c["N"], seed) if sym == "hermitian" else ensemble.sample_goe(c["N"], seed)
    return ensemble.sample_matrix(profile, c["law"], sym, seed)


def eigen_path(c, t_end=None):
    """Eigenvalue path for the moment and vector flows."""
    N = c["N"]
    t_end = c["t_end"] if t_end is None else t_end
    sym = c["symmetry"]
    if c["path"] == "frozen":
        kind = c["lambda_kind"]
        if kind == "equispaced":
            lam = np.linspace(-c["lambda_span"], c["lambda_span"], N)
        elif kind == "rigid":
            lam = semicircle.classical_locations(N).gamma
        elif sym == "covariance":
            M0 = ensemble.sample_wishart_factor(c["M"] or (3 * N) // 2, N, derive_seed(c["seed"], 0))
            lam = np.linalg.eigvalsh(M0.T @ M0)
        else:
            lam = np.linalg.eigvalsh(_sample(c, _profile(c), derive_seed(c["seed"], 0)))
        return dyson.SpectralPath.frozen(lam, t_end, symmetry=sym)
    if sym == "covariance":
        M = c["M"] or (3 * N) // 2
        spec = dyson.MatrixFlowSpec(N, t_end, c["dt"], derive_seed(c["seed"], 1), M=M)
        path, _ = dyson.wishart_integrate(spec, ensemble.sample_wishart_factor(M, N, derive_seed(c["seed"], 0)))
        return path
    profile = _profile(c)
    H0 = _sample(c, profile, derive_seed(c["seed"], 0))
    spec = dyson.MatrixFlowSpec(
        N, t_end, c["dt"], derive_seed(c["seed"], 1), symmetry=sym, flow_kind=c["flow"],
        s=profile.sigma2 if c["flow"] == "ou" else None,
    )
    integrate = dyson.ou_integrate if c["flow"] == "ou" else dyson.dbm_integrate
    path, _ = integrate(spec, H0)
    return path


def _flow_path(c):
    """Path and evaluation time, rescaled when requested for additive paths."""
    path = eigen_path(c)
    if c["rescale"] and path.kind == "additive":
        path = dyson.rescale_to_wigner(path)
        return path, float(path.times[-1])
    return path, c["t_end"]


def _flow_class(c):
    return "hermitian" if c["symmetry"] == "hermitian" else "symmetric"


def _rate_kind(c):
    return c["symmetry"] if c["symmetry"] in ("hermitian", "covariance") else "symmetric"


def _initial_field(c, space):
    q = obs.test_vector(c["q_kind"], c["N"], derive_seed(c["seed"], 5))
    return MomentField(space, obs.initial_field_values(space, np.eye(c["N"]), q)), q


def run_spectrum(c, out, threads):
    N, eta = c["N"], _eta(c)
    profile = _profile(c)
    gamma = semicircle.classical_locations(N).gamma
    q_kinds = ("e1", "uniform", "random")
    qs = {k: obs.test_vector(k, N, derive_seed(c["seed"], 5)) for k in q_kinds}
    rig_rows, iso_rows, first = [], [], None
    for draw in range(c["draws"]):
        H = _sample(c, profile, derive_seed(c["seed"], 0, draw))
        lam, U = np.linalg.eigh(H)
        if first is None:
            first = lam
        rep = semicircle.rigidity_report(lam, c["omega"])
        rig_rows.append((draw, rep.fraction, rep.max_normalized_deviation))
        z = complex(0.0, eta)
        for k in q_kinds:
            res, bound = semicircle.isotropic_residual(H, qs[k], z, spectrum=(lam, U))
            iso_rows.append((draw, k, res, bound, res / bound))
        tr = semicircle.trace_residual(lam, z)
        iso_rows.append((draw, "trace", tr, N**0.1 / (N * eta), tr * N * eta / N**0.1))
    arts = [
        write_csv(out / "spectrum.csv", ["k", "lambda", "gamma"], zip(range(1, N + 1), first, gamma)),
        write_csv(out / "rigidity.csv", ["draw", "fraction", "max_normalized_deviation"], rig_rows),
        write_csv(out / "isotropic.csv", ["draw", "q", "residual", "bound", "ratio"], iso_rows),
    ]
    ratios = np.array([r[4] for r in iso_rows if r[1] != "trace"])
    summary = {
        "min_rigidity_fraction": min(r[1] for r in rig_rows),
        "isotropic_fraction_within_10x": float(np.mean(ratios <= 10)),
    }
    return arts, 0, summary


def run_dbm(c, out, threads):
    path = eigen_path({**c, "path": "dbm"})
    arts = [write_csv(out / "path.csv", ["time", "k", "lambda"], path.rows())]
    if path.frames is not None:
        arts.append(save_matrix(out / "frames.npy", path.frames))
    summary = {"min_gap": path.min_gap, "steps": int(path.times.size - 1)}
    final = path
    if path.kind == "additive":
        final = dyson.rescale_to_wigner(path)
        arts.append(write_csv(out / "rescaled_path.csv", ["time", "k", "lambda"], final.rows()))
    rep = semicircle.rigidity_report(final.lambdas[-1], c["omega"])
    arts.append(write_csv(out / "rigidity_final.csv", ["k", "deviation", "bound", "flag"], rep.rows()))
    summary["final_rigidity_fraction"] = rep.fraction
    return arts, 0, summary


def run_vectorflow(c, out, threads):
    N = c["N"]
    path = eigen_path(c)
    space = get_space(N, c["n"])
    f0, q = _initial_field(c, space)
    configs = [space.config(i) for i in range(len(space))]
    info = {}
    Z = dyson.simulate_projections(
        path, np.eye(N), q, c["trials"], c["micro_dt"], derive_seed(c["seed"], 2),
        normalization=c["normalization"], gap_guard=c["gap_guard"], threads=threads, info=info,
    )
    est = obs.estimate_from_samples(Z, configs)
    ode = evolve(f0, path, c["t_end"], _flow_class(c), c["tol"], gap_guard=c["gap_guard"])
    z = np.where(est.stderr > 0, (est.mean - ode.values) / np.where(est.stderr > 0, est.stderr, 1), 0.0)
    rows = zip(range(len(space)), space.labels, est.mean, est.stderr, ode.values, z)
    arts = [write_csv(out / "compare.csv", ["config_index", "config", "mc_mean", "mc_stderr", "ode", "z_score"], rows)]
    allowance = 3 * est.stderr + 5e-3
    summary = {
        "max_abs_deviation": float(np.max(np.abs(est.mean - ode.values))),
        "within_allowance": bool(np.all(np.abs(est.mean - ode.values) <= allowance)),
        "trials": c["trials"],
    }
    return arts, info["guard_triggers"], summary


def run_momentflow(c, out, threads):
    space = get_space(c["N"], c["n"])
    path, t_eval = _flow_path(c)
    f0, _ = _initial_field(c, space)
    times = np.linspace(0.0, t_eval, c["snapshots"] + 1) if c["snapshots"] > 0 else [t_eval]
    trace = EvolveTrace()
    f = evolve(
        f0, path, t_eval, _flow_class(c), c["tol"], kind=_rate_kind(c),
        gap_guard=c["gap_guard"], snapshot_times=times, trace=trace,
    )
    snaps = {t: MomentField(space, v) for t, v in trace.snapshots.items()}
    mp = obs.max_principle_diagnostics(snaps, path, eta_grid=[_eta(c)], tol=10 * c["tol"])
    traj = ((t, i, space.labels[i], v) for t in sorted(snaps) for i, v in enumerate(snaps[t].values))
    arts = [
        write_csv(out / "field.csv", ["config_index", "config", "value"], f.rows()),
        write_csv(out / "trajectory.csv", ["t", "config_index", "config", "value"], traj),
        write_csv(out / "trace.csv", ["t", "max", "min"], zip(trace.times, trace.maxima, trace.minima)),
        write_csv(out / "max_principle.csv", ["t", "sup", "inf", "argmax", "eta", "delta1", "delta2"], mp.rows()),
    ]
    summary = {
        "accepted_steps": trace.accepted,
        "monitor_rejections": trace.monitor_rejections,
        "max_principle_violations": trace.monotonicity_violations(10 * c["tol"]),
        "t_eval": t_eval,
    }
    return arts, trace.guard_triggers, summary


def run_fsp(c, out, threads):
    N, n = c["N"], c["n"]
    ell = c["ell"] or min(20, N)
    path, t_eval = _flow_path(c)
    site = c["start_site"] or N // 2
    eta0 = Configuration.from_positions(N, [min(site + a, N) for a in range(n)])
    trace = EvolveTrace()
    prof = propagation_profile(eta0, path, t_eval, ell, _flow_class(c), gap_guard=c["gap_guard"], trace=trace)
    arts = [write_csv(out / "profile.csv", ["distance", "mass"], prof.rows())]
    edge_threshold = 3 * N ** (1 / 3) * ell ** (2 / 3)
    summary = {
        "total_mass": prof.total,
        "mass_beyond_5ell": prof.beyond(5 * ell),
        "mass_beyond_edge_threshold": prof.beyond(edge_threshold),
        "edge_threshold": edge_threshold,
    }
    if c["ells"]:
        errs = [(e, short_range_error(eta0, path, t_eval, e, _flow_class(c), gap_guard=c["gap_guard"])) for e in c["ells"]]
        arts.append(write_csv(out / "short_range.csv", ["ell", "l1_error"], errs))
        summary["short_range_errors"] = [e for _, e in errs]
    return arts, trace.guard_triggers, summary


def run_que(c, out, threads):
    N = c["N"]
    support = c["que_support"] or N
    a = obs.balanced_que_input(N, support, derive_seed(c["seed"], 6))
    idx = _indices(c)
    profile = _profile(c)
    rows = []
    for draw in range(c["draws"]):
        _, U = np.linalg.eigh(_sample(c, profile, derive_seed(c["seed"], 0, draw)))
        rows.extend((draw, k, obs.que_statistic(U[:, k - 1], a)) for k in idx)
    stats = np.array([r[2] for r in rows])
    arts = [write_csv(out / "que.csv", ["draw", "k", "stat"], rows)]
    sym = "hermitian" if c["symmetry"] == "hermitian" else "symmetric"
    summary = {
        "mean_square": float(np.mean(stats**2)),
        "haar_mean_square": obs.haar_que_second_moment(N, a.support, sym),
        "tail": obs.que_tail(stats, c["delta"]),
        "support": a.support,
    }
    return arts, 0, summary


def overlap_draws(c, q, idx):
    """Overlaps ``sqrt(N) <q, u_k>`` for ``k in idx``, one row per draw."""
    N = c["N"]
    profile = _profile(c)
    rows = []
    for draw in range(c["draws"]):
        seed = derive_seed(c["seed"], 0, draw)
        if c["t_gauss"] > 0:
            H = ensemble.sample_gaussian_divisible(N, c["t_gauss"], c["law"], seed)
        else:
            H = _sample(c, profile, seed)
        _, U = np.linalg.eigh(H)
        rows.append(np.sqrt(N) * (np.conj(q) @ U[:, np.asarray(idx) - 1]))
    return np.array(rows)


def run_normality(c, out, threads):
    N = c["N"]
    idx = _indices(c)
    q = obs.test_vector(c["q_kind"], N, derive_seed(c["seed"], 5))
    Z = overlap_draws(c, q, idx)
    complex_case = c["symmetry"] == "hermitian"
    W = np.abs(Z) ** 2 * (2.0 if complex_case else 1.0)
    rows = []
    for j in range(1, c["orders"] // 2 + 1):
        target = obs.complex_gaussian_moment(j) if complex_case else obs.gaussian_moment(2 * j)
        mean, se = obs.pooled_moment(W, j)
        rows.append(("pooled", 2 * j, mean, target, se, (mean - target) / se if se > 0 else 0.0))
    mixed_idx = idx if len(idx) <= 4 else [idx[len(idx) // 2]]
    cols = [idx.index(k) for k in mixed_idx]
    rep = obs.normality_report(Z[:, cols], mixed_idx, c["orders"], "hermitian" if complex_case else "symmetric")
    rows.extend(rep.csv_rows())
    arts = [write_csv(out / "normality.csv", ["moment", "order", "empirical", "target", "stderr", "z_score"], rows)]
    summary = {f"pooled_order_{r[1]}": r[2] for r in rows if r[0] == "pooled"}
    return arts, 0, summary


def run_wishart(c, out, threads):
    N = c["N"]
    M = c["M"] or (3 * N) // 2
    M0 = ensemble.sample_wishart_factor(M, N, derive_seed(c["seed"], 0))
    spec = dyson.MatrixFlowSpec(N, c["t_end"], c["dt"], derive_seed(c["seed"], 1), M=M)
    path, _ = dyson.wishart_integrate(spec, M0)
    arts = [write_csv(out / "path.csv", ["time", "k", "lambda"], path.rows())]
    small = min(N, 6)
    lam = path.lambdas[-1][np.linspace(0, N - 1, small).round().astype(int)]
    rates = rates_from_lambda(lam, "covariance", c["gap_guard"])
    rows = []
    for n in range(1, 4):
        rep = detailed_balance_residual(rates, small, n, "symmetric", seed=derive_seed(c["seed"], 7, n))
        rows.append((small, n, rep.balance, rep.adjointness))
    arts.append(write_csv(out / "balance.csv", ["N", "n", "balance", "adjointness"], rows))
    summary = {"min_eigenvalue": float(path.lambdas.min()), "max_balance_residual": max(r[2] for r in rows)}
    return arts, rates.guard_triggers, summary


RUNNERS = {
    "spectrum": run_spectrum,
    "dbm": run_dbm,
    "vectorflow": run_vectorflow,
    "momentflow": run_momentflow,
    "fsp": run_fsp,
    "que": run_que,
    "normality": run_normality,
    "wishart": run_wishart,
}

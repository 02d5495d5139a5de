"""Experiment configuration: schema, text format, validation and hashing.

File grammar
------------
One ``key = value`` pair per line. ``#`` starts a comment; blank lines are
ignored. Values are parsed according to the key's declared type: integers,
floats (``1e-4`` style allowed), booleans (``true``/``false``), strings, and
integer lists written as comma-separated integers (``indices = 40, 50, 60``).
Later lines override earlier ones; command-line flags override the file.
"""
import hashlib
import json
import math
from dataclasses import dataclass

EXPERIMENTS = ("spectrum", "dbm", "vectorflow", "momentflow", "fsp", "que", "normality", "wishart")


@dataclass(frozen=True)
class Key:
    type: str
    default: object
    help: str
    choices: tuple = None


SCHEMA = {
    "experiment": Key("str", "spectrum", "experiment to run", EXPERIMENTS),
    "N": Key("int", 8, "matrix dimension / number of sites"),
    "M": Key("int", 0, "rows of the Wishart factor (0 means 3N/2)"),
    "symmetry": Key("str", "symmetric", "symmetry class", ("symmetric", "hermitian", "covariance")),
    "law": Key("str", "gaussian", "entry law", ("gaussian", "bernoulli_symmetric", "uniform_centered")),
    "profile": Key("str", "uniform", "variance profile", ("uniform", "banded")),
    "c_min": Key("float", 0.5, "lower band of a banded profile (units of 1/N)"),
    "c_max": Key("float", 2.0, "upper band of a banded profile (units of 1/N)"),
    "flow": Key("str", "additive", "matrix flow", ("additive", "ou")),
    "path": Key("str", "frozen", "eigenvalue path for moment/vector flows", ("frozen", "dbm")),
    "lambda_kind": Key("str", "equispaced", "frozen eigenvalues", ("equispaced", "rigid", "sample")),
    "lambda_span": Key("float", 1.5, "equispaced eigenvalues fill [-span, span]"),
    "t_end": Key("float", 0.05, "final time"),
    "dt": Key("float", 0.005, "macro step of the matrix flow"),
    "micro_dt": Key("float", 1e-4, "micro step of the eigenvector SDE"),
    "gap_guard": Key("float", 1e-6, "floor on eigenvalue gaps"),
    "normalization": Key("str", "generator", "real eigenvector SDE normalization", ("generator", "matrix")),
    "rescale": Key("bool", False, "run moment flows on the rescaled (alpha, clock) path"),
    "n": Key("int", 1, "number of particles"),
    "ell": Key("int", 0, "short-range cutoff (0 means min(20, N))"),
    "ells": Key("int_list", (), "cutoffs for the short-range error sweep"),
    "alpha": Key("float", 0.1, "averaging window parameter"),
    "tol": Key("float", 1e-10, "integrator tolerance"),
    "snapshots": Key("int", 10, "number of stored moment-field snapshots"),
    "start_site": Key("int", 0, "start site of the propagator (0 means N/2)"),
    "q_kind": Key("str", "e1", "probe vector", ("e1", "uniform", "random")),
    "indices": Key("int_list", (), "eigenvector indices (empty means the bulk window N/4..3N/4)"),
    "orders": Key("int", 4, "largest moment order (even, <= 8)"),
    "trials": Key("int", 10000, "Monte Carlo trials"),
    "draws": Key("int", 100, "independent matrix draws"),
    "t_gauss": Key("float", 0.0, "Gaussian component added to each draw (normality)"),
    "delta": Key("float", 0.5, "QUE tail threshold"),
    "que_support": Key("int", 0, "support of the QUE test function (0 means N)"),
    "omega": Key("float", 0.3, "rigidity exponent"),
    "eta": Key("float", 0.0, "spectral resolution (0 means N^-1/2)"),
    "seed": Key("int", 0, "64-bit seed"),
    "output_dir": Key("str", "", "output directory (default from EVFLOW_OUTPUT_DIR)"),
    "threads": Key("int", 0, "worker threads (0 means all cores)"),
}

# keys that never change results and stay out of the config hash
NON_SEMANTIC = ("output_dir", "threads")


def _parse_value(key, raw):
    spec = SCHEMA[key]
    raw = raw.strip()
    if spec.type == "int":
        return int(raw)
    if spec.type == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("not finite")
        return v
    if spec.type == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError("expected true or false")
    if spec.type == "int_list":
        return tuple(int(x) for x in raw.split(",") if x.strip())
    return raw


def parse_text(text):
    """Parse config text into ``(values, diagnostics)``; never raises."""
    values, diags = {}, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            diags.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        values.update(_coerce(key, raw, diags, f"line {lineno}: "))
    return values, diags


def _coerce(key, raw, diags, where=""):
    if key not in SCHEMA:
        diags.append(f"{where}unknown key '{key}'")
        return {}
    try:
        return {key: _parse_value(key, raw)}
    except ValueError as exc:
        diags.append(f"{where}bad value for '{key}' ({SCHEMA[key].type}): {raw!r} ({exc})")
        return {}


def coerce_overrides(pairs):
    """Parse ``{key: raw string}`` overrides; returns ``(values, diagnostics)``."""
    values, diags = {}, []
    for key, raw in pairs.items():
        values.update(_coerce(key, raw, diags, "flag: "))
    return values, diags


def resolve(values):
    """Defaults overlaid with ``values``."""
    out = {k: spec.default for k, spec in SCHEMA.items()}
    out.update(values)
    return out


def validate(config):
    """Every violated constraint of a resolved config, as readable strings."""
    d = []
    c = resolve(config)
    for key, value in c.items():
        if key not in SCHEMA:
            d.append(f"unknown key '{key}'")
            continue
        spec = SCHEMA[key]
        if spec.choices and value not in spec.choices:
            d.append(f"'{key}' must be one of {', '.join(spec.choices)}; got {value!r}")
    N = c["N"]
    exp = c["experiment"]
    if N < 2:
        d.append("N must be at least 2")
    if c["ell"] > N:
        d.append("cutoff exceeds dimension (ell > N)")
    if c["ell"] < 0:
        d.append("cutoff must be positive")
    if any(not 1 <= e <= N for e in c["ells"]):
        d.append("cutoff exceeds dimension (an entry of ells lies outside 1..N)")
    if c["symmetry"] == "covariance":
        M = c["M"] or (3 * N) // 2
        if M < N:
            d.append(f"covariance class requires M >= N (got M={M}, N={N})")
    if c["flow"] == "ou" and c["symmetry"] != "symmetric":
        d.append("the OU flow is available for the symmetric class only")
    if c["t_end"] < 0:
        d.append("t_end must be nonnegative")
    for key in ("dt", "micro_dt", "gap_guard", "tol"):
        if c[key] <= 0:
            d.append(f"{key} must be positive")
    if c["eta"] < 0:
        d.append("eta must be nonnegative")
    if c["n"] < 1:
        d.append("n must be at least 1")
    if not 0 < c["alpha"] < 0.25:
        d.append("alpha must lie in (0, 1/4)")
    if not 0 < c["c_min"] <= c["c_max"]:
        d.append("need 0 < c_min <= c_max")
    if c["orders"] % 2 or not 2 <= c["orders"] <= 8:
        d.append("orders must be an even integer between 2 and 8")
    if any(not 1 <= k <= N for k in c["indices"]):
        d.append("indices must lie in 1..N")
    if not 0 <= c["start_site"] <= N:
        d.append("start_site must lie in 0..N")
    if c["que_support"] and (c["que_support"] % 2 or not 2 <= c["que_support"] <= N):
        d.append("que_support must be an even integer between 2 and N")
    if exp == "vectorflow" and c["trials"] < 100:
        d.append("vectorflow needs at least 100 trials")
    if exp in ("spectrum", "que", "normality") and c["draws"] < 1:
        d.append("draws must be positive")
    if exp == "normality" and c["draws"] < 30:
        d.append("normality needs at least 30 draws")
    if c["symmetry"] == "covariance" and exp in ("spectrum", "que", "normality", "vectorflow", "fsp"):
        d.append(f"experiment '{exp}' does not support the covariance class")
    if c["t_gauss"] < 0:
        d.append("t_gauss must be nonnegative")
    if not 0 <= c["seed"] < 2**64:
        d.append("seed must be a 64-bit unsigned integer")
    if c["threads"] < 0:
        d.append("threads must be nonnegative")
    return d


def config_hash(config):
    """SHA-256 of the canonical JSON of the result-relevant keys."""
    c = {k: v for k, v in resolve(config).items() if k not in NON_SEMANTIC}
    blob = json.dumps({k: list(v) if isinstance(v, tuple) else v for k, v in sorted(c.items())}, sort_keys=True)
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


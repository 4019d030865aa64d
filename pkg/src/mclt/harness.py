"""Verification sweeps: bound versus empirical distance, rate scans, CSV reports."""

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bounds
from .distances import BOOTSTRAP_RESAMPLES, kolmogorov_empirical_vs_normal, wasserstein_empirical_vs_normal
from .errors import Condition2Violated, ConfigError
from .models import map_paths, model_from_flat, model_moments

BOUND_KINDS = ("thm1", "thm2", "cor1", "cor2", "cor3")
VERIFY_COLUMNS = (
    "model",
    "n",
    "reps",
    "seed",
    "bound_kind",
    "a",
    "bound_value",
    "mc_stderr",
    "dw_est",
    "dw_stderr",
    "dk_est",
    "cond2_dev",
    "pass",
)
DEFAULT_N_GRID = (16, 64, 256, 1024)


@dataclass
class RunConfig:
    model: dict  # dotted keys, e.g. {"model.id": "rademacher", "model.n": 100}
    reps: int = 100_000
    seed: int = 0
    bound_kind: str = "thm1"
    bound_a: object = None  # None -> s_n / sqrt(n), "auto", or a number
    n_grid: tuple = DEFAULT_N_GRID
    output_path: Optional[str] = None
    bootstrap: int = BOOTSTRAP_RESAMPLES

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("sim.reps must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("sim.seed must be a 64-bit unsigned integer")
        if self.bound_kind not in BOUND_KINDS:
            raise ConfigError(f"bound.kind must be one of {BOUND_KINDS}, got {self.bound_kind!r}")
        if isinstance(self.bound_a, str):
            if self.bound_a != "auto":
                raise ConfigError(f"bound.a must be a number or 'auto', got {self.bound_a!r}")
        elif self.bound_a is not None and not self.bound_a >= 0:
            raise ConfigError("bound.a must be >= 0")
        grid = tuple(int(v) for v in self.n_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        self.n_grid = grid


def _scalar(text):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text):
    """Flat ``dotted.key = value`` lines; ``#`` starts a comment."""
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key in flat:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        flat[key] = _scalar(value)
    return flat


_RUN_KEYS = {"sim.reps", "sim.seed", "sim.bootstrap", "bound.kind", "bound.a", "n_grid", "output.path"}


def config_from_flat(flat) -> RunConfig:
    unknown = [k for k in flat if not k.startswith("model.") and k not in _RUN_KEYS]
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    model = {k: v for k, v in flat.items() if k.startswith("model.")}
    kwargs = {}
    if "sim.reps" in flat:
        kwargs["reps"] = _as_int(flat["sim.reps"], "sim.reps")
    if "sim.seed" in flat:
        kwargs["seed"] = _as_int(flat["sim.seed"], "sim.seed")
    if "sim.bootstrap" in flat:
        kwargs["bootstrap"] = _as_int(flat["sim.bootstrap"], "sim.bootstrap")
    if "bound.kind" in flat:
        kwargs["bound_kind"] = str(flat["bound.kind"])
    if "bound.a" in flat:
        kwargs["bound_a"] = parse_a(flat["bound.a"])
    if "n_grid" in flat:
        kwargs["n_grid"] = parse_grid(flat["n_grid"])
    if "output.path" in flat:
        kwargs["output_path"] = str(flat["output.path"])
    return RunConfig(model=model, **kwargs)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_flat(parse_config_text(fh.read()))


def _as_int(value, name):
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def parse_a(value):
    if value is None or value == "auto":
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bound.a must be a number or 'auto', got {value!r}") from None


def parse_grid(value):
    if isinstance(value, (int, float)):
        return (int(value),)
    try:
        return tuple(int(v) for v in str(value).replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"n_grid must be a list of integers, got {value!r}") from None


@dataclass
class VerifyRow:
    model: str
    n: int
    reps: int
    seed: int
    bound_kind: str
    a: Optional[float]
    bound_value: float
    mc_stderr: float
    dw_est: float
    dw_stderr: float
    dk_est: float
    cond2_dev: float
    passed: bool
    report: Optional[bounds.BoundReport] = field(default=None, repr=False)


def _check_applicable(model, kind):
    cert = model.certificates
    if kind in ("thm1", "cor1", "cor2") and not cert.satisfies_condition2:
        raise Condition2Violated(f"{kind} requires V_n^2 = s_n^2 but model {model.id!r} does not certify it")
    if kind == "cor1" and not (cert.alpha > 0 and cert.gamma is not None):
        raise ConfigError(f"cor1 needs alpha > 0 and gamma certificates for model {model.id!r}")
    if kind in ("cor2", "cor3") and (cert.beta is None or cert.delta is None):
        raise ConfigError(f"{kind} needs beta and delta certificates for model {model.id!r}")


def run_verify(config: RunConfig, n=None) -> VerifyRow:
    """Simulate once, then compare the requested bound with the empirical distances.

    Every path feeds both the distance estimate (through ``S_n``) and, for
    ``thm1``, the bound functional.
    """
    model = model_from_flat(config.model, n=n)
    kind = config.bound_kind
    _check_applicable(model, kind)
    reps, seed = config.reps, config.seed

    moments = model.analytic_moments()
    if moments is None and (kind == "thm2" or model.exact_s2() is None):
        moments = model_moments(model, reps, seed)
    s2 = model.exact_s2()
    if s2 is None:
        s2 = moments.s2
    s_n = math.sqrt(s2)

    candidates = bounds.thm1_candidates(model, config.bound_a, reps, seed) if kind == "thm1" else []
    ref = bounds.thm1_reference(model, candidates, seed) if candidates else None

    def chunk(batch):
        terms = bounds.thm1_terms(batch, candidates, ref) if candidates else None
        return batch.s_end, batch.vn2, terms

    parts = map_paths(model, reps, seed, chunk)
    s_end = np.concatenate([p[0] for p in parts])
    vn2 = np.concatenate([p[1] for p in parts])
    if moments is not None and moments.analytic:
        cond2_dev = moments.cond2_dev
    else:
        cond2_dev = float(np.mean(np.abs(vn2 / s2 - 1.0)))

    normalized = s_end / s_n
    dw = wasserstein_empirical_vs_normal(normalized, bootstrap=config.bootstrap, seed=seed)
    dk = kolmogorov_empirical_vs_normal(normalized)

    report = None
    mc_stderr = 0.0
    a_used = None
    if kind == "thm1":
        per_k = np.sum([p[2][0] for p in parts], axis=0)
        path_vals = np.concatenate([p[2][1] for p in parts], axis=1)
        report = bounds.thm1_from_sums(model, candidates, per_k, path_vals, reps, ref)
        value, mc_stderr, a_used = report.total, report.mc_stderr, report.a
    elif kind == "thm2":
        report = bounds.thm2_bound(moments, config.bound_a)
        value, a_used = report.total, report.a
    elif kind == "cor1":
        cert = model.certificates
        value = bounds.cor1_bound(cert.alpha, cert.gamma, model.n)
    elif kind == "cor2":
        cert = model.certificates
        value = bounds.cor2_bound(cert.beta, cert.delta, s2, model.n)
        a_used = bounds.default_a(s2, model.n)
    else:
        cert = model.certificates
        value = bounds.cor3_bound(cert.beta, cert.delta, s2, model.n, cond2_dev)
        a_used = bounds.default_a(s2, model.n)

    return VerifyRow(
        model=model.id,
        n=model.n,
        reps=reps,
        seed=seed,
        bound_kind=kind,
        a=a_used,
        bound_value=float(value),
        mc_stderr=float(mc_stderr),
        dw_est=dw.value,
        dw_stderr=dw.stderr,
        dk_est=dk.value,
        cond2_dev=float(cond2_dev),
        passed=bool(dw.value - 3.0 * dw.stderr <= value),
        report=report,
    )


@dataclass
class RateReport:
    rows: list
    slope: float
    intercept: float
    bound_slope: float
    bound_intercept: float


def _fit(ns, values):
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        return math.nan, math.nan
    slope, intercept = np.polyfit(np.log(ns), np.log(values), 1)
    return float(slope), float(intercept)


def run_rate_scan(config: RunConfig) -> RateReport:
    grid = config.n_grid
    if len(grid) < 3:
        raise ConfigError("n_grid too short: a rate scan needs at least 3 values of n")
    rows = [run_verify(config, n=n) for n in grid]
    ns = [r.n for r in rows]
    slope, intercept = _fit(ns, [r.dw_est for r in rows])
    bound_slope, bound_intercept = _fit(ns, [r.bound_value for r in rows])
    return RateReport(rows, slope, intercept, bound_slope, bound_intercept)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def render_csv(rows):
    out = io.StringIO()
    out.write(",".join(VERIFY_COLUMNS) + "\n")
    for r in rows:
        fields = (
            r.model,
            r.n,
            r.reps,
            r.seed,
            r.bound_kind,
            r.a,
            r.bound_value,
            r.mc_stderr,
            r.dw_est,
            r.dw_stderr,
            r.dk_est,
            r.cond2_dev,
            r.passed,
        )
        out.write(",".join(f if isinstance(f, str) else _fmt(f) for f in fields) + "\n")
    return out.getvalue()


def emit_report(rows, path):
    """Write rows as CSV (17 significant digits, fixed column order)."""
    text = render_csv(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path

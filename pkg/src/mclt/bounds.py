"""Explicit Wasserstein bounds for S_n / s_n and the smoothing-parameter search."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Condition2Violated, ConfigError, DomainError, SingularTerm
from .models import map_paths

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
PILOT_REPS = 4096


@dataclass
class BoundReport:
    kind: str
    a: float
    per_k: np.ndarray = field(repr=False)
    total: float
    mc_stderr: float
    reps_used: int
    s_n: float


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")


def cor1_bound(alpha, gamma, n):
    _positive("alpha", alpha)
    _positive("gamma", gamma)
    _positive("n", n)
    return 3.0 * gamma * (1.0 + math.log(n)) / (alpha**1.5 * math.sqrt(n))


def cor2_bound(beta, delta, s2, n):
    for name, v in (("beta", beta), ("delta", delta), ("s2", s2), ("n", n)):
        _positive(name, v)
    s_n = math.sqrt(s2)
    return 3.0 * delta * n * (s2 / n + beta ** (2.0 / 3.0)) * (1.0 + math.log(n)) / s_n**3 + 2.0 / math.sqrt(n)


def cor3_bound(beta, delta, s2, n, cond2_dev):
    for name, v in (("beta", beta), ("delta", delta), ("s2", s2), ("n", n)):
        _positive(name, v)
    if not (cond2_dev >= 0 and math.isfinite(cond2_dev)):
        raise DomainError(f"cond2_dev must be >= 0, got {cond2_dev!r}")
    mixed = max(1.6 * beta ** (1.0 / 3.0), delta)
    main = 3.0 * n * mixed * (s2 / n + 1.4 * beta ** (2.0 / 3.0)) * (1.0 + math.log(n)) / s2**1.5
    return 1.5 * math.sqrt(cond2_dev) + main + 2.0 / math.sqrt(n)


def dw_to_dk(epsilon):
    if not epsilon >= 0:
        raise DomainError("epsilon must be >= 0")
    return math.sqrt(epsilon)


def optimize_smoothing(evaluate, a_max, rtol=1e-4):
    """Golden-section minimisation of ``evaluate`` over ``[0, a_max]``.

    The interior minimiser is compared against both endpoints, so the returned
    value never exceeds ``evaluate(0)`` or ``evaluate(a_max)``.
    """
    if not a_max > 0:
        raise DomainError("a_max must be positive")

    def f(a):
        try:
            v = float(evaluate(a))
        except SingularTerm:
            return math.inf
        return v if math.isfinite(v) else math.inf

    lo, hi = 0.0, float(a_max)
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > rtol * a_max:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
    best = (f1, x1) if f1 <= f2 else (f2, x2)
    candidates = [best, (f(0.0), 0.0), (f(float(a_max)), float(a_max))]
    value, a_star = min(candidates, key=lambda c: (c[0], c[1]))
    return a_star, value


def default_a(s2, n):
    return math.sqrt(s2) / math.sqrt(n)


def thm1_terms(batch, a_values, ref=None):
    """Terms ``|X_k|^3 / (rho_k^2 + a^2)`` for one batch and several ``a``.

    Returns ``(per_k_sums, path_functional)``: sums over paths, shape
    ``(len(a), n)``, and sums over steps, shape ``(len(a), reps)``. With
    ``ref`` (shape ``(len(a), n)``) the per-k sums are of ``term - ref``;
    shifting by one path's terms keeps constant columns exact.
    """
    abs3 = np.abs(batch.x) ** 3
    rho2 = batch.rho2
    sums = []
    paths = []
    for i, a in enumerate(a_values):
        denom = rho2 + a * a
        if a == 0.0:
            bad = denom <= 0.0
            if np.any(bad):
                raise SingularTerm("a = 0 and some path has rho_k^2 = 0")
        terms = abs3 / denom
        sums.append((terms if ref is None else terms - ref[i]).sum(axis=0))
        paths.append(terms.sum(axis=1))
    return np.array(sums), np.array(paths)


def _require_condition2(model):
    if not model.certificates.satisfies_condition2:
        raise Condition2Violated(f"model {model.id!r} does not certify V_n^2 = s_n^2 (condition2 violated)")
    s2 = model.exact_s2()
    if s2 is None or not s2 > 0:
        raise ConfigError(f"model {model.id!r} has no exact s_n^2")
    return float(s2)


def thm1_reference(model, a_values, seed):
    """Terms of replicate 0, the shift used by ``thm1_terms``."""
    return thm1_terms(model.simulate_batch(0, 1, seed), a_values)[0]


def _thm1_report(a, per_k_sum, path_vals, reps, s2, ref=None):
    s_n = math.sqrt(s2)
    per_k = per_k_sum / reps
    if ref is not None:
        per_k = ref + per_k
    total = (float(np.sum(3.0 * per_k)) + 2.0 * a) / s_n
    if reps > 1 and np.ptp(path_vals) > 0:
        stderr = 3.0 / s_n * float(np.std(path_vals, ddof=1)) / math.sqrt(reps)
    else:
        stderr = 0.0
    return BoundReport("thm1", float(a), per_k, total, stderr, reps, s_n)


def _pilot_objective(model, reps, seed, s2):
    pilot = min(reps, PILOT_REPS)
    batch = model.simulate_batch(0, pilot, seed)
    abs3 = np.abs(batch.x) ** 3
    rho2 = batch.rho2
    s_n = math.sqrt(s2)

    def objective(a):
        denom = rho2 + a * a
        if np.any(denom <= 0.0):
            raise SingularTerm("singular term")
        return 3.0 / s_n * float(np.mean((abs3 / denom).sum(axis=1))) + 2.0 * a / s_n

    return objective


def thm1_candidates(model, a, reps, seed):
    """The smoothing values a thm1 evaluation tries; ``"auto"`` searches on a pilot."""
    s2 = _require_condition2(model)
    if a == "auto":
        objective = _pilot_objective(model, reps, seed, s2)
        a_star, _ = optimize_smoothing(objective, math.sqrt(s2))
        cands = [a_star, default_a(s2, model.n)]
        try:
            objective(0.0)
            cands.append(0.0)
        except SingularTerm:
            pass
        return cands
    if a is None:
        return [default_a(s2, model.n)]
    a = float(a)
    if not a >= 0:
        raise DomainError("a must be >= 0")
    return [a]


def thm1_from_sums(model, candidates, per_k_sums, path_vals, reps, ref=None):
    s2 = _require_condition2(model)
    reports = [
        _thm1_report(a, per_k_sums[i], path_vals[i], reps, s2, None if ref is None else ref[i])
        for i, a in enumerate(candidates)
    ]
    return min(reports, key=lambda r: r.total)


def thm1_bound(model, a=None, reps=100_000, seed=0) -> BoundReport:
    """Monte Carlo evaluation of the pinned-variance bound.

    ``a=None`` uses ``s_n / sqrt(n)``; ``a="auto"`` runs the golden-section
    search on a pilot of the same paths, then reports the best of the
    optimised value, ``s_n / sqrt(n)`` and (if finite) 0 on the full run.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    candidates = thm1_candidates(model, a, reps, seed)
    ref = thm1_reference(model, candidates, seed)
    parts = map_paths(model, reps, seed, lambda b: thm1_terms(b, candidates, ref))
    per_k_sums = np.sum([p[0] for p in parts], axis=0)
    path_vals = np.concatenate([p[1] for p in parts], axis=1)
    return thm1_from_sums(model, candidates, per_k_sums, path_vals, reps, ref)


def _thm2_value(moments, a):
    denom = moments.rho_bar2 + a * a
    if np.any(denom <= 0.0):
        raise SingularTerm("rho_bar_k^2 + a^2 = 0 for some k")
    per_k = (3.0 * moments.abs3 + moments.var_dev) / denom
    s_n = math.sqrt(moments.s2)
    return per_k, float(np.sum(per_k)) / s_n + 2.0 * a / s_n


def thm2_bound(moments, a=None) -> BoundReport:
    """Bound for arbitrary martingales from averaged tail variances.

    ``a`` as in ``thm1_bound``; for ``"auto"`` the closed form is minimised directly.
    """
    n = moments.sigma_bar2.size
    s_n = math.sqrt(moments.s2)
    if a == "auto":
        a, _ = optimize_smoothing(lambda v: _thm2_value(moments, v)[1], s_n)
        alt = default_a(moments.s2, n)
        if _thm2_value(moments, alt)[1] < _thm2_value(moments, a)[1]:
            a = alt
    elif a is None:
        a = default_a(moments.s2, n)
    a = float(a)
    if not a >= 0:
        raise DomainError("a must be >= 0")
    per_k, total = _thm2_value(moments, a)
    return BoundReport("thm2", a, per_k, total, 0.0, moments.reps_used, s_n)

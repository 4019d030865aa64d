"""Normal special functions and exact empirical distances to N(0, 1)."""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, EmptySample, LengthMismatch

BOOTSTRAP_RESAMPLES = 200
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class DistanceEstimate:
    kind: str  # "wasserstein" | "kolmogorov"
    value: float
    reps: int
    stderr: float = 0.0


def normal_cdf(x):
    return special.ndtr(x)


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def normal_quantile(p):
    """Inverse of ``normal_cdf``; one Newton step polishes the initial inverse."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise DomainError("normal_quantile requires 0 < p < 1")
    x = special.ndtri(p_arr)
    # Newton on the smaller tail keeps |Phi(x) - p| at relative precision
    upper = p_arr > 0.5
    resid = np.where(upper, (1.0 - p_arr) - special.ndtr(-x), special.ndtr(x) - p_arr)
    x = x - resid / normal_pdf(x)
    return x if np.ndim(x) else float(x)


def _lower_antiderivative(x):
    """``A(x) = x*Phi(x) + phi(x)``, the antiderivative of Phi vanishing at -inf."""
    return x * special.ndtr(x) + normal_pdf(x)


def _upper_antiderivative(x):
    """``B(x) = phi(x) - x*(1 - Phi(x))``; ``int_a^b (1 - Phi) = B(a) - B(b)``."""
    return normal_pdf(x) - x * special.ndtr(-x)


def _prepare(samples, weights):
    xs = np.asarray(samples, dtype=float).ravel()
    if xs.size == 0:
        raise EmptySample("empty sample")
    if not np.all(np.isfinite(xs)):
        raise DomainError("samples must be finite")
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    if weights is None:
        cum = np.arange(1, xs.size + 1) / xs.size
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != xs.shape:
            raise LengthMismatch("weights and samples differ in length")
        if np.any(w < 0) or w.sum() <= 0:
            raise DomainError("weights must be non-negative with positive total")
        cum = np.cumsum(w[order]) / w.sum()
    cum[-1] = 1.0
    return xs, cum


def _wasserstein_sorted(xs, cum):
    total = _lower_antiderivative(xs[0]) + _upper_antiderivative(xs[-1])
    if xs.size == 1:
        return float(total)
    a, b, c = xs[:-1], xs[1:], cum[:-1]
    keep = (b > a) & (c > 0.0) & (c < 1.0)
    a, b, c = a[keep], b[keep], c[keep]
    # zero-mass intervals (c == 0 or 1) still contribute Phi or 1 - Phi
    edge = _edge_terms(xs, cum)
    if a.size == 0:
        return float(total + edge)
    q = special.ndtri(c)
    mid = np.clip(q, a, b)
    lower = c <= 0.5
    A = _lower_antiderivative
    B = _upper_antiderivative
    d = 1.0 - c
    below = np.where(lower, c * (mid - a) - (A(mid) - A(a)), B(a) - B(mid) - d * (mid - a))
    above = np.where(lower, A(b) - A(mid) - c * (b - mid), d * (b - mid) - (B(mid) - B(b)))
    return float(total + edge + np.sum(np.abs(below) + np.abs(above)))


def _edge_terms(xs, cum):
    a, b, c = xs[:-1], xs[1:], cum[:-1]
    out = 0.0
    zero = (b > a) & (c <= 0.0)
    if np.any(zero):
        out += np.sum(_lower_antiderivative(b[zero]) - _lower_antiderivative(a[zero]))
    one = (b > a) & (c >= 1.0)
    if np.any(one):
        out += np.sum(_upper_antiderivative(a[one]) - _upper_antiderivative(b[one]))
    return out


def _kolmogorov_sorted(xs, cum):
    phi = special.ndtr(xs)
    prev = np.concatenate(([0.0], cum[:-1]))
    return float(min(1.0, max(np.max(np.abs(cum - phi)), np.max(np.abs(prev - phi)))))


def _bootstrap(stat, xs, weights, resamples, seed):
    m = xs.size
    gen = np.random.default_rng(np.random.SeedSequence([int(seed), m]))
    p = None if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)
    values = np.empty(resamples)
    for r in range(resamples):
        draw = np.sort(xs[gen.choice(m, size=m, replace=True, p=p)])
        values[r] = stat(draw, np.arange(1, m + 1) / m)
    return float(np.std(values, ddof=1))


def wasserstein_empirical_vs_normal(samples, weights=None, *, bootstrap=0, seed=0) -> DistanceEstimate:
    """Exact ``int |F_M - Phi|`` for the (optionally weighted) empirical law of ``samples``.

    ``bootstrap`` > 0 adds a bootstrap standard error from that many resamples;
    the bootstrap stream is keyed by ``(seed, len(samples))``.
    """
    xs, cum = _prepare(samples, weights)
    value = _wasserstein_sorted(xs, cum)
    stderr = 0.0
    if bootstrap:
        raw = np.asarray(samples, dtype=float).ravel()
        stderr = _bootstrap(_wasserstein_sorted, raw, weights, bootstrap, seed)
    return DistanceEstimate("wasserstein", value, xs.size, stderr)


def kolmogorov_empirical_vs_normal(samples, weights=None, *, bootstrap=0, seed=0) -> DistanceEstimate:
    xs, cum = _prepare(samples, weights)
    value = _kolmogorov_sorted(xs, cum)
    stderr = 0.0
    if bootstrap:
        raw = np.asarray(samples, dtype=float).ravel()
        stderr = _bootstrap(_kolmogorov_sorted, raw, weights, bootstrap, seed)
    return DistanceEstimate("kolmogorov", value, xs.size, stderr)


def wasserstein_sample_vs_sample(xs, ys) -> DistanceEstimate:
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size != ys.size:
        raise LengthMismatch(f"length mismatch: {xs.size} vs {ys.size}")
    if xs.size == 0:
        raise EmptySample("empty sample")
    value = float(np.mean(np.abs(np.sort(xs) - np.sort(ys))))
    return DistanceEstimate("wasserstein", value, xs.size)

"""Numerical solutions of the normal Stein equation and checks of their derivative bounds.

The unit problem is ``g'(x) - x g(x) = h(x) - E h(Y)`` with ``Y ~ N(0, 1)``;
its bounded solution is written as a one-sided integral that only ever
multiplies by ``exp(-(...)) <= 1``:

    x <= 0:  g(x) =  int_0^L exp(x v - v^2/2) (h(x - v) - mu) dv
    x >  0:  g(x) = -int_0^L exp(-x v - v^2/2) (h(x + v) - mu) dv

Integrals use composite Gauss-Legendre panels whose breakpoints follow the
kinks of ``h``, so ``g`` comes out as a smooth function of ``x`` and can be
differentiated by finite differences.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import DomainError, QuadratureFailure

TAIL = 12.0  # exp(-TAIL^2 / 2) ~ 5e-32
QUAD_TOL = 1e-10
_GL_ORDER = 16
_PANELS = 8
_GL_NODES, _GL_WEIGHTS = leggauss(_GL_ORDER)
_GH_NODES, _GH_WEIGHTS = hermegauss(64)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class TestFunction:
    """A Lipschitz test function with its (left) derivative and kink locations."""

    __test__ = False  # not a pytest class

    id: str
    fn: Callable = field(repr=False)
    dfn: Callable = field(repr=False)
    kinks: tuple = ()
    lipschitz_constant: float = 1.0

    def __call__(self, w):
        return self.fn(np.asarray(w, dtype=float))

    def derivative(self, w):
        return self.dfn(np.asarray(w, dtype=float))

    def rescaled(self, s, t):
        """``x -> h(t x + s) / t``: the unit-problem function for location ``s`` and scale ``t``."""
        if not t > 0:
            raise DomainError("t must be positive")
        fn, dfn = self.fn, self.dfn
        return TestFunction(
            id=f"{self.id}(s={s:g},t={t:g})",
            fn=lambda x: fn(t * x + s) / t,
            dfn=lambda x: dfn(t * x + s),
            kinks=tuple((k - s) / t for k in self.kinks),
            lipschitz_constant=self.lipschitz_constant,
        )


TEST_FUNCTIONS = {
    "linear": TestFunction("linear", lambda w: w, lambda w: np.ones_like(w)),
    "abs": TestFunction("abs", np.abs, lambda w: np.where(w > 0, 1.0, -1.0), kinks=(0.0,)),
    "sin": TestFunction("sin", np.sin, np.cos),
    "clipped_ramp": TestFunction(
        "clipped_ramp",
        lambda w: np.clip(w, -1.0, 1.0),
        lambda w: np.where((w > -1.0) & (w <= 1.0), 1.0, 0.0),
        kinks=(-1.0, 1.0),
    ),
}


def test_function(name) -> TestFunction:
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise DomainError(f"unknown test function {name!r}; known: {sorted(TEST_FUNCTIONS)}") from None


def _panel_rule(lo, hi, panels):
    """Nodes and weights, shape ``(m, panels * order)``, for each ``[lo_i, hi_i]``."""
    edges = lo[:, None] + (hi - lo)[:, None] * (np.arange(panels + 1) / panels)[None, :]
    half = 0.5 * (edges[:, 1:] - edges[:, :-1])
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    nodes = mid[:, :, None] + half[:, :, None] * _GL_NODES[None, None, :]
    weights = half[:, :, None] * _GL_WEIGHTS[None, None, :]
    m = lo.size
    return nodes.reshape(m, -1), weights.reshape(m, -1)


def _segments(breaks, lo, hi):
    """Split ``[lo, hi]`` at the given per-row breakpoints; returns list of (a, b) arrays."""
    pts = np.sort(np.clip(np.column_stack([lo] + list(breaks) + [hi]), lo[:, None], hi[:, None]), axis=1)
    return [(pts[:, i], pts[:, i + 1]) for i in range(pts.shape[1] - 1)]


def _integrate(integrand, segments, panels):
    total = 0.0
    for a, b in segments:
        nodes, weights = _panel_rule(a, b, panels)
        total = total + np.sum(weights * integrand(nodes), axis=1)
    return total


def normal_expectation(h: TestFunction) -> float:
    """``E h(Y)``: Gauss-Hermite for smooth ``h``, kink-aware panels otherwise."""
    if not h.kinks:
        return float(np.dot(_GH_WEIGHTS, h(_GH_NODES)))
    lo = np.array([-TAIL - 8.0])
    hi = np.array([TAIL + 8.0])
    segs = _segments([np.array([k]) for k in h.kinks], lo, hi)
    dens = lambda y: h(y) * np.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)  # noqa: E731
    coarse = _integrate(dens, segs, 4 * _PANELS)[0]
    fine = _integrate(dens, segs, 8 * _PANELS)[0]
    if abs(fine - coarse) > QUAD_TOL:
        raise QuadratureFailure(f"E h(Y) for {h.id}: error estimate {abs(fine - coarse):.2e}")
    return float(fine)


def _unit_solution(h, x, mu, block=2048):
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.empty_like(flat)
    for start in range(0, flat.size, block):
        xs = flat[start : start + block]
        neg = xs <= 0.0
        sign = np.where(neg, 1.0, -1.0)
        lo = np.zeros_like(xs)
        hi = np.full_like(xs, TAIL)
        # kink at u = k sits at v = x - k (x <= 0) or v = k - x (x > 0)
        breaks = [np.where(neg, xs - k, k - xs) for k in h.kinks]
        segs = _segments(breaks, lo, hi)

        def integrand(v):
            xc = xs[:, None]
            u = np.where(neg[:, None], xc - v, xc + v)
            return np.exp(np.where(neg[:, None], xc * v, -xc * v) - 0.5 * v * v) * (h(u) - mu)

        coarse = _integrate(integrand, segs, _PANELS)
        fine = _integrate(integrand, segs, 2 * _PANELS)
        err = np.max(np.abs(fine - coarse))
        if err > QUAD_TOL:
            raise QuadratureFailure(f"Stein solution for {h.id}: error estimate {err:.2e}")
        out[start : start + block] = sign * fine
    return out.reshape(x.shape)


def solve_stein_unit(h_tilde: TestFunction, x, mu=None):
    """Bounded solution ``g`` of ``g' - x g = h_tilde - E h_tilde(Y)`` at ``x`` (scalar or array)."""
    if mu is None:
        mu = normal_expectation(h_tilde)
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise DomainError("x must be finite")
    g = _unit_solution(h_tilde, x_arr, mu)
    return g if g.ndim else float(g)


def _unit_derivatives(h, x, mu, step):
    """``g, g', g''`` at ``x`` by finite differences; one-sided next to kinks."""
    offsets = np.arange(-3, 4)
    pts = x[:, None] + step * offsets[None, :]
    g = _unit_solution(h, pts, mu)
    gm3, gm2, gm1, g0, g1, g2, g3 = g.T
    d1 = (g1 - gm1) / (2.0 * step)
    d2 = (g1 - 2.0 * g0 + gm1) / (step * step)
    left = np.zeros(x.shape, dtype=bool)
    right = np.zeros(x.shape, dtype=bool)
    for k in h.kinks:
        left |= (k >= x) & (k <= x + step)
        right |= (k < x) & (k >= x - step)
    d1 = np.where(left, (3.0 * g0 - 4.0 * gm1 + gm2) / (2.0 * step), d1)
    d2 = np.where(left, (2.0 * g0 - 5.0 * gm1 + 4.0 * gm2 - gm3) / (step * step), d2)
    d1 = np.where(right, (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * step), d1)
    d2 = np.where(right, (2.0 * g0 - 5.0 * g1 + 4.0 * g2 - g3) / (step * step), d2)
    return g0, d1, d2


def stein_transform(h: TestFunction, s, t, w, *, rel_step=1e-4):
    """``f_{s,t}(w) = g((w - s)/t)`` and its first two derivatives in ``w``.

    ``g`` solves the unit problem for ``x -> h(t x + s)/t``; derivatives use a
    step of ``rel_step * t`` in ``w``.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    unit = h.rescaled(s, t)
    mu = normal_expectation(unit)
    g, d1, d2 = _unit_derivatives(unit, (w_arr - s) / t, mu, rel_step)
    f, fp, fpp = g, d1 / t, d2 / (t * t)
    if np.ndim(w) == 0:
        return float(f[0]), float(fp[0]), float(fpp[0])
    return f, fp, fpp


def gaussian_mean(h: TestFunction, s, t):
    """``E h(t Y + s)`` by adaptive quadrature; independent of the solver's rule."""
    dens = lambda y: float(h(t * y + s)) * math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)  # noqa: E731
    pts = sorted((k - s) / t for k in h.kinks if abs((k - s) / t) < 20.0)
    value, err = integrate.quad(dens, -20.0, 20.0, points=pts or None, epsabs=1e-13, epsrel=1e-13, limit=200)
    if err > QUAD_TOL:
        raise QuadratureFailure(f"E h(tY+s) for {h.id}: error estimate {err:.2e}")
    return value


@dataclass
class SteinReport:
    h: str
    s: float
    t: float
    max_residual: float
    norm_fprime: float
    norm_fsecond: float
    norm_gprime: float  # max |g'| on the unit scale
    max_abs_g: float
    tol: float
    grid: str
    passed: bool


def verify_stein_bounds(h: TestFunction, s, t, *, points=2001, span=8.0, residual_tol=1e-5) -> SteinReport:
    """Evaluate ``f_{s,t}`` on ``s + t * linspace(-span, span, points)``.

    Reports the residual of ``t^2 f' - (w - s) f = h(w) - E h(tY + s)`` and
    the sup norms of ``f'`` and ``f''``; passes when the residual is below
    ``residual_tol`` and ``|f'| <= |h'|/t``, ``|f''| <= 2|h'|/t^2`` up to ``tol``.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    w = s + t * np.linspace(-span, span, points)
    f, fp, fpp = stein_transform(h, s, t, w)
    target = gaussian_mean(h, s, t)
    residual = t * t * fp - (w - s) * f - (h(w) - target)
    lip = h.lipschitz_constant
    spacing = 2.0 * span * t / (points - 1)
    tol = 1e-6 + 1e-3 * spacing**2
    report = SteinReport(
        h=h.id,
        s=float(s),
        t=float(t),
        max_residual=float(np.max(np.abs(residual))),
        norm_fprime=float(np.max(np.abs(fp))),
        norm_fsecond=float(np.max(np.abs(fpp))),
        norm_gprime=float(np.max(np.abs(fp)) * t),
        max_abs_g=float(np.max(np.abs(f))),
        tol=tol,
        grid=f"s + t*linspace({-span:g}, {span:g}, {points})",
        passed=False,
    )
    report.passed = (
        report.max_residual <= residual_tol
        and report.norm_fprime <= lip / t + tol
        and report.norm_fsecond <= 2.0 * lip / (t * t) + tol
    )
    return report


test_function.__test__ = False  # a lookup helper, not a pytest test

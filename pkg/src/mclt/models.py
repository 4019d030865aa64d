"""Martingale difference sequences with conditional-variance bookkeeping.

A model describes, step by step, the conditional law of ``X_k`` given the
history: every shipped model draws ``X_k`` from a mean-zero two-point law
``{+up, -down}`` whose parameters depend only on ``S_{k-1}`` and ``X_{k-1}``.
``sigma2`` is the conditional variance of that law, so it is known before the
step is taken.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, Optional

import numpy as np

from . import rng
from .errors import ConfigError, DegenerateModel, InsufficientReplicates, MartingaleViolation
from .parallel import map_chunks

# |S| below this counts as exactly zero when a model branches on the sign of S.
ZERO_TOL = 1e-9


@dataclass(frozen=True)
class ModelCertificates:
    alpha: float = 0.0
    gamma: Optional[float] = None
    beta: Optional[float] = None
    delta: Optional[float] = None
    satisfies_condition2: bool = False


@dataclass(frozen=True)
class PathRecord:
    x: np.ndarray
    sigma2: np.ndarray
    v2: np.ndarray  # length n + 1, v2[0] = 0
    rho2: np.ndarray  # rho2[k - 1] = V_n^2 - V_{k-1}^2
    s_end: float


@dataclass
class PathBatch:
    """Paths for consecutive replicates, one row per replicate."""

    x: np.ndarray
    sigma2: np.ndarray

    @cached_property
    def v2(self):
        out = np.zeros((self.x.shape[0], self.x.shape[1] + 1))
        np.cumsum(self.sigma2, axis=1, out=out[:, 1:])
        return out

    @cached_property
    def rho2(self):
        v2 = self.v2
        return v2[:, -1:] - v2[:, :-1]

    @cached_property
    def s_end(self):
        return self.x.sum(axis=1)

    @property
    def vn2(self):
        return self.v2[:, -1]

    def record(self, i):
        return PathRecord(
            x=self.x[i].copy(),
            sigma2=self.sigma2[i].copy(),
            v2=self.v2[i].copy(),
            rho2=self.rho2[i].copy(),
            s_end=float(self.s_end[i]),
        )


@dataclass
class ModelMoments:
    sigma_bar2: np.ndarray
    s2: float
    rho_bar2: np.ndarray
    abs3: np.ndarray
    var_dev: np.ndarray
    cond2_dev: float
    reps_used: int
    analytic: bool

    @classmethod
    def from_arrays(cls, sigma_bar2, abs3, var_dev, cond2_dev, reps_used=0, analytic=True):
        sigma_bar2 = np.asarray(sigma_bar2, dtype=float)
        # reverse cumulative sum keeps every tail strictly positive
        rho_bar2 = np.cumsum(sigma_bar2[::-1])[::-1].copy()
        return cls(
            sigma_bar2=sigma_bar2,
            s2=float(rho_bar2[0]),
            rho_bar2=rho_bar2,
            abs3=np.asarray(abs3, dtype=float),
            var_dev=np.asarray(var_dev, dtype=float),
            cond2_dev=float(cond2_dev),
            reps_used=int(reps_used),
            analytic=analytic,
        )


_REGISTRY = {}


def register(cls):
    _REGISTRY[cls.id] = cls
    return cls


def available_models():
    return dict(sorted(_REGISTRY.items()))


class MartingaleModel:
    """Base class; subclasses define ``step`` and their certificates.

    Models are immutable after construction and safe to share between threads.
    """

    id: ClassVar[str] = ""
    defaults: ClassVar[dict] = {}
    description: ClassVar[str] = ""

    def __init__(self, n, **params):
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise ConfigError(f"model.n must be a positive integer, got {n!r}")
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for model {self.id!r}: {sorted(unknown)}")
        self.n = int(n)
        merged = dict(self.defaults)
        for key, value in params.items():
            try:
                merged[key] = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"model.params.{key} must be a number, got {value!r}") from None
        self.params = merged
        self._validate()

    @classmethod
    def from_config(cls, n, params):
        return cls(n, **params)

    def _validate(self):
        pass

    def __repr__(self):
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{type(self).__name__}(n={self.n}{', ' if args else ''}{args})"

    @property
    def certificates(self) -> ModelCertificates:
        raise NotImplementedError

    def step(self, k, s_prev, x_prev):
        """Conditional law of step ``k`` (1-based) given the history.

        Returns ``(up, down, p_up, sigma2)``: ``X_k = up`` with probability
        ``p_up``, else ``-down``; arrays broadcast against ``s_prev``.
        """
        raise NotImplementedError

    def exact_s2(self):
        """Closed-form ``s_n^2`` or None."""
        return None

    def analytic_moments(self) -> Optional[ModelMoments]:
        return None

    def config(self):
        return {"id": self.id, "n": self.n, "params": dict(self.params)}

    def simulate_batch(self, rep_start, count, seed) -> PathBatch:
        u = rng.uniforms(seed, rep_start, count, self.n)
        x = np.empty((count, self.n))
        sigma2 = np.empty((count, self.n))
        s = np.zeros(count)
        x_prev = np.zeros(count)
        for k in range(1, self.n + 1):
            up, down, p_up, var = self.step(k, s, x_prev)
            xk = np.where(u[:, k - 1] < p_up, up, -down)
            x[:, k - 1] = xk
            sigma2[:, k - 1] = var
            s = s + xk
            x_prev = xk
        if np.any(sigma2 < 0):
            raise DegenerateModel(f"model {self.id!r} produced a negative conditional variance")
        return PathBatch(x, sigma2)


def _positive(s):
    return s > ZERO_TOL


@register
class Rademacher(MartingaleModel):
    id = "rademacher"
    description = "X_k = +-1 equiprobable; sigma_k^2 = 1"

    @property
    def certificates(self):
        return ModelCertificates(alpha=1.0, gamma=1.0, beta=1.0, delta=1.0, satisfies_condition2=True)

    def step(self, k, s_prev, x_prev):
        return 1.0, 1.0, 0.5, 1.0

    def simulate_batch(self, rep_start, count, seed):
        u = rng.uniforms(seed, rep_start, count, self.n)
        return PathBatch(np.where(u < 0.5, 1.0, -1.0), np.ones_like(u))

    def exact_s2(self):
        return float(self.n)

    def analytic_moments(self):
        ones = np.ones(self.n)
        return ModelMoments.from_arrays(ones, ones, np.zeros(self.n), 0.0)


@register
class PairSwap(MartingaleModel):
    """Random conditional variances whose pair sums are pinned to 2.

    Within pair ``j`` the first step has variance ``1 + u*eps`` and the second
    ``1 - u*eps`` where ``eps`` is the sign of the sum at the start of the pair
    (``+1`` at zero). An unpaired final step has variance 1.
    """

    id = "pairswap"
    defaults = {"u": 0.5}
    description = "paired variances 1 +- u*sign(S at pair start); V_n^2 = n"

    def _validate(self):
        if not 0.0 <= self.params["u"] <= 1.0:
            raise ConfigError("pairswap requires 0 <= u <= 1")

    @property
    def certificates(self):
        u = self.params["u"]
        return ModelCertificates(
            alpha=1.0 - u,
            gamma=(1.0 + u) ** 1.5,
            beta=(1.0 + u) ** 1.5,
            delta=(1.0 + u) ** 0.5,
            satisfies_condition2=True,
        )

    def step(self, k, s_prev, x_prev):
        u = self.params["u"]
        if k % 2 == 1:
            if k == self.n:
                return 1.0, 1.0, 0.5, 1.0
            eps = np.where(s_prev < -ZERO_TOL, -1.0, 1.0)
            var = 1.0 + u * eps
        else:
            eps = np.where(s_prev - x_prev < -ZERO_TOL, -1.0, 1.0)
            var = 1.0 - u * eps
        sd = np.sqrt(var)
        return sd, sd, 0.5, var

    def exact_s2(self):
        return float(self.n)


@register
class DriftingVariance(MartingaleModel):
    """``X_k = +-(1 + theta * 1[S_{k-1} > 0])``; violates the pinned-variance condition."""

    id = "drifting-variance"
    defaults = {"theta": 0.5}
    description = "X_k = +-(1 + theta*1[S_{k-1} > 0]); V_n^2 random"

    def _validate(self):
        if self.params["theta"] <= -1.0:
            raise ConfigError("drifting-variance requires theta > -1")

    @property
    def certificates(self):
        hi = max(1.0, 1.0 + self.params["theta"])
        lo = min(1.0, 1.0 + self.params["theta"])
        return ModelCertificates(
            alpha=lo * lo,
            gamma=hi**3,
            beta=hi**3,
            delta=hi,
            satisfies_condition2=self.params["theta"] == 0.0,
        )

    def step(self, k, s_prev, x_prev):
        c = 1.0 + self.params["theta"] * _positive(s_prev)
        return c, c, 0.5, c * c

    def exact_s2(self):
        return float(self.n) if self.params["theta"] == 0.0 else None


@register
class AsymmetricTwoPoint(MartingaleModel):
    """I.i.d. steps on ``{-p, 1-p}`` with probabilities ``{1-p, p}``, scaled to unit variance."""

    id = "asymmetric-two-point"
    defaults = {"p": 0.2}
    description = "i.i.d. skewed two-point steps, unit variance"

    def _validate(self):
        if not 0.0 < self.params["p"] < 1.0:
            raise ConfigError("asymmetric-two-point requires 0 < p < 1")

    def _abs3(self):
        p = self.params["p"]
        return (p * p + (1.0 - p) ** 2) / np.sqrt(p * (1.0 - p))

    @property
    def certificates(self):
        g = float(self._abs3())
        return ModelCertificates(alpha=1.0, gamma=g, beta=g, delta=g, satisfies_condition2=True)

    def step(self, k, s_prev, x_prev):
        p = self.params["p"]
        sd = np.sqrt(p * (1.0 - p))
        return (1.0 - p) / sd, p / sd, p, 1.0

    def simulate_batch(self, rep_start, count, seed):
        p = self.params["p"]
        sd = np.sqrt(p * (1.0 - p))
        u = rng.uniforms(seed, rep_start, count, self.n)
        return PathBatch(np.where(u < p, (1.0 - p) / sd, -p / sd), np.ones_like(u))

    def exact_s2(self):
        return float(self.n)

    def analytic_moments(self):
        ones = np.ones(self.n)
        return ModelMoments.from_arrays(ones, ones * self._abs3(), np.zeros(self.n), 0.0)


@register
class TwoStep(MartingaleModel):
    """``X_1 = +-1``; ``X_2 = +-sigma_2`` with ``sigma_2^2 = 2`` after an up-step, else 1."""

    id = "two-step"
    description = "n = 2; sigma_2^2 = 2 if X_1 = +1 else 1 (s_n^2 = 2.5)"

    def _validate(self):
        if self.n != 2:
            raise ConfigError("two-step is defined for n = 2 only")

    @property
    def certificates(self):
        return ModelCertificates(
            alpha=1.0,
            gamma=(2.0**1.5 + 1.0) / 2.0,
            beta=2.0**1.5,
            delta=2.0**0.5,
            satisfies_condition2=False,
        )

    def step(self, k, s_prev, x_prev):
        if k == 1:
            return 1.0, 1.0, 0.5, 1.0
        var = np.where(x_prev > 0, 2.0, 1.0)
        sd = np.sqrt(var)
        return sd, sd, 0.5, var

    def exact_s2(self):
        return 2.5

    def analytic_moments(self):
        return ModelMoments.from_arrays(
            [1.0, 1.5], [1.0, (2.0**1.5 + 1.0) / 2.0], [0.0, 0.5], 0.5 * 0.2 + 0.5 * 0.2
        )


def build_model(model_id, n, params=None) -> MartingaleModel:
    cls = _REGISTRY.get(model_id)
    if cls is None:
        raise ConfigError(f"unknown model id {model_id!r}; known: {sorted(_REGISTRY)}")
    return cls.from_config(n, dict(params or {}))


def model_from_flat(flat, prefix="model", n=None):
    """Build a model from dotted keys ``<prefix>.id``, ``<prefix>.n``, ``<prefix>.params.*``.

    ``n`` overrides ``<prefix>.n``. Nested models (``params.base.*``) are
    passed on as nested dicts.
    """
    own = {k[len(prefix) + 1 :]: v for k, v in flat.items() if k.startswith(prefix + ".")}
    if "id" not in own:
        raise ConfigError(f"missing {prefix}.id")
    params = {}
    for key, value in own.items():
        if key in ("id", "n"):
            continue
        if not key.startswith("params."):
            raise ConfigError(f"unknown key {prefix}.{key}")
        head, _, rest = key[len("params.") :].partition(".")
        if rest:
            params.setdefault(head, {})[rest] = value
        else:
            params[head] = value
    if n is None:
        if "n" not in own:
            raise ConfigError(f"missing {prefix}.n")
        n = own["n"]
    try:
        n = int(n)
    except (TypeError, ValueError):
        raise ConfigError(f"{prefix}.n must be an integer, got {n!r}") from None
    return build_model(str(own["id"]), n, params)


def simulate_path(model, replicate_index, seed) -> PathRecord:
    if replicate_index < 0:
        raise ConfigError("replicate_index must be >= 0")
    return model.simulate_batch(int(replicate_index), 1, seed).record(0)


def map_paths(model, reps, seed, fn):
    """``fn(batch)`` for every replicate chunk, results in replicate order."""
    return map_chunks(lambda start, count: fn(model.simulate_batch(start, count, seed)), reps)


def model_moments(model, reps=100_000, seed=0) -> ModelMoments:
    analytic = model.analytic_moments()
    if analytic is not None:
        return analytic
    if reps < 100:
        raise InsufficientReplicates(f"Monte Carlo moments need reps >= 100, got {reps}")

    first = map_paths(
        model,
        reps,
        seed,
        lambda b: (b.sigma2.sum(axis=0), (np.abs(b.x) ** 3).sum(axis=0)),
    )
    sigma_bar2 = np.sum([f[0] for f in first], axis=0) / reps
    abs3 = np.sum([f[1] for f in first], axis=0) / reps
    s2 = float(np.cumsum(sigma_bar2[::-1])[-1])

    second = map_paths(
        model,
        reps,
        seed,
        lambda b: (np.abs(b.sigma2 - sigma_bar2).sum(axis=0), np.abs(b.vn2 / s2 - 1.0).sum()),
    )
    var_dev = np.sum([f[0] for f in second], axis=0) / reps
    cond2_dev = float(np.sum([f[1] for f in second])) / reps
    return ModelMoments.from_arrays(sigma_bar2, abs3, var_dev, cond2_dev, reps_used=reps, analytic=False)


@dataclass
class MartingaleReport:
    worst_z: float
    worst_k: int
    worst_bucket: tuple
    n_over_4: int
    n_tested: int
    passed: bool
    counts: np.ndarray = field(repr=False)


_MIN_BUCKET = 30


def _sign_buckets(x):
    sgn = np.sign(x).astype(np.int64) + 1  # 0, 1, 2
    prev1 = np.zeros_like(sgn)
    prev2 = np.zeros_like(sgn)
    prev1[:, 1:] = sgn[:, :-1]
    prev1[:, 0] = 1
    prev2[:, 2:] = sgn[:, :-2]
    prev2[:, :2] = 1
    return prev1 * 3 + prev2


def martingale_diagnostics(model, reps, seed, *, fail_z=6.0):
    """Bucketed z-scores of the step means; no minimum-replicate check."""
    n = model.n

    def chunk(batch):
        idx = (np.arange(n) * 9)[None, :] + _sign_buckets(batch.x)
        flat = idx.ravel()
        x = batch.x.ravel()
        size = n * 9
        return (
            np.bincount(flat, minlength=size),
            np.bincount(flat, weights=x, minlength=size),
            np.bincount(flat, weights=x * x, minlength=size),
        )

    parts = map_paths(model, reps, seed, chunk)
    cnt = np.sum([p[0] for p in parts], axis=0).reshape(n, 9)
    sx = np.sum([p[1] for p in parts], axis=0).reshape(n, 9)
    sxx = np.sum([p[2] for p in parts], axis=0).reshape(n, 9)

    tested = cnt >= _MIN_BUCKET
    safe = np.where(tested, cnt, 1)
    mean = sx / safe
    var = np.maximum(sxx / safe - mean * mean, 0.0) * safe / np.maximum(safe - 1, 1)
    se = np.sqrt(var / safe)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, mean / se, np.where(np.abs(mean) > 1e-12, np.inf, 0.0))
    z = np.where(tested, np.abs(z), 0.0)
    k, b = np.unravel_index(int(np.argmax(z)), z.shape)
    worst = float(z[k, b])
    report = MartingaleReport(
        worst_z=worst,
        worst_k=int(k) + 1,
        worst_bucket=(int(b // 3) - 1, int(b % 3) - 1),
        n_over_4=int(np.count_nonzero(z > 4.0)),
        n_tested=int(np.count_nonzero(tested)),
        passed=worst <= fail_z,
        counts=cnt,
    )
    if not report.passed:
        raise MartingaleViolation(
            f"step {report.worst_k} (last signs {report.worst_bucket}) has |z| = {worst:.2f} > {fail_z}"
        )
    return report


def check_martingale_property(model, reps=100_000, seed=0) -> MartingaleReport:
    """Check the zero conditional mean of every step, bucketed by the last two signs."""
    if reps < 10_000:
        raise InsufficientReplicates(f"martingale check needs reps >= 10^4, got {reps}")
    return martingale_diagnostics(model, reps, seed)

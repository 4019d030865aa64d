"""Gaussian completion of a martingale to one with pinned total variance.

Each path replays the base model while its running conditional variance stays
at or below ``s_n^2`` (steps ``1..tau``), then appends ``R`` Gaussian steps of
variance ``beta^(2/3)``, one Gaussian step carrying the remainder, and zeros up
to index ``2n``.

Fill steps are coupled to the base path: with ``coupling="quantile"`` a fill
step at an index ``k <= n`` reuses the base step's uniform (reflected and
mapped through the normal quantile), so it moves with the base increment it
replaces while staying exactly ``N(0, v)`` given the completed history.
``coupling="independent"`` draws every fill step from a fresh stream. The
law of the completed sequence is the same either way.
"""

import math
from dataclasses import dataclass

import numpy as np

from scipy import special

from . import rng
from .errors import BetaTooSmall, CompletionInvariantViolated, ConfigError, InsufficientReplicates
from .models import (
    MartingaleModel,
    ModelCertificates,
    PathBatch,
    martingale_diagnostics,
    model_moments,
    register,
)
from .parallel import map_chunks

GAUSS_ABS3 = 2.0 * math.sqrt(2.0 / math.pi)  # E|N(0,1)|^3
_REL_TOL = 1e-12


@register
class CompletedModel(MartingaleModel):
    id = "completed"
    defaults = {"beta": 1.0}
    description = "Gaussian completion of a base model to length 2n (params: base.*, beta)"

    def __init__(
        self, base, beta, *, s2=None, enforce_capacity=True, coupling="quantile", s2_reps=200_000, s2_seed=0
    ):
        if not beta > 0:
            raise ConfigError("beta must be positive")
        if coupling not in ("quantile", "independent"):
            raise ConfigError(f"unknown coupling {coupling!r}")
        self.coupling = coupling
        if s2 is None:
            s2 = base.exact_s2()
        if s2 is None:
            s2 = model_moments(base, s2_reps, s2_seed).s2
        self.base = base
        self.beta = float(beta)
        self.s2 = float(s2)
        self.fill_var = self.beta ** (2.0 / 3.0)
        self.n2 = 2 * base.n
        if enforce_capacity and self.s2 > base.n * self.fill_var * (1.0 + _REL_TOL):
            raise BetaTooSmall(
                f"s_n^2 = {self.s2:g} exceeds n*beta^(2/3) = {base.n * self.fill_var:g}; 2n steps may not suffice"
            )
        self.n = self.n2
        self.params = {"beta": self.beta}

    @classmethod
    def from_config(cls, n, params):
        from .models import build_model

        params = dict(params)
        base_cfg = params.pop("base", None)
        if not isinstance(base_cfg, dict) or "id" not in base_cfg:
            raise ConfigError("completed model needs model.params.base.id")
        beta = params.pop("beta", None)
        s2 = params.pop("s2", None)
        coupling = params.pop("coupling", "quantile")
        if params:
            raise ConfigError(f"unknown parameter(s) for model 'completed': {sorted(params)}")
        if beta is None:
            raise ConfigError("completed model needs model.params.beta")
        base_params = {k[len("params.") :]: v for k, v in base_cfg.items() if k.startswith("params.")}
        extra = set(base_cfg) - {"id", "n"} - {k for k in base_cfg if k.startswith("params.")}
        if extra:
            raise ConfigError(f"unknown key(s) under model.params.base: {sorted(extra)}")
        base = build_model(str(base_cfg["id"]), int(base_cfg.get("n", n)), base_params)
        return cls(base, float(beta), s2=None if s2 is None else float(s2), coupling=str(coupling))

    def __repr__(self):
        return f"CompletedModel(base={self.base!r}, beta={self.beta:g})"

    def config(self):
        return {"id": self.id, "n": self.base.n, "params": {"beta": self.beta, "base": self.base.config()}}

    @property
    def certificates(self):
        base = self.base.certificates
        delta = 1.6 * self.beta ** (1.0 / 3.0)
        if base.delta is not None:
            delta = max(delta, base.delta)
        return ModelCertificates(alpha=0.0, beta=1.6 * self.beta, delta=delta, satisfies_condition2=True)

    def exact_s2(self):
        return self.s2

    def step(self, k, s_prev, x_prev):
        raise NotImplementedError("completed paths are generated by simulate_batch")

    def simulate_coupled(self, rep_start, count, seed):
        """Base paths and their completions built from the same base randomness."""
        base = self.base.simulate_batch(rep_start, count, seed)
        n = self.base.n
        v2 = base.v2
        limit = self.s2 * (1.0 + _REL_TOL)
        tau = np.count_nonzero(v2[:, 1:] <= limit, axis=1)  # v2 is non-decreasing
        v_tau = v2[np.arange(count), tau]
        gap = np.maximum(self.s2 - v_tau, 0.0)
        reps_fill = np.floor(gap / self.fill_var * (1.0 + _REL_TOL)).astype(np.int64)
        remainder = np.maximum(gap - reps_fill * self.fill_var, 0.0)

        idx = np.arange(1, self.n2 + 1)[None, :]
        sigma2 = np.where(idx <= n, np.pad(base.sigma2, ((0, 0), (0, n))), 0.0)
        sigma2 = np.where(idx <= tau[:, None], sigma2, 0.0)
        fill = (idx > tau[:, None]) & (idx <= (tau + reps_fill)[:, None])
        sigma2 = np.where(fill, self.fill_var, sigma2)
        last = tau + reps_fill + 1
        over = (tau + reps_fill > self.n2) | ((last > self.n2) & (remainder > 0.0))
        if np.any(over):
            i = int(np.flatnonzero(over)[0])
            raise CompletionInvariantViolated(
                f"path {rep_start + i} needs more than {self.n2} steps", path_index=rep_start + i
            )
        sigma2 = np.where(idx == last[:, None], remainder[:, None], sigma2)

        z = rng.normals(seed, rep_start, count, self.n2, stream=rng.STREAM_FILL)
        if self.coupling == "quantile":
            # base draws X_k = up iff u_k < p_up, so 1 - u_k is comonotone with X_k
            u = rng.uniforms(seed, rep_start, count, n, stream=rng.STREAM_STEP)
            z[:, :n] = special.ndtri(1.0 - u - 2.0**-54)
        x_base = np.pad(base.x, ((0, 0), (0, n)))
        x = np.where(idx <= tau[:, None], x_base, np.sqrt(sigma2) * z)
        x = np.where(sigma2 > 0.0, x, 0.0)
        return base, PathBatch(x, sigma2), tau

    def simulate_batch(self, rep_start, count, seed):
        return self.simulate_coupled(rep_start, count, seed)[1]


def complete_to_constant_variance(base, beta, **kwargs) -> CompletedModel:
    return CompletedModel(base, beta, **kwargs)


@dataclass
class CompletionReport:
    max_variance_deviation: float
    worst_path: int
    fill_certificate_ok: bool
    max_fill_ratio: float  # max over fill steps of third moment / certificate
    martingale_worst_z: float
    coupling_mean: float  # E|S_n - S~_{2n}|
    coupling_stderr: float
    coupling_bound: float  # sqrt(2) * (E|V_n^2 - s_n^2|)^{1/2}
    coupling_ok: bool
    reps: int


def verify_completion(completed, reps=10_000, seed=0, *, tol=1e-9) -> CompletionReport:
    """Check the pinned total variance, fill-step certificates and martingale property.

    Raises ``CompletionInvariantViolated`` when a path misses ``s_n^2`` or a
    fill step breaks its third-moment certificate. The coupling comparison is
    reported, not enforced.
    """
    if reps < 1000:
        raise InsufficientReplicates(f"verify_completion needs reps >= 10^3, got {reps}")
    cert = completed.certificates

    def chunk(start, count):
        base, comp, tau = completed.simulate_coupled(start, count, seed)
        dev = np.abs(comp.vn2 / completed.s2 - 1.0)
        filled = np.arange(1, completed.n2 + 1)[None, :] > tau[:, None]
        v = np.where(filled, comp.sigma2, 0.0)
        third = GAUSS_ABS3 * v**1.5
        allowed = np.minimum(cert.beta, cert.delta * v)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(v > 0.0, third / allowed, 0.0)
        diff = np.abs(base.s_end - comp.s_end)
        vdev = np.abs(base.vn2 - completed.s2)
        return dev, ratio.max(axis=1), diff, vdev

    parts = map_chunks(chunk, reps)
    dev = np.concatenate([p[0] for p in parts])
    ratio = np.concatenate([p[1] for p in parts])
    diff = np.concatenate([p[2] for p in parts])
    vdev = np.concatenate([p[3] for p in parts])

    worst = int(np.argmax(dev))
    if dev[worst] > tol:
        raise CompletionInvariantViolated(
            f"path {worst}: |V~^2/s_n^2 - 1| = {dev[worst]:.3g} > {tol:g}", path_index=worst
        )
    worst_fill = int(np.argmax(ratio))
    if ratio[worst_fill] > 1.0 + 1e-12:
        raise CompletionInvariantViolated(
            f"path {worst_fill}: fill step third moment exceeds its certificate", path_index=worst_fill
        )
    mart = martingale_diagnostics(completed, reps, seed)
    mean = float(np.mean(diff))
    stderr = float(np.std(diff, ddof=1) / math.sqrt(reps))
    bound = math.sqrt(2.0) * math.sqrt(float(np.mean(vdev)))
    return CompletionReport(
        max_variance_deviation=float(dev[worst]),
        worst_path=worst,
        fill_certificate_ok=True,
        max_fill_ratio=float(ratio[worst_fill]),
        martingale_worst_z=mart.worst_z,
        coupling_mean=mean,
        coupling_stderr=stderr,
        coupling_bound=bound,
        coupling_ok=mean <= bound + 3.0 * stderr,
        reps=reps,
    )

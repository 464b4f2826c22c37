"""Weighted Gaussian mixture fitting by expectation-maximization.

Each observed point ``x_n`` carries a weight ``w_n`` (a histogram bin count),
and the M-step uses weighted sums; unit weights reduce to ordinary EM.  Fits
run on data rescaled to [-1, 1] per axis, prune at most one low-weight
component per check, and repair covariances that lose positive definiteness.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .histogram import DegenerateInputError, WeightedPoints

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
# below this effective mass (relative to total weight) a component's mean and
# covariance are frozen for the iteration
MASS_FLOOR = 1e-12
REPAIR_MAX_DOUBLINGS = 60
# below this (times d) a covariance is treated as numerically singular
SINGULAR_RCOND = np.finfo(np.float64).eps


class CovarianceRepairError(ArithmeticError):
    pass


@dataclass(frozen=True)
class AffineMap:
    """Per-axis map ``z = (x - offset) / scale`` from data space to the fit frame."""

    scale: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=np.float64))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64))

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.ones(d), np.zeros(d))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.scale == 1.0) and np.all(self.offset == 0.0))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return (x - self.offset) / self.scale

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.scale + self.offset


def _symmetric(cov: np.ndarray) -> np.ndarray:
    # mirror the upper triangle so the stored matrices are exactly symmetric
    upper = np.triu(cov)
    return upper + np.swapaxes(np.triu(cov, 1), -1, -2)


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class GmmModel:
    """Mixture parameters in the frame described by ``normalization``.

    ``normalization`` maps original data into the frame the parameters live in;
    an identity map means the parameters are in data space.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    normalization: AffineMap | None = None

    def __post_init__(self):
        a = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariances, dtype=np.float64)
        m, d = mu.shape
        if a.shape != (m,) or cov.shape != (m, d, d) or m < 1:
            raise ValueError("inconsistent component shapes")
        object.__setattr__(self, "weights", a)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", _symmetric(cov))
        if self.normalization is None:
            object.__setattr__(self, "normalization", AffineMap.identity(d))

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list:
        return [GaussianComponent(float(a), m, c)
                for a, m, c in zip(self.weights, self.means, self.covariances)]

    def log_component_densities(self, x: np.ndarray) -> np.ndarray:
        """``log(alpha_i N(x_n | mu_i, Sigma_i))`` as an (M, N) array."""
        x = np.atleast_2d(x)
        d = self.dimension
        out = np.empty((self.n_components, x.shape[0]))
        for i in range(self.n_components):
            chol = np.linalg.cholesky(self.covariances[i])
            diff = x - self.means[i]
            sol = np.linalg.solve(chol, diff.T)
            maha = np.sum(sol * sol, axis=0)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            with np.errstate(divide="ignore"):
                log_alpha = np.log(self.weights[i])
            out[i] = log_alpha - 0.5 * (d * LOG_2PI + logdet + maha)
        return out

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Mixture density at ``x`` in this model's frame."""
        logp = self.log_component_densities(x)
        return np.exp(_logsumexp(logp))


def _logsumexp(logp: np.ndarray) -> np.ndarray:
    top = np.max(logp, axis=0)
    top = np.where(np.isfinite(top), top, 0.0)
    return top + np.log(np.sum(np.exp(logp - top), axis=0))


@dataclass(frozen=True)
class FitConfig:
    initial_components: int = 12
    max_em_iterations: int = 100
    prune_threshold: float = 0.005
    prune_check_interval: int = 10
    loglik_rel_tolerance: float = 1e-6
    seed: int = 0
    warm_start: GmmModel | None = None

    def __post_init__(self):
        if self.initial_components < 1 or self.max_em_iterations < 1:
            raise ValueError("initial_components and max_em_iterations must be >= 1")
        if self.prune_check_interval < 1:
            raise ValueError("prune_check_interval must be >= 1")
        if self.loglik_rel_tolerance < 0:
            raise ValueError("loglik_rel_tolerance must be >= 0")
        # threshold 0 disables pruning
        if not 0 <= self.prune_threshold < 1.0 / self.initial_components:
            raise ValueError("prune_threshold must lie in [0, 1/initial_components)")


@dataclass(frozen=True)
class PruneEvent:
    iteration: int
    component: int
    weight: float


@dataclass
class FitResult:
    model: GmmModel
    loglik_trace: list
    iterations_used: int
    converged: bool
    pruning_events: list = field(default_factory=list)
    repairs: int = 0
    # iterations whose E-step ran on covariances repaired after the M-step
    repair_iterations: list = field(default_factory=list)
    # log-likelihood of the final model on the data in original space
    loglik: float = float("nan")

    @property
    def n_components(self) -> int:
        return self.model.n_components


def normalize(points: WeightedPoints):
    x = points.points
    lo, hi = x.min(axis=0), x.max(axis=0)
    if np.any(hi <= lo):
        axis = int(np.argmax(hi <= lo))
        raise DegenerateInputError(f"zero spread on axis {axis}: cannot rescale to [-1, 1]")
    amap = AffineMap(scale=(hi - lo) / 2.0, offset=(hi + lo) / 2.0)
    return WeightedPoints(amap.forward(x), points.weights), amap


def denormalize_model(model: GmmModel) -> GmmModel:
    amap = model.normalization
    s = amap.scale
    means = amap.inverse(model.means)
    covs = model.covariances * s[None, :, None] * s[None, None, :]
    return GmmModel(model.weights.copy(), means, covs, AffineMap.identity(model.dimension))


def renormalize_model(model: GmmModel, amap: AffineMap) -> GmmModel:
    """Express a model (in any frame) in the frame given by ``amap``."""
    data_space = model if model.normalization.is_identity else denormalize_model(model)
    s = amap.scale
    means = amap.forward(data_space.means)
    covs = data_space.covariances / (s[None, :, None] * s[None, None, :])
    return GmmModel(data_space.weights.copy(), means, covs, amap)


def init_model(points: WeightedPoints, config: FitConfig, temperature=None,
               normalization: AffineMap | None = None) -> GmmModel:
    """Initial mixture for ``points`` (already in the fit frame).

    ``temperature`` is the per-axis variance in data units; ``normalization``
    converts it (and any warm start) into the fit frame.
    """
    d = points.dimension
    amap = normalization if normalization is not None else AffineMap.identity(d)
    if config.warm_start is not None:
        if config.warm_start.dimension != d:
            raise ValueError(
                f"warm-start model is {config.warm_start.dimension}D but the data are {d}D"
            )
        return renormalize_model(config.warm_start, amap)

    m = config.initial_components
    distinct = len(np.unique(points.points[points.weights > 0], axis=0))
    if distinct < m:
        log.warning("only %d distinct points; reducing initial components from %d", distinct, m)
        m = distinct
    if temperature is None:
        mean, second = points.moments()
        var = np.diag(second) - mean**2
    else:
        var = np.asarray(temperature, dtype=np.float64) / amap.scale**2
    rng = np.random.default_rng(config.seed)
    lo, hi = points.points.min(axis=0), points.points.max(axis=0)
    means = rng.uniform(lo, hi, size=(m, d))
    covs = np.broadcast_to(np.diag(var), (m, d, d)).copy()
    return GmmModel(np.full(m, 1.0 / m), means, covs, amap)


def e_step(model: GmmModel, points: WeightedPoints):
    """Responsibilities (M, N) and the weighted log-likelihood.

    Covariances that fail Cholesky are repaired before evaluation.
    """
    model, _, failed = _repair_all(model)
    if failed:
        raise CovarianceRepairError(f"components {failed} could not be repaired")
    logp = model.log_component_densities(points.points)
    lse = _logsumexp(logp)
    resp = np.exp(logp - lse)
    loglik = float(np.sum(points.weights * lse))
    return resp, loglik


def m_step(points: WeightedPoints, resp: np.ndarray, previous: GmmModel | None = None):
    """Weighted parameter update.

    Returns ``(model, starved)`` where ``starved`` flags components whose
    effective mass fell below the floor; those keep their previous mean and
    covariance.
    """
    x, w = points.points, points.weights
    total = points.total_weight
    rw = resp * w[None, :]
    mass = np.sum(rw, axis=1)
    if not np.sum(mass) > 0:
        raise ArithmeticError("total responsibility mass is zero")
    starved = mass < MASS_FLOOR * total
    if np.any(starved) and previous is None:
        raise ArithmeticError("component with no mass and no previous parameters")
    m, d = rw.shape[0], x.shape[1]
    weights = mass / total
    means = np.empty((m, d))
    covs = np.empty((m, d, d))
    for i in range(m):
        if starved[i]:
            means[i] = previous.means[i]
            covs[i] = previous.covariances[i]
            continue
        means[i] = np.sum(rw[i][:, None] * x, axis=0) / mass[i]
        diff = x - means[i]
        covs[i] = np.sum(rw[i][:, None, None] * diff[:, :, None] * diff[:, None, :], axis=0) / mass[i]
    amap = previous.normalization if previous is not None else None
    return GmmModel(weights, means, covs, amap), starved


def prune(model: GmmModel, threshold: float) -> tuple:
    """Remove the single lightest component if any weight is below ``threshold``.

    Returns ``(model, removed_index)``; ``removed_index`` is None when nothing
    was pruned.  A one-component model is never pruned.
    """
    if model.n_components == 1 or not np.any(model.weights < threshold):
        return model, None
    idx = int(np.argmin(model.weights))
    return _drop(model, idx), idx


def _drop(model: GmmModel, idx: int) -> GmmModel:
    keep = np.arange(model.n_components) != idx
    a = model.weights[keep]
    return GmmModel(a / a.sum(), model.means[keep], model.covariances[keep], model.normalization)


def _is_spd(sigma: np.ndarray) -> bool:
    """Cholesky succeeds and the matrix is not numerically singular."""
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return False
    if not np.linalg.det(sigma) > 0:
        return False
    # squared ratio of Cholesky diagonals bounds the reciprocal condition number
    diag = np.diag(chol)
    return (diag.min() / diag.max()) ** 2 > SINGULAR_RCOND * sigma.shape[0]


def repair_covariance(sigma: np.ndarray) -> np.ndarray:
    """Load the diagonal until ``sigma`` admits a Cholesky factorization."""
    sigma = np.asarray(sigma, dtype=np.float64)
    sigma = (sigma + sigma.T) / 2.0
    if not np.all(np.isfinite(sigma)):
        raise CovarianceRepairError("covariance has non-finite entries")
    if _is_spd(sigma):
        return sigma
    d = sigma.shape[0]
    scale = abs(np.trace(sigma)) / d
    lam = 1e-8 * (scale if scale > 0 else 1.0)
    eye = np.eye(d)
    for _ in range(REPAIR_MAX_DOUBLINGS + 1):
        candidate = sigma + lam * eye
        if _is_spd(candidate):
            return candidate
        lam *= 2.0
    raise CovarianceRepairError(f"covariance still not SPD after {REPAIR_MAX_DOUBLINGS} doublings")


def _repair_all(model: GmmModel):
    """Repair every non-SPD covariance; returns (model, n_repaired, failed indices)."""
    covs = model.covariances.copy()
    repaired, failed = 0, []
    for i, c in enumerate(covs):
        if _is_spd(c):
            continue
        try:
            covs[i] = repair_covariance(c)
            repaired += 1
        except CovarianceRepairError:
            failed.append(i)
    if repaired == 0 and not failed:
        return model, 0, []
    return replace(model, covariances=covs), repaired, failed


def fit(points: WeightedPoints, config: FitConfig | None = None, temperature=None) -> FitResult:
    """Fit a weighted GMM and return it in original data space."""
    config = config or FitConfig()
    try:
        norm_points, amap = normalize(points)
    except DegenerateInputError as exc:
        raise DegenerateInputError(f"cannot fit GMM: {exc}") from exc
    model = init_model(norm_points, config, temperature, amap)
    # log-likelihoods are reported in data space: the frame change shifts them
    # by the constant -W * sum(log scale)
    frame_shift = -points.total_weight * float(np.sum(np.log(amap.scale)))

    trace, events = [], []
    repairs = 0
    repair_iterations = []
    converged = False
    last_prune_iter = 0
    iteration = 0
    for iteration in range(1, config.max_em_iterations + 1):
        model, n_rep, failed = _repair_all(model)
        repairs += n_rep
        if n_rep or failed:
            repair_iterations.append(iteration)
        for idx in sorted(failed, reverse=True):
            if model.n_components == 1:
                raise CovarianceRepairError("last remaining component could not be repaired")
            events.append(PruneEvent(iteration, idx, float(model.weights[idx])))
            model = _drop(model, idx)
            last_prune_iter = iteration
        resp, loglik = e_step(model, norm_points)
        loglik += frame_shift
        trace.append(loglik)
        if len(trace) > 1 and last_prune_iter < iteration - 1:
            prev = trace[-2]
            if abs(loglik - prev) <= config.loglik_rel_tolerance * abs(prev):
                converged = True
                break
        model, _ = m_step(norm_points, resp, model)
        if config.prune_threshold > 0 and iteration % config.prune_check_interval == 0:
            pruned, idx = prune(model, config.prune_threshold)
            if idx is not None:
                events.append(PruneEvent(iteration, idx, float(model.weights[idx])))
                model = pruned
                last_prune_iter = iteration

    model, n_rep, _ = _repair_all(model)
    repairs += n_rep
    final = denormalize_model(model)
    _, final_loglik = e_step(final, points)
    return FitResult(
        model=final,
        loglik_trace=trace,
        iterations_used=iteration,
        converged=converged,
        pruning_events=events,
        repairs=repairs,
        repair_iterations=repair_iterations,
        loglik=final_loglik,
    )


def evaluate_pdf(model: GmmModel, axis_ranges, n_bins: int) -> np.ndarray:
    """Mixture density at the bin centers of an ``n_bins`` x ``n_bins`` grid.

    The model is evaluated in data space; values are not renormalized.
    """
    data_model = model if model.normalization.is_identity else denormalize_model(model)
    (a, b), (c, d) = axis_ranges
    u = a + (np.arange(n_bins) + 0.5) * (b - a) / n_bins
    v = c + (np.arange(n_bins) + 0.5) * (d - c) / n_bins
    gu, gv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([gu.ravel(), gv.ravel()])
    return data_model.pdf(pts).reshape(n_bins, n_bins)


def mixture_moments(model: GmmModel):
    """Mixture mean and second moment ``E[x x^T]`` in the model's frame."""
    a = model.weights
    mean = np.sum(a[:, None] * model.means, axis=0)
    outer = model.means[:, :, None] * model.means[:, None, :]
    second = np.sum(a[:, None, None] * (model.covariances + outer), axis=0)
    return mean, second

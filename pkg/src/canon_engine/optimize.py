"""Black-box minimization over transform domains.

Two strategies: exhaustive scoring of a discrete domain, and a fixed-budget
Gaussian-process loop over box domains (space-filling grid, seeded uniform
draws, then expected-improvement picks). The GP uses an RBF kernel with
fixed hyperparameters on inputs normalized to the unit box and targets
standardized to zero mean, unit variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .errors import (
    ArgumentError,
    DimensionMismatch,
    EvaluationError,
    OptimizerError,
    SingularKernel,
)
from .transforms import TransformDomain, TransformPoint, grid_points

_JITTER_START = 1e-8
_JITTER_LIMIT = 1e-4
_LOCAL_JITTER = 0.05  # stddev of the perturbed-incumbent candidates, unit-box scale


@dataclass(frozen=True)
class BoConfig:
    """Budget and hyperparameters for the Bayesian-optimization loop.

    Total evaluations are always prod(grid_per_dim) + n_random + n_iters;
    an empty grid_per_dim skips the grid stage.
    """

    grid_per_dim: tuple[int, ...] = ()
    n_random: int = 6
    n_iters: int = 20
    seed: int = 0
    xi: float = 0.0
    candidate_count: int = 2048
    lengthscale: float = 0.2
    signal_var: float = 1.0
    noise_var: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid_per_dim", tuple(int(c) for c in self.grid_per_dim))
        if any(c < 1 for c in self.grid_per_dim):
            raise ArgumentError(f"grid_per_dim entries must be >= 1, got {self.grid_per_dim}")
        if self.n_random < 0 or self.n_iters < 0:
            raise ArgumentError("n_random and n_iters must be >= 0")
        if self.init_count < 1:
            raise ArgumentError("need at least one grid or random evaluation before the GP stage")
        if self.xi < 0.0:
            raise ArgumentError(f"xi must be >= 0, got {self.xi}")
        if self.candidate_count < 1:
            raise ArgumentError(f"candidate_count must be >= 1, got {self.candidate_count}")
        if self.lengthscale <= 0.0 or self.signal_var <= 0.0 or self.noise_var < 0.0:
            raise ArgumentError("need lengthscale > 0, signal_var > 0, noise_var >= 0")

    @property
    def init_count(self) -> int:
        grid = int(np.prod(self.grid_per_dim)) if self.grid_per_dim else 0
        return grid + self.n_random

    @property
    def total_evaluations(self) -> int:
        return self.init_count + self.n_iters


@dataclass(frozen=True)
class TraceEntry:
    point: TransformPoint
    energy: float
    stage: str  # "grid" | "random" | "bo"


@dataclass(frozen=True)
class OptTrace:
    """Evaluation log; best_* resolve ties toward the earliest evaluation."""

    evaluations: tuple[TraceEntry, ...]

    def __post_init__(self) -> None:
        if not self.evaluations:
            raise ArgumentError("trace needs at least one evaluation")
        object.__setattr__(self, "evaluations", tuple(self.evaluations))

    @property
    def best_index(self) -> int:
        energies = [e.energy for e in self.evaluations]
        return int(np.argmin(energies))

    @property
    def best_point(self) -> TransformPoint:
        return self.evaluations[self.best_index].point

    @property
    def best_energy(self) -> float:
        return self.evaluations[self.best_index].energy

    def __len__(self) -> int:
        return len(self.evaluations)


def _evaluate(f: Callable[[TransformPoint], float], point: TransformPoint, stage: str) -> TraceEntry:
    try:
        value = float(f(point))
    except Exception as exc:
        raise EvaluationError(f"objective failed at {stage} point {point.params}: {exc}") from exc
    if math.isnan(value):
        raise EvaluationError(f"objective returned NaN at {stage} point {point.params}")
    return TraceEntry(point=point, energy=value, stage=stage)


def grid_minimize(domain: TransformDomain, f: Callable[[TransformPoint], float]) -> OptTrace:
    """Score every point of a discrete domain, in declaration order."""
    if not domain.is_discrete:
        raise ArgumentError("grid_minimize requires a discrete domain")
    entries = [_evaluate(f, p, "grid") for p in domain.points]
    return OptTrace(tuple(entries))


def rbf_kernel(x1, x2, lengthscale: float = 0.2, signal_var: float = 1.0) -> float:
    """signal_var * exp(-||x1 - x2||^2 / (2 lengthscale^2))."""
    if lengthscale <= 0.0 or signal_var <= 0.0:
        raise ArgumentError("need lengthscale > 0 and signal_var > 0")
    a = np.asarray(x1, dtype=np.float64).reshape(-1)
    b = np.asarray(x2, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"points have shapes {a.shape} and {b.shape}")
    sq = float(np.sum((a - b) ** 2))
    return signal_var * math.exp(-sq / (2.0 * lengthscale**2))


def _rbf_matrix(A: np.ndarray, B: np.ndarray, lengthscale: float, signal_var: float) -> np.ndarray:
    sq = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return signal_var * np.exp(-sq / (2.0 * lengthscale**2))


@dataclass(frozen=True, eq=False)
class GPState:
    """Fitted GP. X is n x d in the unit box; y is held standardized, and the
    posterior de-standardizes on the way out."""

    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray  # lower-triangular factor of K + noise
    alpha: np.ndarray  # (K + noise)^-1 y
    y_mean: float
    y_std: float
    lengthscale: float
    signal_var: float
    noise_var: float

    @property
    def n(self) -> int:
        return int(self.X.shape[0])


def gp_fit(
    X,
    y,
    lengthscale: float = 0.2,
    signal_var: float = 1.0,
    noise_var: float = 1e-6,
) -> GPState:
    """Fit the fixed-hyperparameter GP; Cholesky jitter escalates from 1e-8
    by doubling and gives up past 1e-4 with SingularKernel."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, y has {y.shape[0]} entries")
    if X.shape[0] < 1:
        raise ArgumentError("need at least one observation")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ArgumentError("observations must be finite")
    if lengthscale <= 0.0 or signal_var <= 0.0 or noise_var < 0.0:
        raise ArgumentError("need lengthscale > 0, signal_var > 0, noise_var >= 0")
    y_mean = float(y.mean())
    y_std = float(y.std())  # population std; a flat target keeps scale 1
    if y_std == 0.0:
        y_std = 1.0
    y_n = (y - y_mean) / y_std
    K = _rbf_matrix(X, X, lengthscale, signal_var)
    base = K + noise_var * np.eye(X.shape[0])
    jitter = 0.0
    while True:
        try:
            chol = scipy.linalg.cholesky(base + jitter * np.eye(X.shape[0]), lower=True)
            break
        except scipy.linalg.LinAlgError:
            jitter = _JITTER_START if jitter == 0.0 else jitter * 2.0
            if jitter > _JITTER_LIMIT:
                raise SingularKernel(
                    f"kernel matrix of size {X.shape[0]} stayed non-positive-definite "
                    f"after jitter {_JITTER_LIMIT}"
                ) from None
    alpha = scipy.linalg.cho_solve((chol, True), y_n)
    return GPState(
        X=X,
        y=y_n,
        chol=chol,
        alpha=alpha,
        y_mean=y_mean,
        y_std=y_std,
        lengthscale=lengthscale,
        signal_var=signal_var,
        noise_var=noise_var,
    )


def _gp_posterior_batch(state: GPState, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query rows, in the original y scale."""
    Ks = _rbf_matrix(Xq, state.X, state.lengthscale, state.signal_var)
    mu_n = Ks @ state.alpha
    v = scipy.linalg.solve_triangular(state.chol, Ks.T, lower=True)
    var_n = state.signal_var - np.sum(v**2, axis=0)
    np.maximum(var_n, 0.0, out=var_n)
    return state.y_mean + state.y_std * mu_n, (state.y_std**2) * var_n


def gp_posterior(state: GPState, x) -> tuple[float, float]:
    """Posterior (mean, variance) at one point. Far from all data the mean
    reverts to the observed average and the variance to the signal variance."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != state.X.shape[1]:
        raise DimensionMismatch(f"query has dim {x.shape[1]}, model has dim {state.X.shape[1]}")
    mu, var = _gp_posterior_batch(state, x)
    return float(mu[0]), float(var[0])


def expected_improvement(mu: float, sigma: float, best: float, xi: float = 0.0) -> float:
    """EI for minimization; collapses to max(best - mu - xi, 0) when sigma is 0."""
    if sigma < 0.0:
        raise ArgumentError(f"sigma must be >= 0, got {sigma}")
    if xi < 0.0:
        raise ArgumentError(f"xi must be >= 0, got {xi}")
    gap = best - mu - xi
    if sigma == 0.0:
        return max(gap, 0.0)
    z = gap / sigma
    phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    Phi = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    return max(gap * Phi + sigma * phi, 0.0)


def _expected_improvement_vec(mu: np.ndarray, sigma: np.ndarray, best: float, xi: float) -> np.ndarray:
    gap = best - mu - xi
    out = np.maximum(gap, 0.0)
    pos = sigma > 0.0
    z = gap[pos] / sigma[pos]
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out[pos] = np.maximum(gap[pos] * ndtr(z) + sigma[pos] * phi, 0.0)
    return out


def bo_minimize(
    domain: TransformDomain,
    f: Callable[[TransformPoint], float],
    config: BoConfig,
) -> OptTrace:
    """Fixed-budget minimization over a box domain.

    Stages, in order: inclusive grid (optional), uniform random draws, then
    n_iters rounds of fit-GP / maximize-EI over sampled candidates. The EI
    candidate pool mixes fresh uniform points with small perturbations of
    every past evaluation; the argmax breaks ties toward the earliest
    candidate. All randomness comes from config.seed.
    """
    if domain.is_discrete:
        raise ArgumentError("bo_minimize requires a box domain; use grid_minimize for point lists")
    d = domain.dim
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    span = hi - lo

    entries: list[TraceEntry] = []
    if config.grid_per_dim:
        if len(config.grid_per_dim) != d:
            raise DimensionMismatch(
                f"grid_per_dim has {len(config.grid_per_dim)} entries for a dim-{d} domain"
            )
        for p in grid_points(domain, config.grid_per_dim):
            entries.append(_evaluate(f, p, "grid"))

    rng = np.random.default_rng(config.seed)
    if config.n_random:
        draws = lo + rng.random((config.n_random, d)) * span
        for row in draws:
            entries.append(_evaluate(f, TransformPoint(tuple(row)), "random"))

    for _ in range(config.n_iters):
        X = np.array([(np.asarray(e.point.params) - lo) / span for e in entries])
        y = np.array([e.energy for e in entries])
        try:
            state = gp_fit(X, y, config.lengthscale, config.signal_var, config.noise_var)
        except SingularKernel as exc:
            raise OptimizerError(f"surrogate fit failed after {len(entries)} evaluations: {exc}") from exc
        best = float(y.min())
        fresh = rng.random((config.candidate_count, d))
        local = np.clip(X + rng.normal(0.0, _LOCAL_JITTER, size=X.shape), 0.0, 1.0)
        cands = np.vstack([fresh, local])
        mu, var = _gp_posterior_batch(state, cands)
        ei = _expected_improvement_vec(mu, np.sqrt(var), best, config.xi)
        pick = cands[int(np.argmax(ei))]
        point = TransformPoint(tuple(lo + pick * span))
        entries.append(_evaluate(f, point, "bo"))

    trace = OptTrace(tuple(entries))
    assert len(trace) == config.total_evaluations
    return trace

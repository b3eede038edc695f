"""Latent perceptual-strength inference from multi-labeler responses.

Each boundary pixel carries a hidden strength x in [0, 1]; each labeler l
has a response profile mu_l(chi) giving the probability of marking a
boundary of strength chi, modeled as a 4-parameter sigmoid.  A labeler's
response to a pixel is a soft vote: the profile convolved with a Gaussian
kernel around the pixel's strength.  An EM loop alternates

  * per-labeler profile estimation (Nadaraya-Watson kernel regression of
    the response bits on the current strengths, then a sigmoid fit), and
  * per-pixel strength updates (grid argmax of the response likelihood),

starting from each pixel's mean response.  All computation is on a fixed
strength grid; everything is deterministic, and results are invariant to
labeler and pixel ordering (order-sensitive reductions are canonicalized
by sorting before summation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize

from .label_model import MasterMap

# Search box for sigmoid parameters: slope, offset, scale, shift.
THETA_BOUNDS = ((0.0, 50.0), (-25.0, 25.0), (0.0, 4.0), (-1.0, 2.0))
_SEEDS_PER_DIM = 4
_REFINE_TOP_K = 8
_SIMPLEX_MAX_ITER = 200


@dataclass(frozen=True)
class SigmoidParams:
    """Parameters of the labeler response sigmoid
    ``scale / (1 + exp(offset - slope * chi)) - shift``."""

    slope: float
    offset: float
    scale: float
    shift: float

    def __post_init__(self):
        if self.slope < 0 or self.scale < 0:
            raise ValueError("slope and scale must be nonnegative")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.slope, self.offset, self.scale, self.shift)


@dataclass(frozen=True)
class StrengthGrid:
    """Uniform grid over [0, 1] used for all strength-domain quadrature.

    ``sigma`` is the soft-voting kernel width, ``epsilon`` the floor that
    keeps response probabilities away from 0 and 1.
    """

    size: int = 101
    sigma: float = 0.15
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("grid needs at least two points")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not (0.0 <= self.epsilon < 0.5):
            raise ValueError("epsilon must lie in [0, 0.5)")

    @cached_property
    def values(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.size)

    @property
    def step(self) -> float:
        return 1.0 / (self.size - 1)

    def clamp(self, p: np.ndarray | float):
        return np.clip(p, self.epsilon, 1.0 - self.epsilon)


@dataclass(frozen=True)
class LabelerProfile:
    """One labeler's estimated response curve and its sigmoid parameters.

    ``curve`` is the clamped profile actually used in strength updates
    (the sigmoid fit, unless raw-curve mode was requested).
    """

    labeler_id: str
    theta: SigmoidParams
    curve: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "curve", np.asarray(self.curve, dtype=float))


@dataclass(frozen=True)
class StrengthField:
    """Inferred perceptual strength per pixel id."""

    strengths: dict[int, float]

    def __post_init__(self):
        clean = {int(k): float(v) for k, v in self.strengths.items()}
        for k, v in clean.items():
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"strength {v} for pixel {k} outside [0, 1]")
        object.__setattr__(self, "strengths", clean)

    def __getitem__(self, pixel_id: int) -> float:
        return self.strengths[pixel_id]

    def __len__(self) -> int:
        return len(self.strengths)

    def ids(self) -> list[int]:
        return sorted(self.strengths)

    def as_array(self, order: Sequence[int] | None = None) -> np.ndarray:
        keys = self.ids() if order is None else order
        return np.array([self.strengths[k] for k in keys], dtype=float)


@dataclass(frozen=True)
class EmConfig:
    sigma: float = 0.15
    grid_size: int = 101
    epsilon: float = 1e-4
    max_iters: int = 20
    tol: float = 1e-3
    mu_mode: str = "sigmoid"  # "sigmoid": strength updates use the fitted
    # curve; "raw": they use the unsmoothed kernel-regression curve.

    def __post_init__(self):
        if self.mu_mode not in ("sigmoid", "raw"):
            raise ValueError("mu_mode must be 'sigmoid' or 'raw'")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def make_grid(self) -> StrengthGrid:
        return StrengthGrid(size=self.grid_size, sigma=self.sigma, epsilon=self.epsilon)


@dataclass(frozen=True)
class EmResult:
    strengths: StrengthField
    profiles: tuple[LabelerProfile, ...]
    iterations_run: int
    final_max_delta: float
    history: tuple[float, ...]
    degenerate: bool = False


def sigmoid(chi: float, theta: SigmoidParams) -> float:
    """Response sigmoid ``scale / (1 + exp(offset - slope*chi)) - shift``,
    unclamped."""
    return theta.scale / (1.0 + math.exp(theta.offset - theta.slope * chi)) - theta.shift


def sigmoid_curve(theta: SigmoidParams, chi: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sigmoid` over an array of strengths."""
    z = theta.offset - theta.slope * np.asarray(chi, dtype=float)
    return theta.scale / (1.0 + np.exp(z)) - theta.shift


def _gaussian_pdf(d: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * (d / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def kernel_weights(x: float | np.ndarray, grid: StrengthGrid) -> np.ndarray:
    """Gaussian kernel at ``x`` truncated to [0, 1] and renormalized so the
    grid sum times the grid step is exactly one.

    Accepts a scalar (returns shape (G,)) or an array of strengths
    (returns one weight row per strength).
    """
    x_arr = np.asarray(x, dtype=float)
    d = x_arr[..., None] - grid.values
    raw = _gaussian_pdf(d, grid.sigma)
    mass = raw.sum(axis=-1, keepdims=True) * grid.step
    out = raw / mass
    return out if x_arr.ndim else out.reshape(grid.size)


def response_prob(
    y: int, mu_grid: np.ndarray, x: float | np.ndarray, grid: StrengthGrid
) -> float | np.ndarray:
    """Probability of response ``y`` to a boundary of strength ``x`` under
    profile ``mu_grid``: the kernel-weighted grid average of the profile
    (a soft vote across nearby strengths), clamped to
    [epsilon, 1 - epsilon].

    Shared by inference and the synthetic-data generator; accepts scalar
    or array ``x``.
    """
    w = kernel_weights(x, grid)
    p1 = grid.clamp((w * mu_grid).sum(axis=-1) * grid.step)
    p = p1 if y else 1.0 - p1
    return p if np.ndim(x) else float(p)


def init_strengths(master: MasterMap) -> StrengthField:
    """Initial strengths: each pixel's mean response across labelers."""
    n = master.n_labelers
    return StrengthField(
        {px.pixel_id: px.vote_count / n for px in master.pixels}
    )


def _response_matrix(master: MasterMap) -> tuple[list[int], np.ndarray]:
    ids = [px.pixel_id for px in master.pixels]
    y = np.array([px.responses for px in master.pixels], dtype=np.int8)
    return ids, y


def _kernel_regression_curve(
    x: np.ndarray, y: np.ndarray, grid: StrengthGrid
) -> np.ndarray:
    """Nadaraya-Watson estimate of P(response = 1 | strength = chi) on the
    grid, clamped to [epsilon, 1 - epsilon].

    Pixels are summed in (strength, response) order, a canonical sequence,
    so the estimate is bit-identical under any input reordering.  Grid
    points with negligible total kernel mass fall back to the
    uninformative value 0.5.
    """
    order = np.lexsort((y, x))
    xs = x[order]
    ys = y[order].astype(float)
    k = _gaussian_pdf(xs[:, None] - grid.values[None, :], grid.sigma)
    num = (ys[:, None] * k).sum(axis=0)
    den = k.sum(axis=0)
    safe = den >= 1e-12
    mu = np.full(grid.size, 0.5)
    mu[safe] = num[safe] / den[safe]
    return np.asarray(grid.clamp(mu))


def update_mu(
    strengths: StrengthField,
    labeler_index: int,
    master: MasterMap,
    grid: StrengthGrid,
) -> np.ndarray:
    """Re-estimate one labeler's response curve from current strengths."""
    ids, y = _response_matrix(master)
    x = strengths.as_array(ids)
    return _kernel_regression_curve(x, y[:, labeler_index], grid)


def _curve_objective(mu_grid: np.ndarray, grid: StrengthGrid):
    chi = grid.values

    def objective(theta: np.ndarray) -> float:
        z = np.clip(theta[1] - theta[0] * chi, -500.0, 500.0)
        s = theta[2] / (1.0 + np.exp(z)) - theta[3]
        return float(trapezoid((s - mu_grid) ** 2, chi))

    return objective


def _seed_candidates(mu_grid: np.ndarray, grid: StrengthGrid) -> np.ndarray:
    """Fixed coarse seed grid over the parameter box, plus candidates where
    the linear parameters (scale, shift) are solved in closed form for a
    sweep of (slope, offset) values."""
    axes = [np.linspace(lo, hi, _SEEDS_PER_DIM) for lo, hi in THETA_BOUNDS]
    mesh = np.meshgrid(*axes, indexing="ij")
    seeds = [np.stack([m.ravel() for m in mesh], axis=1)]

    chi = grid.values
    weights = np.full(grid.size, grid.step)
    weights[0] = weights[-1] = grid.step / 2.0  # trapezoid rule
    extra = []
    for slope in np.linspace(0.0, 50.0, 11):
        for offset in np.linspace(-25.0, 25.0, 21):
            g = 1.0 / (1.0 + np.exp(np.clip(offset - slope * chi, -500, 500)))
            # Least squares for mu ~ scale*g - shift under the grid weights.
            sw = weights.sum()
            gw = (weights * g).sum()
            ggw = (weights * g * g).sum()
            mw = (weights * mu_grid).sum()
            mgw = (weights * mu_grid * g).sum()
            det = ggw * sw - gw * gw
            if det < 1e-12:
                continue
            scale = (mgw * sw - mw * gw) / det
            shift = (gw * mgw - ggw * mw) / det
            extra.append(
                (
                    slope,
                    offset,
                    float(np.clip(scale, *THETA_BOUNDS[2])),
                    float(np.clip(shift, *THETA_BOUNDS[3])),
                )
            )
    if extra:
        seeds.append(np.array(extra))
    return np.vstack(seeds)


def fit_theta(mu_grid: np.ndarray, grid: StrengthGrid) -> SigmoidParams:
    """Fit sigmoid parameters to a response curve by least squares over the
    grid (trapezoid-weighted integrated squared error).

    Deterministic multi-start search: every point of a fixed coarse seed
    grid over the parameter box is evaluated, the best candidates are
    refined with bounded Nelder-Mead, and the best refined point wins, so
    the result is never worse than any seed-grid point.  Only the fitted
    curve is identified; the parameters themselves may be one of several
    equivalent solutions.
    """
    mu_grid = np.asarray(mu_grid, dtype=float)
    if mu_grid.shape != (grid.size,):
        raise ValueError(f"expected curve of length {grid.size}")
    objective = _curve_objective(mu_grid, grid)

    candidates = _seed_candidates(mu_grid, grid)
    chi = grid.values
    z = np.clip(candidates[:, 1:2] - candidates[:, 0:1] * chi[None, :], -500, 500)
    s = candidates[:, 2:3] / (1.0 + np.exp(z)) - candidates[:, 3:4]
    scores = trapezoid((s - mu_grid[None, :]) ** 2, chi, axis=1)

    best_theta = candidates[int(np.argmin(scores))]
    best_score = float(scores.min())
    for idx in np.argsort(scores, kind="stable")[:_REFINE_TOP_K]:
        res = minimize(
            objective,
            candidates[idx],
            method="Nelder-Mead",
            bounds=THETA_BOUNDS,
            options={"maxiter": _SIMPLEX_MAX_ITER, "xatol": 1e-7, "fatol": 1e-12},
        )
        if res.fun < best_score:
            best_score = float(res.fun)
            best_theta = res.x
    t = [float(np.clip(v, lo, hi)) for v, (lo, hi) in zip(best_theta, THETA_BOUNDS)]
    return SigmoidParams(*t)


def _log_prob_tables(
    profiles: Sequence[np.ndarray], grid: StrengthGrid
) -> tuple[np.ndarray, np.ndarray]:
    """log P(y=1) and log P(y=0) for every (labeler, grid strength).

    Built through :func:`response_prob` itself so a table lookup and a
    direct call agree bit for bit.
    """
    p1 = np.stack(
        [response_prob(1, np.asarray(mu, dtype=float), grid.values, grid)
         for mu in profiles]
    )
    # A zero floor makes impossible responses exactly that: -inf log
    # probability is the intended value, not an arithmetic accident.
    with np.errstate(divide="ignore"):
        return np.log(p1), np.log1p(-p1)


def _batch_strength_update(
    responses: np.ndarray, profiles: Sequence[np.ndarray], grid: StrengthGrid
) -> np.ndarray:
    """Grid-argmax strength update for a whole response matrix (N, L).

    Per-labeler log terms are sorted before summation so the result is
    bit-identical under labeler permutations.  Ties go to the smallest
    grid strength (first argmax).
    """
    log_p1, log_p0 = _log_prob_tables(profiles, grid)
    contrib = np.where(responses[..., None].astype(bool), log_p1, log_p0)
    loglik = np.sort(contrib, axis=-2).sum(axis=-2)
    return grid.values[np.argmax(loglik, axis=-1)]


def update_strength(
    responses: Sequence[int], profiles: Sequence[np.ndarray], grid: StrengthGrid
) -> float:
    """Most likely grid strength for one pixel's response vector given the
    current labeler profiles; ties break toward the smallest strength."""
    y = np.asarray(responses, dtype=np.int8)
    if len(profiles) != y.shape[0]:
        raise ValueError("one profile per response entry required")
    return float(_batch_strength_update(y, profiles, grid))


def run_em(master: MasterMap, config: EmConfig = EmConfig()) -> EmResult:
    """Alternate profile and strength estimation until strengths move less
    than ``config.tol`` or ``config.max_iters`` is reached.

    A master map whose pixels all share one response pattern carries no
    ordering evidence; the run completes with a flat strength field and
    the result is flagged ``degenerate``.
    """
    if not master.pixels:
        raise ValueError("master map has no pixels")
    grid = config.make_grid()
    ids, y = _response_matrix(master)
    n_labelers = master.n_labelers

    x = init_strengths(master).as_array(ids)
    degenerate = len({px.responses for px in master.pixels}) == 1

    history: list[float] = []
    thetas: list[SigmoidParams] = []
    curves: list[np.ndarray] = []
    iterations = 0
    for _ in range(config.max_iters):
        iterations += 1
        thetas = []
        curves = []
        for l in range(n_labelers):
            raw = _kernel_regression_curve(x, y[:, l], grid)
            theta = fit_theta(raw, grid)
            if config.mu_mode == "sigmoid":
                curve = np.asarray(grid.clamp(sigmoid_curve(theta, grid.values)))
            else:
                curve = raw
            thetas.append(theta)
            curves.append(curve)
        x_new = _batch_strength_update(y, curves, grid)
        delta = float(np.max(np.abs(x_new - x)))
        history.append(delta)
        x = x_new
        if delta < config.tol:
            break

    profiles = tuple(
        LabelerProfile(labeler_id=lid, theta=theta, curve=curve)
        for lid, theta, curve in zip(master.labeler_ids, thetas, curves)
    )
    strengths = StrengthField(dict(zip(ids, x.tolist())))
    return EmResult(
        strengths=strengths,
        profiles=profiles,
        iterations_run=iterations,
        final_max_delta=history[-1],
        history=tuple(history),
        degenerate=degenerate,
    )

"""Action-set and constraint-target geometry.

Action sets are star-convex around the origin and parameterized by rays:
every policy decision reduces to picking a unit direction from a grid and a
scaling along it. Constraint targets are the known safe regions for the
constraint output; the scaling operations answer "how far can a ray be pushed
before its uncertainty box leaves (pessimistic) or stops touching
(optimistic) the target". Both predicates are exact per target shape, not
the sqrt(n)-ball sufficient conditions used in the analysis; exactness only
enlarges the verifiably-safe set inside the truly safe one.

All functions here are pure; values are treated as immutable.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

# The d>2 sphere grid is part of the effective action-set definition, so its
# seed is a fixed constant, independent of experiment seeds.
SPHERE_GRID_SEED = 190311
UNIT_TOL = 1e-9

PLANAR_GRID_SIZE = 720
SPHERE_GRID_SIZE = 2048


class GeometryError(ValueError):
    """Invalid geometric input (non-unit direction, unknown ray, bad shape)."""


# ---------------------------------------------------------------------------
# Action sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitBall:
    """Euclidean unit ball in R^d."""

    dim: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise GeometryError(f"dim must be >= 1, got {self.dim}")


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box {x : |x_i| <= half_widths_i}."""

    half_widths: np.ndarray

    def __post_init__(self) -> None:
        hw = np.atleast_1d(np.asarray(self.half_widths, dtype=float))
        if hw.ndim != 1 or hw.size < 1 or not np.all(hw > 0):
            raise GeometryError("half_widths must be a positive vector")
        object.__setattr__(self, "half_widths", hw)

    @property
    def dim(self) -> int:
        return self.half_widths.size


@dataclass(frozen=True, eq=False)
class FiniteStarConvex:
    """Union of k origin-rooted rays: {alpha*u_i : alpha in [0, alpha_i]}.

    Directions are unit vectors and are always addressed by index, never by
    floating-point comparison.
    """

    directions: np.ndarray
    max_scalings: np.ndarray

    def __post_init__(self) -> None:
        dirs = np.asarray(self.directions, dtype=float)
        alphas = np.atleast_1d(np.asarray(self.max_scalings, dtype=float))
        if dirs.ndim != 2 or dirs.shape[0] < 1:
            raise GeometryError("directions must be a (k, d) matrix")
        if alphas.shape != (dirs.shape[0],) or not np.all(alphas > 0):
            raise GeometryError("max_scalings must be positive, one per direction")
        norms = np.linalg.norm(dirs, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-6):
            raise GeometryError("directions must be unit vectors")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "max_scalings", alphas)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def n_rays(self) -> int:
        return self.directions.shape[0]


ActionSet = Union[UnitBall, Box, FiniteStarConvex]


def action_max_scaling(action_set: ActionSet, u: np.ndarray | None = None, index: int | None = None) -> float:
    """Largest alpha with alpha*u inside the set.

    UnitBall: 1. Box: min over coordinates with u_i != 0 of half_width_i/|u_i|.
    FiniteStarConvex: alpha_index; requires `index` (directions are matched by
    index only) and raises GeometryError when called with a bare direction.
    """
    if isinstance(action_set, FiniteStarConvex):
        if index is None:
            raise GeometryError("finite star-convex rays are addressed by index, not by direction vector")
        if not 0 <= index < action_set.n_rays:
            raise GeometryError(f"ray index {index} out of range [0, {action_set.n_rays})")
        return float(action_set.max_scalings[index])
    u = np.asarray(u, dtype=float)
    if u.shape != (action_set.dim,):
        raise GeometryError(f"direction has shape {u.shape}, expected ({action_set.dim},)")
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise GeometryError("direction must be a unit vector")
    if isinstance(action_set, UnitBall):
        return 1.0
    nz = np.abs(u) > 0.0
    return float(np.min(action_set.half_widths[nz] / np.abs(u[nz])))


def grid_max_scalings(action_set: ActionSet, grid: np.ndarray) -> np.ndarray:
    """Vectorized max scalings for a (m, d) grid of unit directions.

    For FiniteStarConvex the grid must be its own direction list (rays are
    index-matched).
    """
    if isinstance(action_set, FiniteStarConvex):
        if grid.shape != action_set.directions.shape:
            raise GeometryError("finite star-convex grids must be the set's own direction list")
        return action_set.max_scalings.copy()
    if isinstance(action_set, UnitBall):
        return np.ones(grid.shape[0])
    absu = np.abs(grid)
    with np.errstate(divide="ignore"):
        ratios = np.where(absu > 0.0, action_set.half_widths[None, :] / absu, np.inf)
    return ratios.min(axis=1)


def direction_grid(
    action_set: ActionSet,
    planar_size: int = PLANAR_GRID_SIZE,
    sphere_size: int = SPHERE_GRID_SIZE,
) -> np.ndarray:
    """Unit-direction grid that defines the effective action set.

    FiniteStarConvex supplies its own rays. d=1 uses {+1, -1}; d=2 uses
    `planar_size` uniformly spaced angles; d>2 uses the +-coordinate axes
    followed by `sphere_size` fixed-seed uniform sphere samples.
    """
    if isinstance(action_set, FiniteStarConvex):
        return action_set.directions.copy()
    d = action_set.dim
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        angles = 2.0 * np.pi * np.arange(planar_size) / planar_size
        return np.column_stack([np.cos(angles), np.sin(angles)])
    return _sphere_grid(d, sphere_size).copy()


@lru_cache(maxsize=16)
def _sphere_grid(d: int, sphere_size: int) -> np.ndarray:
    axes = np.vstack([np.eye(d), -np.eye(d)])
    rng = np.random.default_rng(SPHERE_GRID_SEED)
    samples = rng.standard_normal((sphere_size, d))
    norms = np.linalg.norm(samples, axis=1)
    # standard normals essentially never land this close to the origin
    keep = norms > 1e-12
    grid = np.vstack([axes, samples[keep] / norms[keep, None]])
    grid.setflags(write=False)
    return grid


# ---------------------------------------------------------------------------
# Constraint targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpace:
    """Scalar constraint value must satisfy z <= limit, limit > 0."""

    limit: float

    def __post_init__(self) -> None:
        if not self.limit > 0:
            raise GeometryError(f"half-space limit must be > 0, got {self.limit}")

    @property
    def rows(self) -> int:
        return 1


@dataclass(frozen=True)
class ConvexBall:
    """Constraint output must lie in the Euclidean ball of given radius in R^rows."""

    radius: float
    rows: int = 2

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise GeometryError(f"ball radius must be > 0, got {self.radius}")
        if self.rows < 1:
            raise GeometryError(f"rows must be >= 1, got {self.rows}")


@dataclass(frozen=True)
class ConvexBox:
    """Constraint output must lie in the sup-norm ball of given half-width in R^rows."""

    half_width: float
    rows: int = 2

    def __post_init__(self) -> None:
        if not self.half_width > 0:
            raise GeometryError(f"box half-width must be > 0, got {self.half_width}")
        if self.rows < 1:
            raise GeometryError(f"rows must be >= 1, got {self.rows}")


ConstraintTarget = Union[HalfSpace, ConvexBall, ConvexBox]


def target_rows(target: ConstraintTarget) -> int:
    return target.rows


def inner_radius(target: ConstraintTarget) -> float:
    """Largest r with r*B contained in the target (r = limit for a half-space)."""
    if isinstance(target, HalfSpace):
        return target.limit
    if isinstance(target, ConvexBall):
        return target.radius
    return target.half_width


def _as_rows(target: ConstraintTarget, c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim == 0:
        c = c[None]
    if c.ndim == 1:
        c = c[None, :]
    if c.shape[1] != target.rows:
        raise GeometryError(f"constraint value has {c.shape[1]} rows, target expects {target.rows}")
    return c


def pessimistic_scalings(target: ConstraintTarget, c_hat: np.ndarray, width: np.ndarray) -> np.ndarray:
    """Largest alpha >= 0 with alpha*c_hat + alpha*width*B_inf inside the target.

    Vectorized over rays: c_hat is (m, rows), width is (m,) nonnegative.
    Returns +inf for rays whose box can be scaled forever (callers clip at
    the action set's own max scaling).
    """
    c = _as_rows(target, c_hat)
    w = np.atleast_1d(np.asarray(width, dtype=float))
    if np.any(w < 0):
        raise GeometryError("width must be nonnegative")
    if isinstance(target, HalfSpace):
        coef = c[:, 0] + w
        return _safe_div(target.limit, coef)
    if isinstance(target, ConvexBox):
        coef = (np.abs(c) + w[:, None]).max(axis=1)
        return _safe_div(target.half_width, coef)
    coef = np.linalg.norm(np.abs(c) + w[:, None], axis=1)
    return _safe_div(target.radius, coef)


def optimistic_scalings(target: ConstraintTarget, c_hat: np.ndarray, width: np.ndarray) -> np.ndarray:
    """Largest alpha >= 0 with alpha*c_hat + alpha*width*B_inf still touching the target."""
    c = _as_rows(target, c_hat)
    w = np.atleast_1d(np.asarray(width, dtype=float))
    if np.any(w < 0):
        raise GeometryError("width must be nonnegative")
    if isinstance(target, HalfSpace):
        coef = c[:, 0] - w
        return _safe_div(target.limit, coef)
    if isinstance(target, ConvexBox):
        coef = (np.abs(c) - w[:, None]).max(axis=1)
        return _safe_div(target.half_width, coef)
    coef = np.linalg.norm(np.maximum(np.abs(c) - w[:, None], 0.0), axis=1)
    return _safe_div(target.radius, coef)


def _safe_div(limit: float, coef: np.ndarray) -> np.ndarray:
    out = np.full(coef.shape, np.inf)
    np.divide(limit, coef, out=out, where=coef > 0.0)
    return out


def ray_pessimistic_scaling(target: ConstraintTarget, c_hat, width: float) -> float:
    """Scalar form of pessimistic_scalings for a single ray."""
    return float(pessimistic_scalings(target, np.atleast_1d(c_hat)[None, :], np.array([width]))[0])


def ray_optimistic_scaling(target: ConstraintTarget, c_hat, width: float) -> float:
    """Scalar form of optimistic_scalings for a single ray."""
    return float(optimistic_scalings(target, np.atleast_1d(c_hat)[None, :], np.array([width]))[0])


def box_contained(target: ConstraintTarget, center, radius: float, tol: float = 0.0) -> bool:
    """Exact containment of center + radius*B_inf in the target."""
    c = _as_rows(target, center)[0]
    if radius < 0:
        raise GeometryError("radius must be nonnegative")
    if isinstance(target, HalfSpace):
        return bool(c[0] + radius <= target.limit + tol)
    if isinstance(target, ConvexBox):
        return bool(np.abs(c).max() + radius <= target.half_width + tol)
    return bool(np.linalg.norm(np.abs(c) + radius) <= target.radius + tol)


def box_intersects(target: ConstraintTarget, center, radius: float, tol: float = 0.0) -> bool:
    """Exact nonempty intersection of center + radius*B_inf with the target."""
    c = _as_rows(target, center)[0]
    if radius < 0:
        raise GeometryError("radius must be nonnegative")
    if isinstance(target, HalfSpace):
        return bool(c[0] - radius <= target.limit + tol)
    if isinstance(target, ConvexBox):
        return bool(np.abs(c).max() - radius <= target.half_width + tol)
    return bool(np.linalg.norm(np.maximum(np.abs(c) - radius, 0.0)) <= target.radius + tol)

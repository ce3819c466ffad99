"""Ground-truth problem instances, noisy feedback, and the regret oracle.

The four experiment settings mirror the desk-scale simulations: a box action
set with one linear constraint ("linear"), a ball action set with a ball
target ("convex-ball"), a random finite star set with a box target
("convex-box-star"), and the coordinate-direction star set with one linear
constraint ("finite-star"). Instances are immutable after construction; RNG
streams are derived per (master_seed, trial, stream) by the harness.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ActionSet,
    Box,
    ConstraintTarget,
    ConvexBall,
    ConvexBox,
    FiniteStarConvex,
    HalfSpace,
    UnitBall,
    box_contained,
    direction_grid,
    grid_max_scalings,
    inner_radius,
    pessimistic_scalings,
)

SETTINGS = ("linear", "convex-ball", "convex-box-star", "finite-star")

# Rejection sampling almost never rejects (theta = 0 has measure zero); the
# cap only guards against a degenerate configuration looping forever.
_MAX_RESAMPLES = 1000

SAFETY_TOL = 1e-9


class EnvironmentError_(ValueError):
    """Invalid instance configuration or unknown setting name."""


@dataclass(eq=False)
class ProblemInstance:
    """One ground-truth bandit instance plus its grid-restricted optimum.

    matrix holds the constraint rows (shape (n, d); n = 1 for the scalar
    half-space setting). s_a / s_theta are the norm bounds given to the
    learner, not the realized norms.
    """

    theta: np.ndarray
    matrix: np.ndarray
    target: ConstraintTarget
    action_set: ActionSet
    noise_scale: float
    s_a: float
    s_theta: float
    grid: np.ndarray = field(init=False)
    alpha_x: np.ndarray = field(init=False)
    feasible_scalings: np.ndarray = field(init=False)
    optimal_index: int = field(init=False)
    optimal_action: np.ndarray = field(init=False)
    optimal_value: float = field(init=False)
    planar_grid_size: int = 720
    sphere_grid_size: int = 2048

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=float)
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        d = self.theta.size
        if self.matrix.shape[1] != d:
            raise EnvironmentError_(f"constraint matrix is {self.matrix.shape}, expected (n, {d})")
        if self.matrix.shape[0] != self.target.rows:
            raise EnvironmentError_("constraint matrix rows must match the target's rows")
        if self.noise_scale < 0:
            raise EnvironmentError_("noise scale must be >= 0")
        row_norms = np.linalg.norm(self.matrix, axis=1)
        if np.any(row_norms > self.s_a + 1e-9):
            raise EnvironmentError_("constraint row norm exceeds the stated bound S_a")
        if np.linalg.norm(self.theta) > self.s_theta + 1e-9:
            raise EnvironmentError_("reward vector norm exceeds the stated bound S_theta")
        if self.nu > 1.0 + 1e-12:
            raise EnvironmentError_(f"nu = {self.nu:.4f} > 1: the constraint is vacuous")
        self.grid = direction_grid(self.action_set, self.planar_grid_size, self.sphere_grid_size)
        self.alpha_x = grid_max_scalings(self.action_set, self.grid)
        true_scalings = pessimistic_scalings(self.target, self.grid @ self.matrix.T, np.zeros(len(self.grid)))
        self.feasible_scalings = np.minimum(self.alpha_x, true_scalings)
        values = self.feasible_scalings * (self.grid @ self.theta)
        self.optimal_index = int(np.argmax(values))
        self.optimal_value = float(values[self.optimal_index])
        self.optimal_action = self.feasible_scalings[self.optimal_index] * self.grid[self.optimal_index]
        if not self.optimal_value > 0.0:
            raise EnvironmentError_("instance has no grid direction with positive optimal reward")

    @property
    def dim(self) -> int:
        return self.theta.size

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def s_bound(self) -> float:
        return max(self.s_a, self.s_theta)

    @property
    def nu(self) -> float:
        """b/S_a for the scalar constraint, r/(sqrt(n)*S_a) for linked targets."""
        if isinstance(self.target, HalfSpace):
            return self.target.limit / self.s_a
        return inner_radius(self.target) / (np.sqrt(self.rows) * self.s_a)

    def reward_gap(self) -> float:
        """Smallest reward deficit of any feasible grid action off the optimal ray.

        The origin counts as a wrong direction, so the gap is at most the
        optimal value itself.
        """
        values = self.feasible_scalings * (self.grid @ self.theta)
        wrong = np.delete(values, self.optimal_index)
        best_wrong = max(0.0, float(wrong.max())) if wrong.size else 0.0
        return self.optimal_value - best_wrong


def feedback(inst: ProblemInstance, x: np.ndarray, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Noisy reward and constraint observations: y = theta.x + eps, z = Ax + eta."""
    x = np.asarray(x, dtype=float)
    y = float(inst.theta @ x) + inst.noise_scale * float(rng.standard_normal())
    z = inst.matrix @ x + inst.noise_scale * rng.standard_normal(inst.rows)
    return y, z


def is_safe(inst: ProblemInstance, x: np.ndarray, tol: float = SAFETY_TOL) -> bool:
    """Exact constraint check with boundary-inclusive tolerance."""
    return box_contained(inst.target, inst.matrix @ np.asarray(x, dtype=float), 0.0, tol)


def optimal_action(inst: ProblemInstance) -> tuple[np.ndarray, float]:
    """Grid-restricted constrained optimum (cached at construction)."""
    return inst.optimal_action.copy(), inst.optimal_value


def sample_instance(
    setting: str,
    rng: np.random.Generator,
    *,
    d: int = 2,
    n: int = 2,
    noise_scale: float = 0.1,
    limit: float | None = None,
    s_bound: float | None = None,
    planar_grid_size: int = 720,
    sphere_grid_size: int = 2048,
    star_rays: int = 10,
) -> ProblemInstance:
    """Draw one instance of a named experiment setting.

    linear: X = box of half-width 1/sqrt(d) (unit-norm members), one linear
        constraint a.x <= b with b ~ U[0.25, 1] and a, theta ~ U(B_inf);
        the learner is told S_a = S_theta = sqrt(d).
    convex-ball: X = unit ball, target = b*B with b ~ U[0.25, 1], constraint
        rows and theta ~ U(B_inf).
    convex-box-star: X = `star_rays` uniform unit rays with max scaling 1,
        target = b*B_inf, parameters as in convex-ball.
    finite-star: coordinate directions with max scaling 1, theta = a = e1,
        b = 0.5 and stated norm bound S = 2 (both overridable, e.g. b = 0.9,
        S = 1.5 for the gap-dependent experiments). Deterministic.

    Instances with nonpositive optimal reward are rejected and resampled.
    """
    if setting not in SETTINGS:
        raise EnvironmentError_(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    common = dict(
        noise_scale=noise_scale,
        planar_grid_size=planar_grid_size,
        sphere_grid_size=sphere_grid_size,
    )
    for _ in range(_MAX_RESAMPLES):
        try:
            if setting == "linear":
                b = float(rng.uniform(0.25, 1.0)) if limit is None else float(limit)
                a = rng.uniform(-1.0, 1.0, size=d)
                theta = rng.uniform(-1.0, 1.0, size=d)
                s = float(np.sqrt(d)) if s_bound is None else float(s_bound)
                inst = ProblemInstance(
                    theta=theta,
                    matrix=a[None, :],
                    target=HalfSpace(b),
                    action_set=Box(np.full(d, 1.0 / np.sqrt(d))),
                    s_a=s,
                    s_theta=s,
                    **common,
                )
            elif setting == "convex-ball":
                b = float(rng.uniform(0.25, 1.0)) if limit is None else float(limit)
                mat = rng.uniform(-1.0, 1.0, size=(n, d))
                theta = rng.uniform(-1.0, 1.0, size=d)
                s = float(np.sqrt(d)) if s_bound is None else float(s_bound)
                inst = ProblemInstance(
                    theta=theta,
                    matrix=mat,
                    target=ConvexBall(b, rows=n),
                    action_set=UnitBall(d),
                    s_a=s,
                    s_theta=s,
                    **common,
                )
            elif setting == "convex-box-star":
                b = float(rng.uniform(0.25, 1.0)) if limit is None else float(limit)
                mat = rng.uniform(-1.0, 1.0, size=(n, d))
                theta = rng.uniform(-1.0, 1.0, size=d)
                rays = rng.standard_normal((star_rays, d))
                rays /= np.linalg.norm(rays, axis=1, keepdims=True)
                s = float(np.sqrt(d)) if s_bound is None else float(s_bound)
                inst = ProblemInstance(
                    theta=theta,
                    matrix=mat,
                    target=ConvexBox(b, rows=n),
                    action_set=FiniteStarConvex(rays, np.ones(star_rays)),
                    s_a=s,
                    s_theta=s,
                    **common,
                )
            else:  # finite-star
                b = 0.5 if limit is None else float(limit)
                s = 2.0 if s_bound is None else float(s_bound)
                e1 = np.zeros(d)
                e1[0] = 1.0
                inst = ProblemInstance(
                    theta=e1.copy(),
                    matrix=e1[None, :].copy(),
                    target=HalfSpace(b),
                    action_set=FiniteStarConvex(np.eye(d), np.ones(d)),
                    s_a=s,
                    s_theta=s,
                    **common,
                )
        except EnvironmentError_:
            continue
        return inst
    raise EnvironmentError_(f"could not sample a valid {setting!r} instance in {_MAX_RESAMPLES} tries")


def trial_rng(master_seed: int, trial_index: int, stream: int) -> np.random.Generator:
    """Independent per-(trial, stream) generator via seed-sequence splitting."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial_index, stream)))

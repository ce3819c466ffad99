"""Decision rules for the safe linear bandit.

All continuous argmaxes are grid-restricted: each policy scores every ray of
the instance's direction grid and plays a scaling of the best one, so the
guarantees hold exactly for the effective (grid) action set. Ties break by
lowest grid index everywhere (np.argmax returns the first maximizer).

Policies never read the ground-truth parameters; they consume only the
instance's public geometry (grid, max scalings, target, norm bounds).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import ProblemInstance
from .estimation import ConfidenceParams, RlsEstimator, confidence_radius_phased, confidence_radius_rls
from .geometry import (
    FiniteStarConvex,
    HalfSpace,
    inner_radius,
    optimistic_scalings,
    pessimistic_scalings,
)

ALGORITHMS = ("roful", "croful", "oplb", "lts", "pd-roful", "pd-oplb", "safe-pe")


class PolicyError(RuntimeError):
    """Invalid policy configuration or an unusable internal state."""


class EliminationError(PolicyError):
    """Phased elimination discarded every direction (confidence event broke)."""


@dataclass
class ActionChoice:
    """One round's decision plus the diagnostics the harness logs."""

    x: np.ndarray
    dir_index: int  # -1 for the zero action
    gamma: float  # nan for policies without a scaling step
    width: float  # beta_t * ||x_t||_{V_t^-1} at selection time
    opt_value: float  # the policy's optimism statistic (nan if none)
    t: int


@dataclass
class RoundState:
    """Grid snapshot used by a selection: estimates, widths, radius."""

    t: int
    beta: float
    th: np.ndarray  # (m,) grid reward estimates u.theta_hat
    c_hat: np.ndarray  # (m, n) grid constraint estimates (A_hat u)
    w_raw: np.ndarray  # (m,) ||u||_{V^-1}
    widths: np.ndarray  # (m,) beta * w_raw


@dataclass
class EllipticSegment:
    """Sum of squared weighted norms against one maintained Gram sequence."""

    dim: int
    length: int = 0
    total: float = 0.0


def adaptive_kappa(optimistic_scale: float, theta_dot_x: float, conf_width: float) -> float:
    """Adaptive exploration multiplier kappa_t(x).

    kappa = (alpha - 1) * theta_hat.x / (beta*||x||) + alpha with alpha the
    optimistic scale of x's ray. The beta*||x|| = 0 case is a removable
    singularity (the kappa term then contributes nothing) and returns alpha.
    """
    if conf_width < 0:
        raise PolicyError("confidence width must be nonnegative")
    if conf_width == 0.0:
        return optimistic_scale
    return (optimistic_scale - 1.0) * theta_dot_x / conf_width + optimistic_scale


def kappa_form_values(
    rs: RoundState,
    alpha_x: np.ndarray,
    target,
    nu: float,
    cap: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores of the boundary points of Y^p union (nu*B intersect Y^o).

    Returns (values, s_phat, s_o): per ray, the UCB value theta_hat.x +
    kappa_t(x)*beta*||x|| at x = s_phat*u (kappa capped when `cap` is given),
    the boundary scaling s_phat, and the optimistic boundary scaling s_o.
    """
    s_o = np.minimum(alpha_x, optimistic_scalings(target, rs.c_hat, rs.widths))
    s_p = np.minimum(alpha_x, pessimistic_scalings(target, rs.c_hat, rs.widths))
    s_phat = np.maximum(s_p, np.minimum(nu, s_o))
    alpha_t = s_o / s_phat
    th_x = s_phat * rs.th
    width_x = s_phat * rs.widths
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.where(width_x > 0.0, (alpha_t - 1.0) * th_x / width_x + alpha_t, alpha_t)
    if cap is not None:
        kappa = np.minimum(kappa, cap)
    return th_x + kappa * width_x, s_phat, s_o


def kappa_form_index(rs: RoundState, alpha_x: np.ndarray, target, nu: float) -> int:
    """Argmax grid index of the uncapped kappa-form selector."""
    values, _, _ = kappa_form_values(rs, alpha_x, target, nu)
    return int(np.argmax(values))


def default_kappa(inst: ProblemInstance) -> float:
    """Fixed exploration multiplier: 1 + 2*S_theta/b, or 1 + 2*sqrt(n)*S_theta/r."""
    if isinstance(inst.target, HalfSpace):
        return 1.0 + 2.0 * inst.s_theta / inst.target.limit
    return 1.0 + 2.0 * math.sqrt(inst.rows) * inst.s_theta / inner_radius(inst.target)


class _GridPolicy:
    """Shared state for the streaming-confidence policies."""

    has_gamma = False

    def __init__(self, inst: ProblemInstance, params: ConfidenceParams) -> None:
        if params.streams != inst.rows + 1:
            raise PolicyError(f"params.streams must be rows+1 = {inst.rows + 1}, got {params.streams}")
        self.inst = inst
        self.params = params
        self.grid = inst.grid
        self.alpha_x = inst.alpha_x
        self.target = inst.target
        self.nu = inst.nu
        self.est = RlsEstimator(inst.dim, params.lam, inst.rows + 1)
        self.last_round: RoundState | None = None
        self.elliptic_segments = [EllipticSegment(dim=inst.dim)]
        self._pending_norm2 = 0.0

    def round_state(self) -> RoundState:
        t = self.est.count + 1
        beta = confidence_radius_rls(self.params, t)
        theta_hat = self.est.estimate(0)
        a_hat = self.est.estimates()[1:]
        w_raw = self.est.weighted_norms(self.grid)
        rs = RoundState(
            t=t,
            beta=beta,
            th=self.grid @ theta_hat,
            c_hat=self.grid @ a_hat.T,
            w_raw=w_raw,
            widths=beta * w_raw,
        )
        self.last_round = rs
        return rs

    def update(self, x: np.ndarray, y: float, z: np.ndarray) -> None:
        """Route the reward to stream 0 and constraint row i to stream i+1."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        seg = self.elliptic_segments[-1]
        seg.total += self._pending_norm2
        seg.length += 1
        self._pending_norm2 = 0.0
        self.est.update(x, np.concatenate([[y], z]))


class RofulPolicy(_GridPolicy):
    """Optimistic direction choice, pessimistic scaling.

    Picks the grid ray maximizing the UCB over the optimistic set's boundary,
    then plays the largest verifiably-safe fraction of that point (floored by
    the always-safe norm nu).
    """

    has_gamma = True

    def select(self) -> ActionChoice:
        rs = self.round_state()
        s_o = np.minimum(self.alpha_x, optimistic_scalings(self.target, rs.c_hat, rs.widths))
        ucb = s_o * (rs.th + rs.widths)
        i = int(np.argmax(ucb))
        so_i = float(s_o[i])
        pess = pessimistic_scalings(self.target, rs.c_hat[i : i + 1], rs.widths[i : i + 1])[0]
        mu = min(1.0, pess / so_i)
        b_tilde = min(self.nu / so_i, 1.0)
        gamma = max(b_tilde, mu)
        scale = gamma * so_i
        self._pending_norm2 = (scale * rs.w_raw[i]) ** 2
        return ActionChoice(
            x=scale * self.grid[i],
            dir_index=i,
            gamma=gamma,
            width=float(scale * rs.widths[i]),
            opt_value=float(ucb[i]),
            t=rs.t,
        )


class CRofulPolicy(_GridPolicy):
    """Capped adaptive-kappa selection over the extended pessimistic boundary."""

    has_gamma = True

    def __init__(self, inst: ProblemInstance, params: ConfidenceParams, kappa_cap: float | None = None) -> None:
        super().__init__(inst, params)
        self.kappa_cap = default_kappa(inst) if kappa_cap is None else float(kappa_cap)

    def select(self) -> ActionChoice:
        rs = self.round_state()
        values, s_phat, s_o = kappa_form_values(rs, self.alpha_x, self.target, self.nu, cap=self.kappa_cap)
        i = int(np.argmax(values))
        scale = float(s_phat[i])
        self._pending_norm2 = (scale * rs.w_raw[i]) ** 2
        return ActionChoice(
            x=scale * self.grid[i],
            dir_index=i,
            gamma=float(s_phat[i] / s_o[i]),
            width=float(scale * rs.widths[i]),
            opt_value=float(values[i]),
            t=rs.t,
        )


class OplbPolicy(_GridPolicy):
    """Fixed-kappa UCB over the pessimistic boundary, zero action allowed."""

    def __init__(self, inst: ProblemInstance, params: ConfidenceParams, kappa: float | None = None) -> None:
        super().__init__(inst, params)
        self.kappa = default_kappa(inst) if kappa is None else float(kappa)
        if self.kappa < 1.0:
            raise PolicyError(f"kappa must be >= 1, got {self.kappa}")

    def select(self) -> ActionChoice:
        rs = self.round_state()
        s_p = np.minimum(self.alpha_x, pessimistic_scalings(self.target, rs.c_hat, rs.widths))
        values = s_p * (rs.th + self.kappa * rs.widths)
        i = int(np.argmax(values))
        if values[i] < 0.0:
            # every boundary point scores below the (safe) zero action
            self._pending_norm2 = 0.0
            return ActionChoice(
                x=np.zeros(self.inst.dim),
                dir_index=-1,
                gamma=math.nan,
                width=0.0,
                opt_value=0.0,
                t=rs.t,
            )
        scale = float(s_p[i])
        self._pending_norm2 = (scale * rs.w_raw[i]) ** 2
        return ActionChoice(
            x=scale * self.grid[i],
            dir_index=i,
            gamma=math.nan,
            width=float(scale * rs.widths[i]),
            opt_value=float(values[i]),
            t=rs.t,
        )


class LtsPolicy(_GridPolicy):
    """Thompson-sampling baseline: perturbed estimate, pessimistic boundary.

    Samples theta_tilde = theta_hat + kappa*beta*V^{-1/2} g with g standard
    normal; V^{-1/2} comes from a fresh symmetric eigendecomposition each
    round (correctness over speed for a baseline).
    """

    def __init__(
        self,
        inst: ProblemInstance,
        params: ConfidenceParams,
        rng: np.random.Generator,
        kappa: float | None = None,
    ) -> None:
        super().__init__(inst, params)
        self.kappa = default_kappa(inst) if kappa is None else float(kappa)
        self.rng = rng

    def select(self) -> ActionChoice:
        rs = self.round_state()
        evals, evecs = np.linalg.eigh(self.est.gram)
        root_inv = (evecs / np.sqrt(evals)) @ evecs.T
        g = self.rng.standard_normal(self.inst.dim)
        theta_tilde = self.est.estimate(0) + self.kappa * rs.beta * (root_inv @ g)
        s_p = np.minimum(self.alpha_x, pessimistic_scalings(self.target, rs.c_hat, rs.widths))
        values = s_p * (self.grid @ theta_tilde)
        i = int(np.argmax(values))
        scale = float(s_p[i])
        self._pending_norm2 = (scale * rs.w_raw[i]) ** 2
        return ActionChoice(
            x=scale * self.grid[i],
            dir_index=i,
            gamma=math.nan,
            width=float(scale * rs.widths[i]),
            opt_value=math.nan,
            t=rs.t,
        )


@dataclass
class CommitState:
    """Scalar view of the committed direction's constraint coefficient."""

    phi_hat: float
    v_scalar: float
    beta_tilde: float
    xi: float


class PdPolicy:
    """Gap-dependent wrapper: explore with a base policy, then commit.

    Explores with ROFUL or OPLB until one grid direction has been played more
    than the threshold B implied by the known reward gap, then plays only that
    direction with a one-dimensional estimate of its constraint coefficient.
    Requires the horizon (the threshold uses the final radius beta_T).
    """

    has_gamma = False

    def __init__(
        self,
        inst: ProblemInstance,
        params: ConfidenceParams,
        horizon: int,
        base: str = "roful",
        gap: float | None = None,
        kappa: float | None = None,
    ) -> None:
        if not isinstance(inst.target, HalfSpace):
            raise PolicyError("the gap-dependent wrapper supports the scalar half-space constraint only")
        gap = inst.reward_gap() if gap is None else float(gap)
        if not gap > 0.0:
            raise PolicyError(f"reward gap must be > 0, got {gap}")
        if base == "roful":
            self.base: _GridPolicy = RofulPolicy(inst, params)
        elif base == "oplb":
            self.base = OplbPolicy(inst, params, kappa=kappa)
        else:
            raise PolicyError(f"unknown base policy {base!r} (expected 'roful' or 'oplb')")
        self.inst = inst
        self.params = params
        self.horizon = int(horizon)
        self.gap = gap
        self.limit = inst.target.limit
        s, b, d = params.s_bound, self.limit, inst.dim
        beta_T = confidence_radius_rls(params, self.horizon)
        log_term = math.log(1.0 + self.horizon / (params.lam * d))
        if base == "roful":
            self.b_bar = 32.0 * s**2 * beta_T**2 * d / (b**2 * gap**2) * log_term
        else:
            self.b_bar = 8.0 * d * (1.0 + 2.0 * s / b) ** 2 * beta_T**2 / gap**2 * log_term
        self.counts = np.zeros(len(inst.grid), dtype=np.int64)
        self.committed = False
        self.committed_index: int | None = None
        self.commit_round: int | None = None
        self._scalar_params = ConfidenceParams(
            rho=params.rho, delta=params.delta, s_bound=params.s_bound, streams=2, dim=1, lam=params.lam
        )
        # commit-phase scalar state: V = lam + sum xi^2, responses sum xi*z
        self._v_scalar = params.lam
        self._z_sum = 0.0
        self._commit_obs = 0
        self._u_star: np.ndarray | None = None
        self._alpha_max = 0.0
        self._rounds = 0
        self._last_choice: ActionChoice | None = None
        self._last_xi = 0.0
        self.commit_state: CommitState | None = None
        self._commit_segment: EllipticSegment | None = None

    @property
    def last_round(self) -> RoundState | None:
        return None if self.committed else self.base.last_round

    @property
    def elliptic_segments(self) -> list[EllipticSegment]:
        segs = list(self.base.elliptic_segments)
        if self._commit_segment is not None:
            segs.append(self._commit_segment)
        return segs

    def select(self) -> ActionChoice:
        if not self.committed:
            choice = self.base.select()
            self._last_choice = choice
            self.commit_state = None
            return choice
        assert self._u_star is not None
        beta_tilde = confidence_radius_rls(self._scalar_params, self._commit_obs + 1)
        v_scalar = self._v_scalar
        phi_hat = self._z_sum / v_scalar
        root_v = math.sqrt(v_scalar)
        coef = phi_hat + beta_tilde / root_v
        xi = self._alpha_max if coef <= 0.0 else min(self._alpha_max, self.limit / coef)
        self._last_xi = xi
        self.commit_state = CommitState(phi_hat=phi_hat, v_scalar=v_scalar, beta_tilde=beta_tilde, xi=xi)
        choice = ActionChoice(
            x=xi * self._u_star,
            dir_index=int(self.committed_index),
            gamma=math.nan,
            width=beta_tilde * xi / root_v,
            opt_value=math.nan,
            t=self._rounds + 1,
        )
        self._last_choice = choice
        return choice

    def update(self, x: np.ndarray, y: float, z: np.ndarray) -> None:
        self._rounds += 1
        if self.committed:
            seg = self._commit_segment
            assert seg is not None
            xi = self._last_xi
            seg.total += xi * xi / self._v_scalar
            seg.length += 1
            self._v_scalar += xi * xi
            self._z_sum += xi * float(z[0] if isinstance(z, np.ndarray) else np.atleast_1d(z)[0])
            self._commit_obs += 1
            return
        self.base.update(x, y, z)
        choice = self._last_choice
        if choice is not None and choice.dir_index >= 0:
            self.counts[choice.dir_index] += 1
            if self.counts[choice.dir_index] > self.b_bar:
                self._commit(choice.dir_index)

    def _commit(self, index: int) -> None:
        self.committed = True
        self.committed_index = index
        self.commit_round = self._rounds + 1
        self._u_star = self.grid_direction(index)
        self._alpha_max = float(self.inst.alpha_x[index])
        self._commit_segment = EllipticSegment(dim=1)

    def grid_direction(self, index: int) -> np.ndarray:
        return self.inst.grid[index].copy()


@dataclass
class PhaseRecord:
    """End-of-phase snapshot for monitoring: estimates, widths, survivors."""

    phase: int
    theta_hat: np.ndarray
    a_hat: np.ndarray  # (n, d)
    u_norms: np.ndarray  # ||u_i||_{Vbar_j^-1}
    active_before: np.ndarray
    active_after: np.ndarray
    zeta_after: np.ndarray
    elim_lhs: np.ndarray
    elim_rhs: np.ndarray


class SafePePolicy:
    """Phased elimination over a finite star-convex action set.

    Phases double in length. Within a phase, plays the widest retained
    scaled direction under the fresh per-phase Gram. At phase end, estimates
    from that phase's data alone, eliminates directions whose estimated
    reward falls short of the best pessimistic point by more than the
    combined width slack, and grows each survivor's verifiably-safe scaling.
    """

    has_gamma = False
    last_round = None

    def __init__(self, inst: ProblemInstance, params: ConfidenceParams, horizon: int) -> None:
        if not isinstance(inst.action_set, FiniteStarConvex):
            raise PolicyError("phased elimination requires a finite star-convex action set")
        self.inst = inst
        self.params = params
        self.horizon = int(horizon)
        self.k = inst.action_set.n_rays
        self.dirs = inst.action_set.directions
        self.alphas = inst.action_set.max_scalings
        self.n_rows = inst.rows
        self.phases = max(1, math.ceil(math.log2(self.horizon))) if self.horizon > 1 else 1
        self.beta = confidence_radius_phased(params, self.k, self.phases, rows=self.n_rows)
        # the scalar limit, or the inner radius standing in for it under
        # linked convex targets
        self.denom = inst.target.limit if isinstance(inst.target, HalfSpace) else inner_radius(inst.target)
        if isinstance(inst.target, HalfSpace):
            zeta0 = self.denom / params.s_bound
        else:
            zeta0 = self.denom / (math.sqrt(self.n_rows) * params.s_bound)
        self.zeta = np.minimum(np.full(self.k, zeta0), self.alphas)
        self.active = np.ones(self.k, dtype=bool)
        self.phase = 1
        self.phase_len = 1
        self.rounds_in_phase = 0
        self.prev_u_norms = np.full(self.k, 1.0 / math.sqrt(params.lam))
        self.est = RlsEstimator(inst.dim, params.lam, self.n_rows + 1)
        self.elliptic_segments = [EllipticSegment(dim=inst.dim)]
        self.phase_log: list[PhaseRecord] = []
        self._pending_norm2 = 0.0
        self._rounds = 0

    def select(self) -> ActionChoice:
        wn = self.est.weighted_norms(self.dirs)
        widths = np.where(self.active, self.zeta * wn, -np.inf)
        i = int(np.argmax(widths))
        if not self.active[i]:
            raise EliminationError("no active directions left to play")
        scale = float(self.zeta[i])
        self._pending_norm2 = (scale * wn[i]) ** 2
        return ActionChoice(
            x=scale * self.dirs[i],
            dir_index=i,
            gamma=math.nan,
            width=float(self.beta * scale * wn[i]),
            opt_value=math.nan,
            t=self._rounds + 1,
        )

    def update(self, x: np.ndarray, y: float, z: np.ndarray) -> None:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        seg = self.elliptic_segments[-1]
        seg.total += self._pending_norm2
        seg.length += 1
        self._pending_norm2 = 0.0
        self.est.update(x, np.concatenate([[y], z]))
        self.rounds_in_phase += 1
        self._rounds += 1
        # the final phase absorbs the tail of the horizon
        if self.rounds_in_phase >= self.phase_len and self.phase < self.phases:
            self._end_phase()

    def _end_phase(self) -> None:
        theta_hat = self.est.estimate(0)
        a_hat = self.est.estimates()[1:]
        u_norms = self.est.weighted_norms(self.dirs)
        th = self.dirs @ theta_hat
        values = self.zeta * th
        penalized = np.where(self.active, values - self.beta * self.zeta * u_norms, -np.inf)
        m = int(np.argmax(penalized))
        lhs = values[m] - values
        rhs = (
            self.beta * self.zeta[m] * u_norms[m]
            + self.beta * self.zeta * u_norms
            + 2.0 * self.params.s_bound * self.beta * self.zeta * self.prev_u_norms / self.denom
        )
        retained = self.active & (lhs <= rhs)
        if not retained.any():
            raise EliminationError(f"phase {self.phase} eliminated every direction")
        if isinstance(self.inst.target, HalfSpace):
            coef = self.dirs @ a_hat[0] + u_norms * self.beta
            with np.errstate(divide="ignore"):
                mu = np.where(coef > 0.0, np.minimum(self.alphas, self.inst.target.limit / coef), self.alphas)
        else:
            safe = pessimistic_scalings(self.inst.target, self.dirs @ a_hat.T, self.beta * u_norms)
            mu = np.minimum(self.alphas, safe)
        new_zeta = np.where(retained, np.maximum(self.zeta, mu), self.zeta)
        self.phase_log.append(
            PhaseRecord(
                phase=self.phase,
                theta_hat=theta_hat.copy(),
                a_hat=a_hat.copy(),
                u_norms=u_norms,
                active_before=self.active.copy(),
                active_after=retained.copy(),
                zeta_after=new_zeta.copy(),
                elim_lhs=lhs,
                elim_rhs=rhs,
            )
        )
        self.active = retained
        self.zeta = new_zeta
        self.prev_u_norms = u_norms
        self.est = RlsEstimator(self.inst.dim, self.params.lam, self.n_rows + 1)
        self.phase += 1
        self.phase_len = 2 ** (self.phase - 1)
        self.rounds_in_phase = 0
        self.elliptic_segments.append(EllipticSegment(dim=self.inst.dim))


def make_policy(
    name: str,
    inst: ProblemInstance,
    params: ConfidenceParams,
    horizon: int,
    rng: np.random.Generator | None = None,
    kappa: float | None = None,
    pd_gap: float | None = None,
):
    """Instantiate a policy by its CLI name."""
    if name == "roful":
        return RofulPolicy(inst, params)
    if name == "croful":
        return CRofulPolicy(inst, params, kappa_cap=kappa)
    if name == "oplb":
        return OplbPolicy(inst, params, kappa=kappa)
    if name == "lts":
        if rng is None:
            raise PolicyError("the sampling baseline needs an RNG stream")
        return LtsPolicy(inst, params, rng, kappa=kappa)
    if name == "pd-roful":
        return PdPolicy(inst, params, horizon, base="roful", gap=pd_gap)
    if name == "pd-oplb":
        return PdPolicy(inst, params, horizon, base="oplb", gap=pd_gap, kappa=kappa)
    if name == "safe-pe":
        return SafePePolicy(inst, params, horizon)
    raise PolicyError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")

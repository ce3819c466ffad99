"""Online regularized least squares and self-normalized confidence radii.

One estimator instance carries the shared Gram matrix V_t = lam*I + sum x x^T
plus one response accumulator per observation stream (reward stream first,
then one stream per constraint row), so reward and constraint estimates stay
consistent with each other round by round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Rank-one inverse updates drift; an exact re-inversion this often keeps
# ||V V^-1 - I||_max below 1e-8 for any bounded update sequence.
REINVERT_EVERY = 1000


class InputValidationError(ValueError):
    """Malformed input to an estimation operation."""


@dataclass(frozen=True)
class ConfidenceParams:
    """Inputs of the confidence radii.

    rho: subgaussian noise scale.
    delta: total failure probability, split evenly across streams.
    s_bound: known bound on the parameter norms, S = max(S_a, S_theta).
    streams: number of confidence streams (2 for a scalar constraint,
        n + 1 when the constraint output has n rows).
    dim: ambient dimension d.
    lam: ridge regularizer (>= 1).
    """

    rho: float
    delta: float
    s_bound: float
    streams: int = 2
    dim: int = 2
    lam: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise InputValidationError(f"delta must be in (0,1), got {self.delta}")
        if self.rho < 0.0:
            raise InputValidationError(f"rho must be >= 0, got {self.rho}")
        if self.s_bound < 0.0:
            raise InputValidationError(f"s_bound must be >= 0, got {self.s_bound}")
        if self.streams < 2:
            raise InputValidationError(f"streams must be >= 2, got {self.streams}")
        if self.dim < 1:
            raise InputValidationError(f"dim must be >= 1, got {self.dim}")
        if self.lam < 1.0:
            raise InputValidationError(f"lam must be >= 1, got {self.lam}")


def confidence_radius_rls(params: ConfidenceParams, t: int) -> float:
    """Streaming radius beta_t = rho*sqrt(d*log((1+(t-1)/lam)/(delta/streams))) + sqrt(lam)*S.

    Nondecreasing in t and in d. The delta split is delta/2 for the scalar
    constraint setting and delta/(n+1) with n constraint rows.
    """
    if t < 1:
        raise InputValidationError(f"round index must be >= 1, got {t}")
    log_arg = (1.0 + (t - 1) / params.lam) / (params.delta / params.streams)
    return params.rho * math.sqrt(params.dim * math.log(log_arg)) + math.sqrt(params.lam) * params.s_bound


def confidence_radius_phased(params: ConfidenceParams, k: int, phases: int, rows: int = 1) -> float:
    """Phased radius beta = rho*sqrt(2*log(4*rows*k*phases/delta)) + sqrt(lam)*S.

    Applies to per-phase estimates over k fixed directions and `phases`
    phases; independent of the ambient dimension. rows > 1 covers the
    multi-row constraint streams.
    """
    if k < 1 or phases < 1:
        raise InputValidationError(f"k and phases must be >= 1, got k={k}, phases={phases}")
    if rows < 1:
        raise InputValidationError(f"rows must be >= 1, got {rows}")
    count = 4.0 * rows * k * phases
    return params.rho * math.sqrt(2.0 * math.log(count / params.delta)) + math.sqrt(params.lam) * params.s_bound


class RlsEstimator:
    """Shared-Gram regularized least-squares state.

    Maintains gram = lam*I + sum x x^T, its inverse via the rank-one
    inverse-update identity (exact re-inversion every REINVERT_EVERY
    updates), and per-stream response sums. The per-stream estimate is
    gram_inverse @ response_sums[s].

    Single-writer: no internal locking; concurrent reads of a frozen
    instance are safe.
    """

    def __init__(self, dim: int, lam: float = 1.0, n_streams: int = 2) -> None:
        if dim < 1:
            raise InputValidationError(f"dim must be >= 1, got {dim}")
        if lam < 1.0:
            raise InputValidationError(f"lam must be >= 1, got {lam}")
        if n_streams < 1:
            raise InputValidationError(f"n_streams must be >= 1, got {n_streams}")
        self.dim = int(dim)
        self.lam = float(lam)
        self.n_streams = int(n_streams)
        self.gram = self.lam * np.eye(self.dim)
        self.gram_inverse = np.eye(self.dim) / self.lam
        self.response_sums = np.zeros((self.n_streams, self.dim))
        self.count = 0
        self._since_reinvert = 0

    def update(self, x: np.ndarray, responses) -> "RlsEstimator":
        """Absorb one round: gram += x x^T, response_sums[s] += responses[s]*x."""
        x = np.asarray(x, dtype=float)
        responses = np.atleast_1d(np.asarray(responses, dtype=float))
        if x.shape != (self.dim,):
            raise InputValidationError(f"action has shape {x.shape}, expected ({self.dim},)")
        if responses.shape != (self.n_streams,):
            raise InputValidationError(
                f"got {responses.shape[0] if responses.ndim == 1 else responses.shape} responses, "
                f"expected one per stream ({self.n_streams})"
            )
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(responses)):
            raise InputValidationError("non-finite action or response")

        self.gram += np.outer(x, x)
        vx = self.gram_inverse @ x
        self.gram_inverse -= np.outer(vx, vx) / (1.0 + x @ vx)
        self.response_sums += responses[:, None] * x[None, :]
        self.count += 1
        self._since_reinvert += 1
        if self._since_reinvert >= REINVERT_EVERY:
            self.reinvert()
        return self

    def reinvert(self) -> None:
        """Recompute gram_inverse exactly from gram (symmetrized)."""
        inv = np.linalg.inv(self.gram)
        self.gram_inverse = 0.5 * (inv + inv.T)
        self._since_reinvert = 0

    def estimate(self, stream: int = 0) -> np.ndarray:
        """Least-squares estimate for one stream: gram_inverse @ response_sums[stream]."""
        return self.gram_inverse @ self.response_sums[stream]

    def estimates(self) -> np.ndarray:
        """(n_streams, dim) stack of all stream estimates."""
        return self.response_sums @ self.gram_inverse

    def weighted_norm(self, x: np.ndarray) -> float:
        """||x||_{V^-1} = sqrt(x^T gram_inverse x); zero iff x = 0."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InputValidationError(f"vector has shape {x.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(x)):
            raise InputValidationError("non-finite input vector")
        return math.sqrt(max(float(x @ self.gram_inverse @ x), 0.0))

    def weighted_norms(self, rows: np.ndarray) -> np.ndarray:
        """Row-wise ||u||_{V^-1} for a (m, dim) matrix of vectors."""
        rows = np.asarray(rows, dtype=float)
        sq = np.einsum("ij,jk,ik->i", rows, self.gram_inverse, rows)
        return np.sqrt(np.maximum(sq, 0.0))

    def copy(self) -> "RlsEstimator":
        dup = RlsEstimator(self.dim, self.lam, self.n_streams)
        dup.gram = self.gram.copy()
        dup.gram_inverse = self.gram_inverse.copy()
        dup.response_sums = self.response_sums.copy()
        dup.count = self.count
        dup._since_reinvert = self._since_reinvert
        return dup

"""Dense symmetric linear algebra shared by every agent.

All bandit state in this package reduces to sufficient statistics: a PSD
design matrix ``V = sum x x^T`` and a moment vector ``b = sum x * y``.  This
module owns those values and the handful of primitives computed from them
(rank-1 updates, regularized ridge solves, log-determinants, Mahalanobis
norms, L2-ball projection).

Determinant ratios are always evaluated on the regularized matrices
``V + lam*I`` and in log space: the raw statistics start at zero, where an
unregularized ratio is 0/0, and log space avoids overflow over long horizons.

Operations are pure: :class:`SufficientStats` is treated as an immutable
value and every update returns a fresh instance, so statistics can be shared
across buffers and shipped between processes without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class NumericalError(RuntimeError):
    """A factorization failed; the statistics are corrupt (non-PSD)."""


def _symmetrize(m: np.ndarray) -> np.ndarray:
    """Mirror the upper triangle so symmetry holds structurally, not by luck."""
    upper = np.triu(m)
    return upper + upper.T - np.diag(np.diag(m))


@dataclass(frozen=True)
class SufficientStats:
    """Design matrix ``V`` and moment vector ``b`` for one parameter block.

    ``v`` is dim x dim symmetric PSD, ``b`` is a dim vector.  Instances are
    immutable by convention; use the module functions or the arithmetic
    helpers below, all of which return new values.
    """

    v: np.ndarray
    b: np.ndarray

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @staticmethod
    def zeros(dim: int) -> "SufficientStats":
        return SufficientStats(np.zeros((dim, dim)), np.zeros(dim))

    @staticmethod
    def from_observations(x: np.ndarray, y: np.ndarray) -> "SufficientStats":
        """Build statistics from stacked rows ``x`` (n, dim) and rewards ``y`` (n,)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ContractViolation(
                f"{x.shape[0]} feature rows vs {y.shape[0]} rewards"
            )
        return SufficientStats(_symmetrize(x.T @ x), x.T @ y)

    def add(self, other: "SufficientStats") -> "SufficientStats":
        _check_same_dim(self, other)
        return SufficientStats(self.v + other.v, self.b + other.b)

    def subtract(self, other: "SufficientStats") -> "SufficientStats":
        _check_same_dim(self, other)
        return SufficientStats(self.v - other.v, self.b - other.b)

    def is_zero(self) -> bool:
        return not (self.v.any() or self.b.any())

    def allclose(self, other: "SufficientStats", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.v, other.v, atol=atol)
            and np.allclose(self.b, other.b, atol=atol)
        )


def _check_same_dim(a: SufficientStats, b: SufficientStats) -> None:
    if a.dim != b.dim:
        raise ContractViolation(f"dimension mismatch: {a.dim} vs {b.dim}")


def rank1_update(stats: SufficientStats, x: np.ndarray, y: float) -> SufficientStats:
    """Absorb one observation: ``V += x x^T``, ``b += x * y``.

    The outer product is exactly symmetric, so symmetry is preserved bitwise.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (stats.dim,):
        raise ContractViolation(
            f"observation has shape {x.shape}, expected ({stats.dim},)"
        )
    if not (np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ContractViolation("non-finite observation")
    return SufficientStats(stats.v + np.outer(x, x), stats.b + x * float(y))


def shift_diagonal(v: np.ndarray, lam: float) -> np.ndarray:
    """Copy of ``v`` with ``lam`` added to the diagonal (``V + lam*I``)."""
    m = np.array(v, dtype=float)
    m.flat[:: m.shape[0] + 1] += lam
    return m


def _regularized_cholesky(stats: SufficientStats, lam: float) -> np.ndarray:
    """Lower Cholesky factor of ``V + lam*I``; raises on non-PSD input."""
    if lam <= 0:
        raise ContractViolation(f"regularization must be positive, got {lam}")
    try:
        return np.linalg.cholesky(shift_diagonal(stats.v, lam))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"factorization of V + {lam}*I failed: {exc}") from exc


def ridge_estimate(stats: SufficientStats, lam: float) -> np.ndarray:
    """Solve ``(V + lam*I) theta = b`` through an SPD factorization."""
    if lam <= 0:
        raise ContractViolation(f"regularization must be positive, got {lam}")
    if stats.dim == 0:
        return np.zeros(0)
    try:
        factor = cho_factor(shift_diagonal(stats.v, lam), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"ridge factorization failed: {exc}") from exc
    return cho_solve(factor, stats.b)


def log_det(stats: SufficientStats, lam: float) -> float:
    """``log det(V + lam*I)`` via the Cholesky diagonal."""
    if stats.dim == 0:
        return 0.0
    chol = _regularized_cholesky(stats, lam)
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def log_det_ratio(
    numerator: SufficientStats, denominator: SufficientStats, lam: float
) -> float:
    """``log det(V_num + lam*I) - log det(V_den + lam*I)``.

    Nonnegative (up to roundoff) whenever the numerator dominates the
    denominator in the PSD order.
    """
    _check_same_dim(numerator, denominator)
    return log_det(numerator, lam) - log_det(denominator, lam)


def mahalanobis_norm(stats: SufficientStats, lam: float, x: np.ndarray) -> float:
    """``sqrt(x^T (V + lam*I)^{-1} x)``, the confidence width direction term."""
    x = np.asarray(x, dtype=float)
    if x.shape != (stats.dim,):
        raise ContractViolation(
            f"vector has shape {x.shape}, expected ({stats.dim},)"
        )
    if stats.dim == 0:
        return 0.0
    chol = _regularized_cholesky(stats, lam)
    z = solve_triangular(chol, x, lower=True)
    return float(np.sqrt(z @ z))


def project_ball(y: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of ``y`` onto the L2 ball of the given radius."""
    if radius <= 0:
        raise ContractViolation(f"ball radius must be positive, got {radius}")
    y = np.asarray(y, dtype=float)
    norm = float(np.linalg.norm(y))
    if norm <= radius:
        return y.copy()
    return y * (radius / norm)

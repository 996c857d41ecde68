"""Loss-function contract, analytic toy losses, and curvature estimators.

A loss exposes value/grad (batched variants have loop fallbacks; the toys
override them with vectorized forms so million-sample estimators stay fast)
and optionally an exact Hessian. Losses are pure functions of their inputs.

Curvature access for losses without exact Hessians goes through central
finite differences of the gradient: hvp() realizes H z, and the Hutchinson
estimators build trace and squared-Frobenius estimates on top of it.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from ..errors import NumericalError
from ..linalg import SymmetricMatrix, quadratic_form_batch
from ..measures import SeededStream

_FD_HESSIAN_DIM_LIMIT = 512


class LossFunction(ABC):
    """Nonnegative training loss with gradient access.

    SaddleToy is the one deliberate exception to nonnegativity: it is an
    analysis-only fixture for indefinite curvature and never enters training.
    """

    dim: int

    @abstractmethod
    def value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def grad(self, x: np.ndarray) -> np.ndarray: ...

    def exact_hessian(self, x: np.ndarray) -> Optional[SymmetricMatrix]:
        """Closed-form Hessian where available, else None."""
        return None

    def value_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.array([self.value(x) for x in xs])

    def grad_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.stack([self.grad(x) for x in xs])


class SaddleToy(LossFunction):
    """L(x1, x2) = (x1^2 - x2^2) / 2, constant indefinite Hessian diag(1, -1).

    Every point has zero Hessian trace, which is exactly why this fixture
    exists; it takes negative values and is exempt from the nonnegativity
    contract (documented above).
    """

    dim = 2

    def value(self, x):
        return 0.5 * (x[0] ** 2 - x[1] ** 2)

    def grad(self, x):
        return np.array([x[0], -x[1]])

    def exact_hessian(self, x):
        return SymmetricMatrix(np.diag([1.0, -1.0]))

    def value_batch(self, xs):
        return 0.5 * (xs[:, 0] ** 2 - xs[:, 1] ** 2)

    def grad_batch(self, xs):
        return np.stack([xs[:, 0], -xs[:, 1]], axis=1)


class ScaleInvToy(LossFunction):
    """L(x1, x2) = (x1 x2 - 1)^2, invariant under (x1, x2) -> (k x1, x2/k).

    The zero set is the hyperbola x1 x2 = 1. det of its Hessian depends only
    on the product x1 x2 (so it shares the invariance); the trace does not.
    """

    dim = 2

    def value(self, x):
        return (x[0] * x[1] - 1.0) ** 2

    def grad(self, x):
        r = 2.0 * (x[0] * x[1] - 1.0)
        return np.array([r * x[1], r * x[0]])

    def exact_hessian(self, x):
        off = 4.0 * x[0] * x[1] - 2.0
        return SymmetricMatrix([[2.0 * x[1] ** 2, off], [off, 2.0 * x[0] ** 2]])

    def value_batch(self, xs):
        return (xs[:, 0] * xs[:, 1] - 1.0) ** 2

    def grad_batch(self, xs):
        r = 2.0 * (xs[:, 0] * xs[:, 1] - 1.0)
        return np.stack([r * xs[:, 1], r * xs[:, 0]], axis=1)


class RotInvToy(LossFunction):
    """L(x) = (||x||^2 - 1)^2, invariant under every rotation of x."""

    def __init__(self, dim: int = 2):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def value(self, x):
        return (float(x @ x) - 1.0) ** 2

    def grad(self, x):
        return 4.0 * (float(x @ x) - 1.0) * np.asarray(x, dtype=float)

    def exact_hessian(self, x):
        x = np.asarray(x, dtype=float)
        r = float(x @ x) - 1.0
        return SymmetricMatrix(8.0 * np.outer(x, x) + 4.0 * r * np.eye(self.dim))

    def value_batch(self, xs):
        return (np.einsum("ij,ij->i", xs, xs) - 1.0) ** 2

    def grad_batch(self, xs):
        r = np.einsum("ij,ij->i", xs, xs) - 1.0
        return 4.0 * r[:, None] * xs


class QuadraticLoss(LossFunction):
    """L(x) = (x - c)^T H (x - c) / 2 for positive-semidefinite H."""

    def __init__(self, h: SymmetricMatrix, center=None):
        self.h = h
        self.dim = h.dim
        c = np.zeros(h.dim) if center is None else np.asarray(center, dtype=float)
        if c.shape != (h.dim,):
            raise ValueError("center dimension does not match the matrix")
        self.center = c
        min_eig = float(np.min(np.linalg.eigvalsh(h.entries)))
        if min_eig < -1e-10 * max(1.0, float(np.max(np.abs(h.entries)))):
            raise ValueError(f"QuadraticLoss needs H >= 0; min eigenvalue {min_eig:g}")

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.center
        return 0.5 * float(r @ self.h.entries @ r)

    def grad(self, x):
        return self.h.entries @ (np.asarray(x, dtype=float) - self.center)

    def exact_hessian(self, x):
        return self.h

    def value_batch(self, xs):
        return 0.5 * quadratic_form_batch(self.h, xs - self.center)

    def grad_batch(self, xs):
        return (xs - self.center) @ self.h.entries


def default_fd_step(x: np.ndarray) -> float:
    """Central-difference step balancing truncation against rounding."""
    return 1e-4 * (1.0 + float(np.max(np.abs(x), initial=0.0)))


def hvp(loss: LossFunction, x: np.ndarray, z: np.ndarray, eps: float) -> np.ndarray:
    """Hessian-vector product H z by central differences of the gradient.

    Exact (up to rounding) for quadratics; the operational curvature for
    piecewise-linear activations whose second derivative vanishes a.e.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    gp = loss.grad(x + eps * z)
    gm = loss.grad(x - eps * z)
    if not (np.all(np.isfinite(gp)) and np.all(np.isfinite(gm))):
        raise NumericalError("gradient is not finite at an hvp probe point")
    return (gp - gm) / (2.0 * eps)


def finite_diff_hessian(loss: LossFunction, x: np.ndarray,
                        eps: Optional[float] = None) -> SymmetricMatrix:
    """Dense Hessian from d hvp columns, symmetrized."""
    x = np.asarray(x, dtype=float)
    if loss.dim > _FD_HESSIAN_DIM_LIMIT:
        raise ValueError(
            f"finite_diff_hessian is capped at dim {_FD_HESSIAN_DIM_LIMIT}, "
            f"got {loss.dim}")
    if eps is None:
        eps = default_fd_step(x)
    eye = np.eye(loss.dim)
    cols = np.stack([hvp(loss, x, eye[j], eps) for j in range(loss.dim)], axis=1)
    return SymmetricMatrix(cols)  # constructor averages with the transpose


def hessian_for(loss: LossFunction, x: np.ndarray) -> SymmetricMatrix:
    """Exact Hessian when the loss provides one, finite differences otherwise."""
    h = loss.exact_hessian(np.asarray(x, dtype=float))
    return h if h is not None else finite_diff_hessian(loss, x)


def hutchinson_trace(loss: LossFunction, x: np.ndarray, k: int,
                     stream: SeededStream, eps: Optional[float] = None) -> float:
    """Randomized trace estimate (1/k) sum_i z_i^T H z_i, z_i ~ N(0, I)."""
    if k < 1:
        raise ValueError("need at least one probe")
    x = np.asarray(x, dtype=float)
    if eps is None:
        eps = default_fd_step(x)
    zs = stream.generator().standard_normal((k, loss.dim))
    total = 0.0
    for z in zs:
        total += float(z @ hvp(loss, x, z, eps))
    return total / k


def frobenius_sq_estimate(loss: LossFunction, x: np.ndarray, k: int,
                          stream: SeededStream, eps: Optional[float] = None) -> float:
    """Randomized squared-Frobenius-norm estimate (1/k) sum_i ||H z_i||^2."""
    if k < 1:
        raise ValueError("need at least one probe")
    x = np.asarray(x, dtype=float)
    if eps is None:
        eps = default_fd_step(x)
    zs = stream.generator().standard_normal((k, loss.dim))
    total = 0.0
    for z in zs:
        hz = hvp(loss, x, z, eps)
        total += float(hz @ hz)
    return total / k

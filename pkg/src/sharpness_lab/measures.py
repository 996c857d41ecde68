"""Sampleable measures with explicit quadrature weights.

Probability measures and the (unnormalized) hypercube Lebesgue measure share
one contract: sum_i w_i f(v_i) estimates the integral of f. Probability
measures carry weights 1/n; the hypercube carries (2t)^d / n so the estimate
is the raw (untruncated-volume) integral, which the determinant-style
sharpness values require.

Randomness is counter-based (Philox) and keyed by (seed, iteration,
component, block), so any point of a sweep can be regenerated independently
of execution order, threads, or platform.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .errors import NumericalError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeededStream:
    """Addressable random stream: one Philox counter block per path.

    The path words are (iteration, component, block); draws advance the low
    counter word, which the path never touches. Equal (seed, path) always
    reproduces the same values.
    """

    seed: int
    iteration: int = 0
    component: int = 0
    block: int = 0

    def at(self, *, iteration: Optional[int] = None, component: Optional[int] = None,
           block: Optional[int] = None) -> "SeededStream":
        fields = {}
        if iteration is not None:
            fields["iteration"] = iteration
        if component is not None:
            fields["component"] = component
        if block is not None:
            fields["block"] = block
        return replace(self, **fields)

    def generator(self) -> np.random.Generator:
        counter = [0, self.block & _MASK64, self.component & _MASK64,
                   self.iteration & _MASK64]
        return np.random.Generator(np.random.Philox(key=self.seed & _MASK64,
                                                    counter=counter))


# Stream lanes (component indices) reserved for non-measure randomness.
# Measure components use 0..m-1, so lanes start far above.
LANE_SHUFFLE = 1 << 32
LANE_INIT = (1 << 32) + 1
LANE_PROBES = (1 << 32) + 2
LANE_SUBSET = (1 << 32) + 3


@dataclass(frozen=True)
class StandardGaussian:
    """N(0, I_d)."""

    dim: int


@dataclass(frozen=True)
class UnitSphereUniform:
    """Uniform distribution on the unit sphere in R^d."""

    dim: int


@dataclass(frozen=True)
class HypercubeLebesgue:
    """Lebesgue measure restricted to [-t, t]^d (not a probability measure)."""

    dim: int
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def volume(self) -> float:
        return (2.0 * self.half_width) ** self.dim


@dataclass(frozen=True)
class DiracPoint:
    """Point mass at a fixed vector."""

    point: np.ndarray

    def __init__(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.ndim != 1:
            raise ValueError("Dirac point must be a vector")
        if not np.all(np.isfinite(p)):
            raise ValueError("Dirac point must be finite")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "point", p)

    @property
    def dim(self) -> int:
        return self.point.size


@dataclass(frozen=True)
class GradientDirectionDirac:
    """Point mass at the normalized gradient, resolved at sample time.

    Sampling requires the current gradient as `context`; this is the measure
    that turns the generic update into the classic perturb-along-the-gradient
    step.
    """

    dim: int


MeasureSpec = Union[StandardGaussian, UnitSphereUniform, HypercubeLebesgue,
                    DiracPoint, GradientDirectionDirac]


@dataclass(frozen=True)
class WeightedSamples:
    """Sample points with quadrature weights: sum_i w_i f(v_i) ~ integral."""

    points: np.ndarray   # (n, d)
    weights: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def transformed(self, matrix: np.ndarray) -> "WeightedSamples":
        """Apply a linear map to every sample point, keeping weights."""
        return WeightedSamples(self.points @ np.asarray(matrix, dtype=float).T,
                               self.weights)


def sample(measure: MeasureSpec, stream: SeededStream, n: int,
           context: Optional[np.ndarray] = None) -> WeightedSamples:
    """Draw n weighted samples from the measure.

    `context` is the current gradient and is required exactly when the
    measure is GradientDirectionDirac.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    if isinstance(measure, GradientDirectionDirac):
        if context is None:
            raise ValueError("GradientDirectionDirac requires a context gradient")
        g = np.asarray(context, dtype=float)
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            raise NumericalError(
                "cannot normalize a zero gradient for the gradient-direction measure")
        points = np.tile(g / norm, (n, 1))
        weights = np.full(n, 1.0 / n)
        return WeightedSamples(points, weights)
    if context is not None:
        raise ValueError("context gradient is only meaningful for GradientDirectionDirac")
    if isinstance(measure, DiracPoint):
        points = np.tile(measure.point, (n, 1))
        weights = np.full(n, 1.0 / n)
        return WeightedSamples(points, weights)

    gen = stream.generator()
    if isinstance(measure, StandardGaussian):
        points = gen.standard_normal((n, measure.dim))
        weights = np.full(n, 1.0 / n)
    elif isinstance(measure, UnitSphereUniform):
        raw = gen.standard_normal((n, measure.dim))
        points = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        weights = np.full(n, 1.0 / n)
    elif isinstance(measure, HypercubeLebesgue):
        t = measure.half_width
        points = gen.uniform(-t, t, size=(n, measure.dim))
        weights = np.full(n, measure.volume / n)
    else:
        raise TypeError(f"unknown measure kind: {measure!r}")
    return WeightedSamples(points, weights)


def is_scale_invariant(measure: MeasureSpec) -> bool:
    """True iff the measure is invariant under diagonal maps of determinant 1.

    Among the supported kinds only the hypercube-restricted Lebesgue measure
    qualifies (constant density, volume preserved); the Gaussian and sphere
    densities depend on the norm and Dirac masses are not absolutely
    continuous.
    """
    return isinstance(measure, HypercubeLebesgue)


def is_rotation_invariant(measure: MeasureSpec) -> bool:
    """True iff the measure is invariant under orthogonal maps."""
    return isinstance(measure, (StandardGaussian, UnitSphereUniform))

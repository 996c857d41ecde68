"""Sharpness measures of the loss Hessian: specs, exact oracles, estimators.

A sharpness spec is a triplet (phi, psi, mu) with m components: the measure
value at a point is phi applied to the m integrals of psi_l(0.5 * v^T H v)
over mu_l. The factor 1/2 sits inside psi's argument; all preset algebra
below depends on that convention.

Three evaluation routes are provided:
  * measure_exact       -- closed form from the Hessian eigenvalues,
  * estimate_S          -- Monte-Carlo from a quadratic-form oracle,
  * estimate_R          -- zeroth-order Monte-Carlo from loss differences
                           (L(x + rho v) - L(x)) / rho^2, which converges to
                           the measure as rho -> 0 near a minimum.
Every estimator reports a delta-method standard error so tests can use
principled statistical tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import NumericalError
from .linalg import Spectrum
from .measures import (GradientDirectionDirac, HypercubeLebesgue, MeasureSpec,
                       SeededStream, StandardGaussian, UnitSphereUniform,
                       WeightedSamples, sample)

# exp() overflows just above 709; clamping would silently bias estimates, so
# arguments beyond this limit are a hard error instead.
EXP_ARG_LIMIT = 700.0

# phi(u) ~ 1/u^2 blows up near zero; below this floor we refuse to divide.
PHI_ARG_FLOOR = 1e-30


@dataclass(frozen=True)
class ScalarFun:
    """Scalar function with its derivative, vectorized over numpy arrays."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VectorFun:
    """Function R^m -> R with its gradient."""

    name: str
    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


def _checked_exp(a: np.ndarray) -> np.ndarray:
    amax = float(np.max(a)) if a.size else 0.0
    if amax > EXP_ARG_LIMIT:
        raise NumericalError(
            f"exp() argument {amax:.6g} exceeds the overflow limit {EXP_ARG_LIMIT:g}")
    return np.exp(a)


def psi_identity() -> ScalarFun:
    return ScalarFun("t", lambda u: np.asarray(u, dtype=float),
                     lambda u: np.ones_like(np.asarray(u, dtype=float)))


def psi_power(k: int) -> ScalarFun:
    if k < 1:
        raise ValueError("power must be a positive integer")
    return ScalarFun(f"t^{k}", lambda u: np.asarray(u) ** k,
                     lambda u: k * np.asarray(u) ** (k - 1))


def psi_exp_neg() -> ScalarFun:
    return ScalarFun("exp(-t)", lambda u: _checked_exp(-np.asarray(u)),
                     lambda u: -_checked_exp(-np.asarray(u)))


def psi_exp_scaled(sigma: float) -> ScalarFun:
    return ScalarFun(f"exp({sigma:g} t)",
                     lambda u: _checked_exp(sigma * np.asarray(u)),
                     lambda u: sigma * _checked_exp(sigma * np.asarray(u)))


def phi_identity() -> VectorFun:
    return VectorFun("t", lambda t: float(t[0]), lambda t: np.ones(1))


def phi_excess() -> VectorFun:
    """phi(t1, t2) = 2 (t2 - t1^2): twice the centered second moment."""
    return VectorFun("2(t2 - t1^2)",
                     lambda t: 2.0 * (float(t[1]) - float(t[0]) ** 2),
                     lambda t: np.array([-4.0 * float(t[0]), 2.0]))


def _guarded_inv_sq(scale: float, name: str) -> VectorFun:
    def fn(t: np.ndarray) -> float:
        u = float(t[0])
        if abs(u) < PHI_ARG_FLOOR:
            raise NumericalError(
                f"{name}: integral estimate {u:.3g} is below the division floor")
        return scale / u ** 2

    def grad(t: np.ndarray) -> np.ndarray:
        u = float(t[0])
        if abs(u) < PHI_ARG_FLOOR:
            raise NumericalError(
                f"{name}: integral estimate {u:.3g} is below the division floor")
        return np.array([-2.0 * scale / u ** 3])

    return VectorFun(name, fn, grad)


def phi_gaussian_inv_sq(dim: int) -> VectorFun:
    return _guarded_inv_sq((2.0 * math.pi) ** dim, f"(2*pi)^{dim}/t^2")


def phi_inv_sq() -> VectorFun:
    return _guarded_inv_sq(1.0, "1/t^2")


@dataclass(frozen=True)
class SharpnessSpec:
    """The (phi, psi, mu) triplet with m components.

    shared_samples means all components are estimated from one sample batch
    (legitimate only when the component measures are identical); the
    squared-Frobenius preset uses this so its two moments see the same draws.
    """

    phi: VectorFun
    psis: tuple[ScalarFun, ...]
    mus: tuple[MeasureSpec, ...]
    shared_samples: bool = False
    name: str = "custom"

    def __post_init__(self):
        if len(self.psis) != len(self.mus) or not self.psis:
            raise ValueError("need one psi and one measure per component")
        dims = {_measure_dim(mu) for mu in self.mus}
        if len(dims) != 1:
            raise ValueError(f"component measures disagree on dimension: {dims}")
        if self.shared_samples and len(set(map(repr, self.mus))) != 1:
            raise ValueError("shared samples require identical component measures")

    @property
    def m(self) -> int:
        return len(self.psis)

    @property
    def dim(self) -> int:
        return _measure_dim(self.mus[0])


def _measure_dim(mu: MeasureSpec) -> int:
    return mu.dim


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trace:
    """Sphere-averaged quadratic form; value (1/2d) * trace(H)."""

    def spec(self, dim: int) -> SharpnessSpec:
        return SharpnessSpec(phi_identity(), (psi_identity(),),
                             (UnitSphereUniform(dim),), name="trace")

    def exact(self, eigenvalues: np.ndarray) -> float:
        lam = np.asarray(eigenvalues, dtype=float)
        return float(np.sum(lam) / (2.0 * lam.size))


@dataclass(frozen=True)
class Frobenius:
    """Two Gaussian moments combined into sum(lambda_i^2) = ||H||_F^2.

    The value is the squared Frobenius norm; the first and second moments of
    0.5 v^T H v under N(0, I) are (1/2) tr H and (1/2) sum lambda^2 +
    (1/4) (tr H)^2, and 2(t2 - t1^2) cancels the trace part.
    """

    def spec(self, dim: int) -> SharpnessSpec:
        g = StandardGaussian(dim)
        return SharpnessSpec(phi_excess(), (psi_identity(), psi_power(2)),
                             (g, g), shared_samples=True, name="frobenius")

    def exact(self, eigenvalues: np.ndarray) -> float:
        lam = np.asarray(eigenvalues, dtype=float)
        return float(np.sum(lam ** 2))


@dataclass(frozen=True)
class Determinant:
    """Truncated Gaussian-integral route to prod(lambda_i).

    The integral of exp(-0.5 v^T H v) over all of R^d equals
    (2 pi)^(d/2) det(H)^(-1/2); sampling uniformly on [-t, t]^d with volume
    weights estimates it, and phi(u) = (2 pi)^d / u^2 inverts the identity.
    The estimate only resolves det(H) once t covers several standard
    deviations 1/sqrt(lambda_min) of the implied Gaussian.
    """

    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    def spec(self, dim: int) -> SharpnessSpec:
        return SharpnessSpec(phi_gaussian_inv_sq(dim), (psi_exp_neg(),),
                             (HypercubeLebesgue(dim, self.half_width),),
                             name="determinant")

    def exact(self, eigenvalues: np.ndarray) -> float:
        lam = np.asarray(eigenvalues, dtype=float)
        floor = -1e-9 * max(1.0, float(np.max(np.abs(lam), initial=0.0)))
        bad = lam < floor
        if np.any(bad):
            raise NumericalError(
                f"determinant oracle needs a nonnegative spectrum; got {lam[bad][0]:.6g}")
        return float(np.prod(lam))


@dataclass(frozen=True)
class Moment:
    """Raw degree-n moment of 0.5 v^T H v, a homogeneous polynomial in the
    eigenvalues. Sampling measure is the unit sphere or the standard
    Gaussian; the closed form below handles both."""

    degree: int
    measure: str = "gaussian"

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be a positive integer")
        if self.measure not in ("gaussian", "sphere"):
            raise ValueError(f"measure must be 'gaussian' or 'sphere', got {self.measure!r}")

    def spec(self, dim: int) -> SharpnessSpec:
        mu = StandardGaussian(dim) if self.measure == "gaussian" else UnitSphereUniform(dim)
        return SharpnessSpec(phi_identity(), (psi_power(self.degree),), (mu,),
                             name="moment")

    def exact(self, eigenvalues: np.ndarray) -> float:
        return _moment_exact(np.asarray(eigenvalues, dtype=float),
                             self.degree, self.measure)


@dataclass(frozen=True)
class CharPoly:
    """Gaussian integral of exp(sigma * 0.5 v^T H v), inverted by 1/u^2 into
    prod(1 - sigma lambda_i): the characteristic-polynomial values that the
    eigenvalue-recovery pipeline consumes. Requires sigma lambda_i < 1."""

    sigma: float

    def spec(self, dim: int) -> SharpnessSpec:
        return SharpnessSpec(phi_inv_sq(), (psi_exp_scaled(self.sigma),),
                             (StandardGaussian(dim),), name="charpoly")

    def exact(self, eigenvalues: np.ndarray) -> float:
        lam = np.asarray(eigenvalues, dtype=float)
        factors = 1.0 - self.sigma * lam
        if np.any(factors <= 0.0):
            bad = lam[factors <= 0.0][0]
            raise NumericalError(
                f"charpoly oracle requires sigma*lambda < 1; violated by lambda={bad:.6g}")
        return float(np.prod(factors))


SpecPreset = Union[Trace, Frobenius, Determinant, Moment, CharPoly]

PRESET_NAMES = ("trace", "frobenius", "determinant", "moment", "charpoly")


def measure_exact(spectrum: Spectrum, preset: SpecPreset) -> float:
    """Closed-form sharpness value from the eigenvalues."""
    return preset.exact(spectrum.eigenvalues)


def pseudo_det(spectrum: Spectrum, rank_rtol: float = 1e-10) -> float:
    """Product of the eigenvalues deemed nonzero at the given relative rank
    tolerance; the determinant's stand-in for rank-deficient Hessians."""
    lam = spectrum.eigenvalues
    scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    nonzero = lam[np.abs(lam) > rank_rtol * scale]
    return float(np.prod(nonzero)) if nonzero.size else 1.0


def _double_factorial_odd(k: int) -> int:
    # (2k-1)!! with the empty-product convention for k=0
    out = 1
    for j in range(1, 2 * k, 2):
        out *= j
    return out


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _moment_exact(lam: np.ndarray, degree: int, measure: str) -> float:
    """E[(sum_i (lambda_i / 2) v_i^2)^degree] by multinomial expansion.

    Gaussian coordinates contribute prod (2k_i - 1)!!; squared sphere
    coordinates are Dirichlet(1/2, ..., 1/2), contributing
    prod (2k_i - 1)!! / (2^n (d/2)_n).
    """
    d = lam.size
    if degree > 12:
        raise ValueError("moment degree > 12 not supported by the closed form")
    a = lam / 2.0
    total = 0.0
    n = degree
    for ks in _compositions(n, d):
        coeff = math.factorial(n)
        term = 1.0
        for ai, ki in zip(a, ks):
            coeff //= math.factorial(ki)
            term *= ai ** ki
            term *= _double_factorial_odd(ki)
        total += coeff * term
    if measure == "sphere":
        rising = 1.0
        for j in range(n):
            rising *= d / 2.0 + j
        total /= 2.0 ** n * rising
    return float(total)


# ---------------------------------------------------------------------------
# Monte-Carlo estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo estimate with a delta-method standard error."""

    value: float
    stderr: float
    component_means: np.ndarray
    component_stderrs: np.ndarray
    n: int


QuadOracle = Callable[[np.ndarray], np.ndarray]  # (n, d) -> (n,) of v^T H v


def draw_component_samples(spec: SharpnessSpec, stream: SeededStream, n: int,
                           context: Optional[np.ndarray] = None
                           ) -> list[WeightedSamples]:
    """One weighted sample batch per component (a single shared batch when
    the spec calls for it), drawn from per-component stream paths."""
    ctx = {}
    for l, mu in enumerate(spec.mus):
        ctx[l] = context if isinstance(mu, GradientDirectionDirac) else None
    if spec.shared_samples:
        shared = sample(spec.mus[0], stream.at(component=0), n, context=ctx[0])
        return [shared] * spec.m
    return [sample(mu, stream.at(component=l), n, context=ctx[l])
            for l, mu in enumerate(spec.mus)]


def _component_stats(spec: SharpnessSpec, args: Sequence[np.ndarray],
                     batches: Sequence[WeightedSamples]) -> Estimate:
    """phi of the weighted psi-means plus the delta-method error.

    With shared samples the full sample covariance between components enters
    the propagation; otherwise components are independent.
    """
    m = spec.m
    n = batches[0].n
    if n < 2:
        raise ValueError("standard errors need n >= 2 samples")
    ys = []
    means = np.empty(m)
    for l in range(m):
        y = spec.psis[l].fn(args[l])
        if not np.all(np.isfinite(y)):
            i = int(np.argmin(np.isfinite(y)))
            raise NumericalError(
                f"psi_{l} produced a non-finite value at sample {i} "
                f"(argument {args[l][i]:.6g})")
        ys.append(y)
        means[l] = float(np.dot(batches[l].weights, y))
    cov = np.zeros((m, m))
    if spec.shared_samples and m > 1:
        mass = batches[0].total_mass
        cov = np.atleast_2d(np.cov(np.stack(ys), ddof=1)) * (mass ** 2 / n)
    else:
        for l in range(m):
            mass = batches[l].total_mass
            cov[l, l] = (mass ** 2 / n) * float(np.var(ys[l], ddof=1))
    value = spec.phi.fn(means)
    g = spec.phi.grad(means)
    var = float(g @ cov @ g)
    return Estimate(value=float(value), stderr=math.sqrt(max(var, 0.0)),
                    component_means=means,
                    component_stderrs=np.sqrt(np.diag(cov)), n=n)


def estimate_S_from_samples(quad: QuadOracle, spec: SharpnessSpec,
                            batches: Sequence[WeightedSamples]) -> Estimate:
    """Estimate from caller-supplied weighted samples.

    This is the entry point for coupled-sample invariance checks, where the
    samples at a transformed point are transported through the change of
    variables instead of being redrawn.
    """
    args = [0.5 * np.asarray(quad(b.points), dtype=float) for b in batches]
    return _component_stats(spec, args, batches)


def estimate_S(quad: QuadOracle, spec: SharpnessSpec, stream: SeededStream,
               n: int, context: Optional[np.ndarray] = None) -> Estimate:
    """Monte-Carlo sharpness estimate from a quadratic-form oracle.

    `quad` maps a batch of row vectors (n, d) to the values v^T H v; the 1/2
    is applied here, inside psi's argument.
    """
    if n < 2:
        raise ValueError("estimate_S needs n >= 2")
    batches = draw_component_samples(spec, stream, n, context)
    return estimate_S_from_samples(quad, spec, batches)


def estimate_R(loss, x: np.ndarray, spec: SharpnessSpec, rho: float,
               stream: SeededStream, n: int) -> Estimate:
    """Zeroth-order sharpness estimate from loss differences.

    The psi argument per sample is (L(x + rho v) - L(x)) / rho^2; only loss
    values are touched. Deterministic given (loss, x, spec, rho, stream, n).
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if n < 2:
        raise ValueError("estimate_R needs n >= 2")
    x = np.asarray(x, dtype=float)
    context = None
    if any(isinstance(mu, GradientDirectionDirac) for mu in spec.mus):
        context = loss.grad(x)
    batches = draw_component_samples(spec, stream, n, context)
    lx = loss.value(x)
    args = []
    seen: dict[int, np.ndarray] = {}
    for b in batches:
        key = id(b)
        if key not in seen:
            vals = np.asarray(loss.value_batch(x[None, :] + rho * b.points), dtype=float)
            if not np.all(np.isfinite(vals)):
                i = int(np.argmin(np.isfinite(vals)))
                raise NumericalError(
                    f"loss is not finite at perturbed point {x + rho * b.points[i]}")
            seen[key] = (vals - lx) / rho ** 2
        args.append(seen[key])
    return _component_stats(spec, args, batches)


def regularizer_gradient(loss, x: np.ndarray, spec: SharpnessSpec, rho: float,
                         stream: SeededStream, n: int,
                         base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient contribution of the sharpness term (excluding grad L(x)).

    Computes sum_l dphi_l(psi-means) * sum_i w_i psi_l'(arg_il) *
    (grad L(x + rho v_il) - grad L(x)), with the same samples feeding the
    phi' argument and the weighted gradient differences. This equals rho^2
    times the gradient of the sampled sharpness regularizer. Pass base_grad
    to reuse an already-computed grad L(x).
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if n < 1:
        raise ValueError("need n >= 1")
    x = np.asarray(x, dtype=float)
    gx = loss.grad(x) if base_grad is None else np.asarray(base_grad, dtype=float)
    context = None
    if any(isinstance(mu, GradientDirectionDirac) for mu in spec.mus):
        context = gx
    batches = draw_component_samples(spec, stream, n, context)
    lx = loss.value(x)

    arg_cache: dict[int, np.ndarray] = {}
    diff_cache: dict[int, np.ndarray] = {}

    def batch_args(b: WeightedSamples) -> np.ndarray:
        key = id(b)
        if key not in arg_cache:
            vals = np.asarray(loss.value_batch(x[None, :] + rho * b.points), dtype=float)
            if not np.all(np.isfinite(vals)):
                i = int(np.argmin(np.isfinite(vals)))
                raise NumericalError(
                    f"loss is not finite at perturbed point {x + rho * b.points[i]}")
            arg_cache[key] = (vals - lx) / rho ** 2
        return arg_cache[key]

    def batch_grad_diffs(b: WeightedSamples) -> np.ndarray:
        key = id(b)
        if key not in diff_cache:
            grads = np.asarray(loss.grad_batch(x[None, :] + rho * b.points), dtype=float)
            if not np.all(np.isfinite(grads)):
                raise NumericalError("loss gradient is not finite at a perturbed point")
            diff_cache[key] = grads - gx
        return diff_cache[key]

    means = np.empty(spec.m)
    for l, b in enumerate(batches):
        means[l] = float(np.dot(b.weights, spec.psis[l].fn(batch_args(b))))
    dphi = spec.phi.grad(means)
    out = np.zeros_like(x)
    for l, b in enumerate(batches):
        coeff = b.weights * spec.psis[l].deriv(batch_args(b))
        out += dphi[l] * (coeff @ batch_grad_diffs(b))
    return out

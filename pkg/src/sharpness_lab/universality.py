"""Constructive recovery of Hessian spectra and entries from integral probes.

Two pipelines:

* Eigenvalues. The Gaussian integral of exp(sigma * 0.5 v^T H v) equals
  prod_i (1 - sigma lambda_i)^(-1/2) whenever every |sigma lambda_i| < 1.
  Squared reciprocals of d such integrals are values of the polynomial
  p(x) = prod_i (1 - lambda_i x); together with p(0) = 1 a Vandermonde solve
  recovers the coefficients and the eigenvalues are the reciprocal roots,
  with degree deficiency mapping to zero eigenvalues.

* Entries. Quadratic forms along e_i and e_i + e_j determine the whole
  symmetric matrix through d(d+1)/2 exact linear identities - no sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalError
from .linalg import (Polynomial, Spectrum, SymmetricMatrix,
                     TRAILING_COEFF_RTOL, vandermonde_solve, real_poly_roots)
from .measures import SeededStream, StandardGaussian, sample
from .sharpness import QuadOracle, psi_exp_scaled

# Keep the new leading coefficient at least this factor above the trim
# cutoff, otherwise the recovered degree is ambiguous.
_DEFICIENCY_MARGIN = 10.0


@dataclass(frozen=True)
class MomentProbe:
    """Integral values I_i at probe nodes sigma_i.

    Nodes must be distinct, nonzero, and inside the convergence interval of
    the probed spectrum; each value must be finite and positive.
    """

    nodes: np.ndarray
    values: np.ndarray

    def __init__(self, nodes, values):
        nd = np.asarray(nodes, dtype=float)
        vals = np.asarray(values, dtype=float)
        if nd.ndim != 1 or nd.shape != vals.shape or nd.size == 0:
            raise ValueError("nodes and values must be matching nonempty vectors")
        if np.any(nd == 0.0) or np.unique(nd).size != nd.size:
            raise ValueError("probe nodes must be distinct and nonzero")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
            raise NumericalError("probe integrals must be finite and positive")
        nd = nd.copy(); nd.flags.writeable = False
        vals = vals.copy(); vals.flags.writeable = False
        object.__setattr__(self, "nodes", nd)
        object.__setattr__(self, "values", vals)

    @property
    def count(self) -> int:
        return self.nodes.size


def default_probe_nodes(eps: float, d: int, fraction: float = 0.9) -> np.ndarray:
    """d distinct nonzero nodes inside (-eps, eps).

    Signs alternate and magnitudes are equispaced up to fraction*eps:
    +m_1, -m_1, +m_2, -m_2, ... Symmetric placement keeps the downstream
    Vandermonde solve well conditioned, which one-sided clustered nodes do
    not (they lose ~4 digits on nearby eigenvalue pairs).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    half = (d + 1) // 2
    mags = fraction * eps * np.arange(1, half + 1) / half
    out = np.empty(d)
    out[0::2] = mags[: (d + 1) // 2]
    out[1::2] = -mags[: d // 2]
    return out


def convergence_radius(spectrum: Spectrum) -> float:
    """Largest eps such that every |sigma| < eps keeps all probe integrals
    finite: the reciprocal of the spectral radius (inf for a zero matrix)."""
    r = float(np.max(np.abs(spectrum.eigenvalues), initial=0.0))
    return np.inf if r == 0.0 else 1.0 / r


def probe_moments(nodes, *, spectrum: Optional[Spectrum] = None,
                  quad: Optional[QuadOracle] = None, dim: Optional[int] = None,
                  stream: Optional[SeededStream] = None,
                  n: Optional[int] = None) -> MomentProbe:
    """Integral probes I_i, either closed-form or by Monte Carlo.

    Exact mode (pass `spectrum`): I_i = prod_j (1 - sigma_i lambda_j)^(-1/2).
    Node sets reaching outside the convergence interval are refused.

    Monte-Carlo mode (pass `quad`, `dim`, `stream`, `n`): Gaussian samples
    with weight 1/n estimate each integral; node i draws from stream
    component i. The caller is responsible for keeping sigma_i inside the
    convergence interval with enough margin for finite variance.
    """
    nodes = np.asarray(nodes, dtype=float)
    if spectrum is not None:
        eps = convergence_radius(spectrum)
        if np.any(np.abs(nodes) >= eps):
            worst = nodes[np.argmax(np.abs(nodes))]
            raise NumericalError(
                f"probe node {worst:.6g} is outside the convergence interval "
                f"(-{eps:.6g}, {eps:.6g})")
        lam = spectrum.eigenvalues
        values = np.array([np.prod(1.0 / np.sqrt(1.0 - s * lam)) for s in nodes])
        return MomentProbe(nodes, values)
    if quad is None or dim is None or stream is None or n is None:
        raise ValueError("Monte-Carlo mode needs quad, dim, stream, and n")
    values = np.empty(nodes.size)
    for i, sigma in enumerate(nodes):
        batch = sample(StandardGaussian(dim), stream.at(component=i), n)
        y = psi_exp_scaled(float(sigma)).fn(0.5 * np.asarray(quad(batch.points)))
        values[i] = float(np.dot(batch.weights, y))
    return MomentProbe(nodes, values)


def reconstruct_eigenvalues(probe: MomentProbe, root_tol: float = 1e-5) -> np.ndarray:
    """All d eigenvalues from d integral probes, sorted descending.

    p(sigma_i) = I_i^(-2); with p(0) = 1 prepended, a Vandermonde solve gives
    the coefficients, reciprocal roots give the nonzero eigenvalues, and
    trimmed trailing coefficients contribute zeros.
    """
    d = probe.count
    pvals = probe.values ** -2.0
    nodes = np.concatenate([[0.0], probe.nodes])
    values = np.concatenate([[1.0], pvals])
    poly = vandermonde_solve(nodes, values)
    trimmed = poly.trimmed()
    if trimmed.degree > 0:
        coeffs = np.abs(poly.coefficients)
        cutoff = TRAILING_COEFF_RTOL * np.max(coeffs)
        lead = np.abs(trimmed.coefficients[-1])
        if lead < _DEFICIENCY_MARGIN * cutoff:
            raise NumericalError(
                "ambiguous degree deficiency: leading coefficient "
                f"{lead:.3e} sits at the trim cutoff {cutoff:.3e} "
                f"(coefficient magnitudes: {np.array2string(coeffs, precision=3)})")
    roots = real_poly_roots(trimmed, root_tol) if trimmed.degree > 0 else np.empty(0)
    eigenvalues = np.concatenate([1.0 / roots, np.zeros(d - roots.size)])
    return np.sort(eigenvalues)[::-1]


@dataclass(frozen=True)
class HessianProbeSet:
    """Quadratic forms along e_i (diagonal) and e_i + e_j, i < j (pairs,
    row-major order). Together: d(d+1)/2 numbers determining the matrix."""

    diagonal: np.ndarray
    pairs: np.ndarray

    def __init__(self, diagonal, pairs):
        diag = np.asarray(diagonal, dtype=float)
        prs = np.asarray(pairs, dtype=float)
        d = diag.size
        if prs.size != d * (d - 1) // 2:
            raise ValueError(
                f"expected {d * (d - 1) // 2} pair probes for dim {d}, got {prs.size}")
        diag = diag.copy(); diag.flags.writeable = False
        prs = prs.copy(); prs.flags.writeable = False
        object.__setattr__(self, "diagonal", diag)
        object.__setattr__(self, "pairs", prs)

    @property
    def dim(self) -> int:
        return self.diagonal.size

    @property
    def count(self) -> int:
        return self.diagonal.size + self.pairs.size


def collect_hessian_probes(quad_single, dim: int) -> HessianProbeSet:
    """Evaluate v -> v^T H v along the probe directions.

    `quad_single` takes one vector; suitable callables include exact
    quadratic forms and finite-difference surrogates.
    """
    eye = np.eye(dim)
    diag = np.array([float(quad_single(eye[i])) for i in range(dim)])
    pairs = []
    for i in range(dim):
        for j in range(i + 1, dim):
            pairs.append(float(quad_single(eye[i] + eye[j])))
    return HessianProbeSet(diag, np.array(pairs))


def reconstruct_hessian(probes: HessianProbeSet) -> SymmetricMatrix:
    """Exact entry recovery: H_ii = q_i, H_ij = (q_ij - q_i - q_j) / 2."""
    d = probes.dim
    h = np.zeros((d, d))
    np.fill_diagonal(h, probes.diagonal)
    k = 0
    for i in range(d):
        for j in range(i + 1, d):
            h[i, j] = h[j, i] = 0.5 * (probes.pairs[k] - probes.diagonal[i]
                                       - probes.diagonal[j])
            k += 1
    return SymmetricMatrix(h)

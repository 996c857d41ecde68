"""Dense symmetric linear algebra and polynomial machinery.

Everything here is small-d, exact-oracle territory: eigendecompositions feed
the closed-form sharpness values, Vandermonde solves and companion-matrix root
finding drive the eigenvalue-recovery pipeline. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

# Ascending-order coefficients whose high-degree tail falls below this
# (relative to the largest coefficient) are treated as degree deficiency.
TRAILING_COEFF_RTOL = 1e-8

# Beyond this the Vandermonde solve cannot be trusted in double precision.
_VANDERMONDE_COND_LIMIT = 1e14


def _as_square(entries) -> np.ndarray:
    a = np.asarray(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix entries must be finite")
    return a


@dataclass(frozen=True)
class SymmetricMatrix:
    """Dense real symmetric matrix. Construction symmetrizes exactly:
    0.5*(A + A^T) makes entries[i, j] == entries[j, i] bit-for-bit."""

    entries: np.ndarray

    def __init__(self, entries):
        a = _as_square(entries)
        sym = 0.5 * (a + a.T)
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.entries @ np.asarray(v, dtype=float)


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are sorted descending; eigenvectors holds the matching
    orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __init__(self, eigenvalues, eigenvectors):
        lam = np.asarray(eigenvalues, dtype=float)
        q = np.asarray(eigenvectors, dtype=float)
        if lam.ndim != 1 or q.shape != (lam.size, lam.size):
            raise ValueError("eigenvalues/eigenvectors shapes are inconsistent")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be sorted descending")
        lam.flags.writeable = False
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", q)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> SymmetricMatrix:
        q = self.eigenvectors
        return SymmetricMatrix((q * self.eigenvalues) @ q.T)


def symmetric_eig(m: SymmetricMatrix) -> Spectrum:
    """Full eigendecomposition, deterministic for a given matrix.

    Backed by LAPACK's symmetric solver; a convergence failure is surfaced
    as a NumericalError naming the matrix norm.
    """
    try:
        lam, q = np.linalg.eigh(m.entries)
    except np.linalg.LinAlgError as exc:
        norm = float(np.max(np.abs(m.entries)))
        raise NumericalError(
            f"symmetric eigensolver failed to converge (max|entry| = {norm:g})"
        ) from exc
    order = np.argsort(lam)[::-1]
    return Spectrum(lam[order], q[:, order])


def quadratic_form(m: SymmetricMatrix, v) -> float:
    """v^T M v for a single vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != (m.dim,):
        raise ValueError(f"vector has shape {v.shape}, matrix dim is {m.dim}")
    return float(v @ m.entries @ v)


def quadratic_form_batch(m: SymmetricMatrix, vs: np.ndarray) -> np.ndarray:
    """Row-wise v^T M v for a batch of vectors (n, d) -> (n,)."""
    vs = np.asarray(vs, dtype=float)
    if vs.ndim != 2 or vs.shape[1] != m.dim:
        raise ValueError(f"batch has shape {vs.shape}, matrix dim is {m.dim}")
    return np.einsum("ij,ij->i", vs @ m.entries, vs)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial, coefficients in ascending-degree order."""

    coefficients: np.ndarray

    def __init__(self, coefficients):
        c = np.atleast_1d(np.asarray(coefficients, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-d sequence")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def degree(self) -> int:
        return self.coefficients.size - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def trimmed(self, rtol: float = TRAILING_COEFF_RTOL) -> "Polynomial":
        """Drop the high-degree tail of near-zero coefficients."""
        c = self.coefficients
        cutoff = rtol * np.max(np.abs(c))
        k = c.size
        while k > 1 and abs(c[k - 1]) <= cutoff:
            k -= 1
        return Polynomial(c[:k])


def vandermonde_solve(nodes, values) -> Polynomial:
    """Interpolating polynomial through (node_i, value_i).

    Solves the Vandermonde system by LU with partial pivoting, on nodes
    rescaled to [-1, 1] for conditioning (coefficients are mapped back
    exactly). The result is verified to reproduce the data to 1e-8 relative.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.ndim != 1 or nodes.shape != values.shape:
        raise ValueError("nodes and values must be 1-d and of equal length")
    if np.unique(nodes).size != nodes.size:
        raise NumericalError("duplicate interpolation nodes")
    n = nodes.size
    scale = np.max(np.abs(nodes))
    if scale == 0.0:
        if n != 1:
            raise NumericalError("duplicate interpolation nodes")
        return Polynomial(values)
    v = np.vander(nodes / scale, n, increasing=True)
    # Conditioning of the scaled solve times the worst amplification from
    # mapping coefficients back to the original x-scale.
    amplification = max(1.0, float(scale) ** -(n - 1))
    cond = np.linalg.cond(v) * amplification
    if not np.isfinite(cond) or cond > _VANDERMONDE_COND_LIMIT:
        raise NumericalError(
            f"Vandermonde system too ill-conditioned (cond ~ {cond:.2e}); "
            "spread the nodes further apart"
        )
    coeffs = np.linalg.solve(v, values) / scale ** np.arange(n)
    poly = Polynomial(coeffs)
    resid = np.abs(poly(nodes) - values)
    if np.any(resid > 1e-8 * np.maximum(1.0, np.abs(values))):
        raise NumericalError(
            f"interpolation residual {np.max(resid):.2e} exceeds tolerance; "
            "spread the nodes further apart"
        )
    return poly


def real_poly_roots(p: Polynomial, tol: float) -> np.ndarray:
    """All real roots of p, sorted descending.

    High-degree coefficients below TRAILING_COEFF_RTOL (relative) are trimmed
    first, so a deficient polynomial yields correspondingly fewer roots.
    Roots come from the companion-matrix eigenvalues; imaginary parts below
    tol*max(1, |root|) are truncated to zero, anything larger is an error
    (the callers' constructions guarantee real roots, so a genuine complex
    pair signals noisy upstream data). Each returned root satisfies
    |p(r)| <= tol * max|coeff| * max(1, |r|)^degree; the last factor is the
    evaluation scale of p at r, without which the bound is unattainable for
    roots far outside the unit interval.
    """
    c = p.trimmed().coefficients
    if c.size == 1:
        if c[0] == 0.0:
            raise NumericalError("polynomial is identically zero")
        return np.empty(0)
    roots = np.roots(c[::-1])
    scale = np.maximum(1.0, np.abs(roots.real))
    bad = np.abs(roots.imag) > tol * scale
    if np.any(bad):
        r = roots[bad][0]
        raise NumericalError(
            f"complex root pair {r:.6g} above tolerance; upstream values are too noisy"
        )
    real_roots = np.sort(roots.real)[::-1]
    max_coeff = np.max(np.abs(c))
    bound = tol * max_coeff * np.maximum(1.0, np.abs(real_roots)) ** (c.size - 1)
    resid = np.abs(p(real_roots))
    if np.any(resid > bound):
        raise NumericalError(
            f"root residual {np.max(resid):.2e} exceeds the tolerance "
            f"{np.max(bound):.2e}"
        )
    return real_roots

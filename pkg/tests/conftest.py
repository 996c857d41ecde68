import numpy as np
import pytest

from sharpness_lab import SeededStream, SymmetricMatrix


def random_symmetric(gen: np.random.Generator, dim: int,
                     lo: float = -5.0, hi: float = 5.0) -> SymmetricMatrix:
    return SymmetricMatrix(gen.uniform(lo, hi, size=(dim, dim)))


def random_with_spectrum(gen: np.random.Generator,
                         eigenvalues: np.ndarray) -> SymmetricMatrix:
    """Symmetric matrix with prescribed eigenvalues and a random basis."""
    d = len(eigenvalues)
    q, r = np.linalg.qr(gen.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    return SymmetricMatrix((q * eigenvalues) @ q.T)


def central_diff_grad(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = step
        g[i] = (fn(x + e) - fn(x - e)) / (2 * step)
    return g


@pytest.fixture
def gen():
    return SeededStream(20250810).generator()

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharpness_lab import (NumericalError, Polynomial, SymmetricMatrix,
                           quadratic_form, quadratic_form_batch,
                           real_poly_roots, symmetric_eig, vandermonde_solve)
from conftest import random_symmetric


class TestSymmetricMatrix:
    def test_symmetrizes_exactly(self, gen):
        a = gen.uniform(-5, 5, size=(4, 4))
        m = SymmetricMatrix(a)
        assert np.array_equal(m.entries, m.entries.T)

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            SymmetricMatrix(np.zeros((2, 3)))

    def test_rejects_nonfinite(self):
        with pytest.raises(NumericalError):
            SymmetricMatrix([[1.0, np.inf], [np.inf, 1.0]])


class TestSymmetricEig:
    def test_diagonal(self):
        spec = symmetric_eig(SymmetricMatrix(np.diag([1.0, -1.0])))
        assert np.array_equal(spec.eigenvalues, [1.0, -1.0])

    def test_identity(self):
        spec = symmetric_eig(SymmetricMatrix(np.eye(3)))
        assert np.allclose(spec.eigenvalues, 1.0)
        q = spec.eigenvectors
        assert np.max(np.abs(q.T @ q - np.eye(3))) <= 1e-10

    def test_2x2_characteristic_roots(self):
        # roots of lambda^2 - 5 lambda + 5
        spec = symmetric_eig(SymmetricMatrix([[2.0, 1.0], [1.0, 3.0]]))
        expected = [(5 + np.sqrt(5)) / 2, (5 - np.sqrt(5)) / 2]
        assert np.allclose(spec.eigenvalues, expected, atol=1e-12)

    def test_round_trip_bulk(self, gen):
        # reconstruction, orthonormality, and trace agreement in bulk
        for _ in range(1000):
            d = int(gen.integers(1, 9))
            m = random_symmetric(gen, d)
            spec = symmetric_eig(m)
            scale = max(1.0, np.max(np.abs(m.entries)))
            assert np.max(np.abs(spec.reconstruct().entries - m.entries)) <= 1e-8 * scale
            q = spec.eigenvectors
            assert np.max(np.abs(q.T @ q - np.eye(d))) <= 1e-10
            tr = float(np.trace(m.entries))
            assert abs(spec.eigenvalues.sum() - tr) <= 1e-9 * max(1.0, np.sum(np.abs(spec.eigenvalues)))

    def test_deterministic(self, gen):
        m = random_symmetric(gen, 5)
        a, b = symmetric_eig(m), symmetric_eig(m)
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)


class TestQuadraticForm:
    def test_cancellation(self):
        m = SymmetricMatrix(np.diag([1.0, -1.0]))
        assert quadratic_form(m, [1.0, 1.0]) == 0.0

    def test_identity(self):
        assert quadratic_form(SymmetricMatrix(np.eye(2)), [3.0, 4.0]) == 25.0

    def test_expansion(self):
        m = SymmetricMatrix([[2.0, 1.0], [1.0, 3.0]])
        assert quadratic_form(m, [1.0, 1.0]) == pytest.approx(7.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            quadratic_form(SymmetricMatrix(np.eye(2)), [1.0, 2.0, 3.0])

    def test_batch_matches_single(self, gen):
        m = random_symmetric(gen, 3)
        vs = gen.standard_normal((10, 3))
        batch = quadratic_form_batch(m, vs)
        for i in range(10):
            assert batch[i] == pytest.approx(quadratic_form(m, vs[i]), rel=1e-12)


class TestVandermondeSolve:
    def test_example_quadratic(self):
        p = vandermonde_solve([0.0, 0.1, 0.2], [1.0, 0.72, 0.48])
        assert np.allclose(p.coefficients, [1.0, -3.0, 2.0], atol=1e-10)

    def test_constant(self):
        p = vandermonde_solve([0.0, 1.0], [1.0, 1.0])
        assert np.allclose(p.coefficients, [1.0, 0.0], atol=1e-12)

    def test_even_fit(self):
        p = vandermonde_solve([0.0, -0.1, 0.1], [1.0, 1.01, 1.01])
        assert np.allclose(p.coefficients, [1.0, 0.0, 1.0], atol=1e-9)

    def test_duplicate_nodes(self):
        with pytest.raises(NumericalError, match="duplicate"):
            vandermonde_solve([0.0, 0.1, 0.1], [1.0, 2.0, 3.0])

    def test_clustered_nodes_error_mentions_spread(self):
        nodes = [0.0, 1e-13, 2e-13, 3e-13, 4e-13, 5e-13, 6e-13, 7e-13]
        with pytest.raises(NumericalError, match="spread"):
            vandermonde_solve(nodes, np.ones(8))

    def test_solve_evaluate_round_trip(self, gen):
        for _ in range(300):
            deg = int(gen.integers(0, 7))
            coeffs = gen.uniform(-3, 3, size=deg + 1)
            poly = Polynomial(coeffs)
            nodes = np.sort(gen.uniform(-0.4, 0.4, size=deg + 1))
            if np.unique(nodes).size != nodes.size:
                continue
            rec = vandermonde_solve(nodes, poly(nodes))
            assert np.allclose(rec.coefficients, coeffs,
                               rtol=1e-7, atol=1e-7 * max(1, np.max(np.abs(coeffs))))


class TestRealPolyRoots:
    def test_factored_quadratic(self):
        roots = real_poly_roots(Polynomial([1.0, -3.0, 2.0]), 1e-8)
        assert np.allclose(roots, [1.0, 0.5], atol=1e-12)

    def test_linear(self):
        assert np.allclose(real_poly_roots(Polynomial([1.0, -1.0]), 1e-8), [1.0])

    def test_cubic_product(self):
        # prod_{k=1..3} (1 - k x)
        p = Polynomial([1.0, -6.0, 11.0, -6.0])
        roots = real_poly_roots(p, 1e-8)
        assert np.allclose(roots, [1.0, 0.5, 1.0 / 3.0], atol=1e-10)

    def test_complex_pair_rejected(self):
        with pytest.raises(NumericalError, match="complex"):
            real_poly_roots(Polynomial([1.0, 0.0, 1.0]), 1e-8)

    def test_identically_zero(self):
        with pytest.raises(NumericalError):
            real_poly_roots(Polynomial([0.0]), 1e-8)

    def test_degree_deficiency_trims(self):
        # trailing coefficient far below tolerance behaves as absent
        p = Polynomial([1.0, -1.0, 1e-15])
        roots = real_poly_roots(p, 1e-8)
        assert roots.size == 1
        assert roots[0] == pytest.approx(1.0, abs=1e-9)

    def test_roots_reconstruct_polynomial(self, gen):
        for _ in range(200):
            lams = gen.uniform(-3, 3, size=int(gen.integers(1, 5)))
            coeffs = np.array([1.0])
            for lam in lams:
                coeffs = np.convolve(coeffs, [1.0, -lam])
            p = Polynomial(coeffs)
            roots = real_poly_roots(p, 1e-6)
            lead = p.trimmed().coefficients[-1]
            xs = np.linspace(-0.3, 0.3, 21)
            rebuilt = lead * np.prod([xs - r for r in roots], axis=0)
            assert np.max(np.abs(rebuilt - p(xs))) <= 1e-6 * max(1, np.max(np.abs(coeffs)))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6),
       st.integers(0, 2 ** 32 - 1))
def test_interpolation_honors_contract(coeffs, seed):
    gen = np.random.default_rng(seed)
    coeffs = np.asarray(coeffs)
    nodes = np.linspace(-0.4, 0.4, coeffs.size) + gen.uniform(-0.01, 0.01, coeffs.size)
    if np.unique(nodes).size != nodes.size:
        return
    values = Polynomial(coeffs)(nodes)
    p = vandermonde_solve(nodes, values)
    assert np.all(np.abs(p(nodes) - values) <= 1e-8 * np.maximum(1.0, np.abs(values)))

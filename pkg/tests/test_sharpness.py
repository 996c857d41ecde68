import math

import numpy as np
import pytest

from sharpness_lab import (CharPoly, Determinant, Frobenius, Moment,
                           NumericalError, QuadraticLoss, SeededStream,
                           SymmetricMatrix, Trace, estimate_R, estimate_S,
                           estimate_S_from_samples, measure_exact, pseudo_det,
                           quadratic_form_batch, regularizer_gradient,
                           symmetric_eig)
from sharpness_lab.sharpness import (_moment_exact, draw_component_samples,
                                     psi_exp_neg, psi_exp_scaled)
from conftest import random_with_spectrum


def spectrum_of(diag):
    return symmetric_eig(SymmetricMatrix(np.diag(diag)))


def quad_oracle(m: SymmetricMatrix):
    return lambda vs: quadratic_form_batch(m, vs)


class TestMeasureExact:
    def test_trace_saddle_spectrum(self):
        assert measure_exact(spectrum_of([1.0, -1.0]), Trace()) == 0.0

    def test_frobenius(self):
        assert measure_exact(spectrum_of([1.0, -1.0]), Frobenius()) == 2.0

    def test_determinant(self):
        assert measure_exact(spectrum_of([2.0, 3.0]), Determinant(5.0)) == 6.0

    def test_determinant_rejects_negative_spectrum(self):
        with pytest.raises(NumericalError, match="-1"):
            measure_exact(spectrum_of([1.0, -1.0]), Determinant(5.0))

    def test_charpoly(self):
        assert measure_exact(spectrum_of([1.0, -1.0]), CharPoly(0.5)) == pytest.approx(0.75)

    def test_charpoly_domain(self):
        with pytest.raises(NumericalError, match="lambda"):
            measure_exact(spectrum_of([3.0, 1.0]), CharPoly(0.5))

    def test_moment2_gaussian(self):
        # (3/4) sum l^2 + (1/4) sum_{i != j} l_i l_j at l = (1,1,1)
        val = measure_exact(spectrum_of([1.0, 1.0, 1.0]), Moment(2, "gaussian"))
        assert val == pytest.approx(0.75 * 3 + 0.25 * 6)

    def test_moment1_matches_trace_scaling(self, gen):
        lam = gen.uniform(-2, 2, size=4)
        sphere = _moment_exact(lam, 1, "sphere")
        assert sphere == pytest.approx(np.sum(lam) / (2 * 4), rel=1e-12)
        gauss = _moment_exact(lam, 1, "gaussian")
        assert gauss == pytest.approx(np.sum(lam) / 2, rel=1e-12)

    def test_moment2_sphere_closed_form(self, gen):
        lam = gen.uniform(-2, 2, size=3)
        d = 3
        expect = (3 * np.sum(lam ** 2) + (np.sum(lam) ** 2 - np.sum(lam ** 2))) / (
            4 * d * (d + 2))
        assert _moment_exact(lam, 2, "sphere") == pytest.approx(expect, rel=1e-12)

    def test_frobenius_population_identity(self, gen):
        # 2 (E[Y^2] - E[Y]^2) with Y = 0.5 v^T H v under the Gaussian
        lam = gen.uniform(-3, 3, size=5)
        m1 = _moment_exact(lam, 1, "gaussian")
        m2 = _moment_exact(lam, 2, "gaussian")
        assert 2 * (m2 - m1 ** 2) == pytest.approx(np.sum(lam ** 2), rel=1e-10)

    def test_pseudo_det(self):
        assert pseudo_det(spectrum_of([2.0, 0.0, 3.0])) == pytest.approx(6.0)
        assert pseudo_det(spectrum_of([0.0, 0.0])) == 1.0


class TestEstimateS:
    def test_trace_saddle_near_zero(self):
        m = SymmetricMatrix(np.diag([1.0, -1.0]))
        est = estimate_S(quad_oracle(m), Trace().spec(2), SeededStream(4), 10 ** 5)
        assert abs(est.value) <= 3 * est.stderr

    def test_zero_matrix_exact(self):
        m = SymmetricMatrix(np.zeros((2, 2)))
        spec = Determinant(1.5).spec(2)
        est = estimate_S(quad_oracle(m), spec, SeededStream(1), 100)
        assert est.value == pytest.approx((2 * math.pi) ** 2 / 3.0 ** 4, rel=1e-12)
        est2 = estimate_S(quad_oracle(m), CharPoly(0.3).spec(2), SeededStream(1), 100)
        assert est2.value == pytest.approx(1.0, rel=1e-12)

    def test_frobenius_within_stderr(self):
        m = SymmetricMatrix(np.diag([2.0, 1.0]))
        est = estimate_S(quad_oracle(m), Frobenius().spec(2), SeededStream(8), 10 ** 6)
        assert abs(est.value - 5.0) <= 3 * est.stderr

    def test_needs_two_samples(self):
        m = SymmetricMatrix(np.eye(2))
        with pytest.raises(ValueError):
            estimate_S(quad_oracle(m), Trace().spec(2), SeededStream(0), 1)

    def test_stderr_calibration(self, gen):
        # pooled z-scores should look standard normal
        m = random_with_spectrum(gen, np.array([1.5, -0.5, 0.3]))
        exact = measure_exact(symmetric_eig(m), Trace())
        zs = []
        for seed in range(60):
            est = estimate_S(quad_oracle(m), Trace().spec(3), SeededStream(seed), 4000)
            zs.append((est.value - exact) / est.stderr)
        zs = np.array(zs)
        assert abs(np.mean(zs)) <= 0.5
        assert 0.6 <= np.std(zs) <= 1.6

    def test_exp_overflow_is_hard_error(self):
        m = SymmetricMatrix(np.diag([-2000.0, -2000.0]))
        spec = Determinant(2.0).spec(2)
        with pytest.raises(NumericalError, match="overflow"):
            estimate_S(quad_oracle(m), spec, SeededStream(0), 100)

    def test_psi_exp_guards(self):
        with pytest.raises(NumericalError):
            psi_exp_neg().fn(np.array([-800.0]))
        with pytest.raises(NumericalError):
            psi_exp_scaled(2.0).fn(np.array([400.0]))
        assert psi_exp_neg().fn(np.array([800.0])) == pytest.approx(0.0)


class TestEstimateR:
    def test_bit_identical_to_S_at_quadratic_center(self):
        h = SymmetricMatrix([[1.2, 0.4], [0.4, 2.0]])
        loss = QuadraticLoss(h)
        for preset in (Trace(), Frobenius(), CharPoly(0.2), Determinant(1.0)):
            spec = preset.spec(2)
            # rho a power of two keeps the scaling exact in floating point
            for rho in (0.5, 0.25):
                s = estimate_S(quad_oracle(h), spec, SeededStream(3), 500)
                r = estimate_R(loss, np.zeros(2), spec, rho, SeededStream(3), 500)
                assert r.value == s.value

    def test_constant_shift_invariance(self):
        h = SymmetricMatrix(np.diag([1.0, 2.0]))

        class Shifted(QuadraticLoss):
            def value(self, x):
                return super().value(x) + 5.0

            def value_batch(self, xs):
                return super().value_batch(xs) + 5.0

        spec = Trace().spec(2)
        x = np.array([0.3, -0.1])
        a = estimate_R(QuadraticLoss(h), x, spec, 0.1, SeededStream(9), 2000)
        b = estimate_R(Shifted(h), x, spec, 0.1, SeededStream(9), 2000)
        assert b.value == pytest.approx(a.value, rel=1e-9, abs=1e-9)

    def test_deterministic(self):
        from sharpness_lab import ScaleInvToy
        loss = ScaleInvToy()
        spec = Trace().spec(2)
        args = (loss, np.array([1.0, 1.0]), spec, 0.1, SeededStream(7), 5000)
        assert estimate_R(*args).value == estimate_R(*args).value

    def test_rejects_nonpositive_rho(self):
        loss = QuadraticLoss(SymmetricMatrix(np.eye(2)))
        with pytest.raises(ValueError):
            estimate_R(loss, np.zeros(2), Trace().spec(2), 0.0, SeededStream(0), 10)


class TestRegularizerGradient:
    def test_constant_loss_gives_zero(self):
        loss = QuadraticLoss(SymmetricMatrix(np.zeros((2, 2))))
        g = regularizer_gradient(loss, np.array([0.5, 0.5]), Trace().spec(2),
                                 0.1, SeededStream(2), 64)
        assert np.array_equal(g, np.zeros(2))

    def test_trace_spec_zero_mean_on_quadratic(self):
        h = SymmetricMatrix([[1.0, 0.3], [0.3, 0.7]])
        loss = QuadraticLoss(h)
        x = np.array([0.8, -0.2])
        outs = np.stack([
            regularizer_gradient(loss, x, Trace().spec(2), 0.05,
                                 SeededStream(seed), 8)
            for seed in range(200)])
        se = outs.std(axis=0, ddof=1) / math.sqrt(len(outs))
        assert np.all(np.abs(outs.mean(axis=0)) <= 4 * se)

    def test_matches_printed_m1_update(self, gen):
        # reference transcription of the m = 1 update formula
        from sharpness_lab import ScaleInvToy
        from sharpness_lab.measures import UnitSphereUniform, sample

        loss = ScaleInvToy()
        x = np.array([1.2, 0.7])
        rho, n = 0.05, 32
        spec = Trace().spec(2)
        stream = SeededStream(13)
        got = regularizer_gradient(loss, x, spec, rho, stream, n)

        batch = sample(UnitSphereUniform(2), stream.at(component=0), n)
        args = np.array([(loss.value(x + rho * v) - loss.value(x)) / rho ** 2
                         for v in batch.points])
        phi_prime = 1.0  # identity phi
        inner = np.zeros(2)
        for i, v in enumerate(batch.points):
            psi_prime = 1.0  # identity psi
            inner += (1.0 / n) * psi_prime * (loss.grad(x + rho * v) - loss.grad(x))
        expected = phi_prime * inner
        assert np.allclose(got, expected, rtol=1e-12, atol=1e-15)


class TestCoupledInvariance:
    def test_rescaling_identity_hypercube(self, gen):
        from sharpness_lab import ScaleInvToy
        loss = ScaleInvToy()
        spec = Determinant(1.0).spec(2)
        for trial in range(5):
            x = gen.uniform(0.5, 1.5, size=2)
            k = float(gen.uniform(0.5, 2.0))
            d = np.diag([k, 1.0 / k])
            d_inv = np.diag([1.0 / k, k])
            h_x = loss.exact_hessian(x)
            h_dx = loss.exact_hessian(d @ x)
            batches = draw_component_samples(spec, SeededStream(trial), 2000)
            at_dx = estimate_S_from_samples(quad_oracle(h_dx), spec, batches)
            at_x = estimate_S_from_samples(quad_oracle(h_x), spec,
                                           [b.transformed(d_inv) for b in batches])
            assert abs(at_dx.value - at_x.value) <= 1e-10

    def test_rotation_identity_gaussian(self, gen):
        from sharpness_lab import RotInvToy
        loss = RotInvToy(2)
        spec = Frobenius().spec(2)
        theta = math.radians(30.0)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        x = gen.uniform(-1, 1, size=2)
        h_x = loss.exact_hessian(x)
        h_rx = loss.exact_hessian(rot @ x)
        batches = draw_component_samples(spec, SeededStream(31), 2000)
        at_rx = estimate_S_from_samples(quad_oracle(h_rx), spec, batches)
        at_x = estimate_S_from_samples(quad_oracle(h_x), spec,
                                       [b.transformed(rot.T) for b in batches])
        assert abs(at_rx.value - at_x.value) <= 1e-10


class TestOracleEstimatorAgreement:
    def test_probability_presets(self, gen):
        presets = [Trace(), Frobenius(), Moment(2, "gaussian")]
        for trial in range(6):
            d = int(gen.integers(2, 5))
            lam = gen.uniform(-2, 2, size=d)
            m = random_with_spectrum(gen, lam)
            spectrum = symmetric_eig(m)
            sigma = 1.0 / (2 * (np.max(np.abs(lam)) + 1.0))
            for preset in presets + [CharPoly(float(sigma))]:
                exact = measure_exact(spectrum, preset)
                est = estimate_S(quad_oracle(m), preset.spec(d),
                                 SeededStream(100 + trial), 200_000)
                assert abs(est.value - exact) <= 4 * est.stderr, type(preset).__name__

    def test_determinant_truncated(self, gen):
        for trial in range(3):
            lam = gen.uniform(1.0, 3.0, size=2)
            m = random_with_spectrum(gen, lam)
            exact = measure_exact(symmetric_eig(m), Determinant(5.0))
            est = estimate_S(quad_oracle(m), Determinant(5.0).spec(2),
                             SeededStream(50 + trial), 10 ** 6)
            assert abs(est.value - exact) <= 4 * est.stderr

    def test_determinant_value_path_against_grid_quadrature(self):
        # zeroth-order route at the quadratic's center, checked against a
        # brute-force grid evaluation of the truncated Gaussian integral
        t, n = 5.0, 10 ** 6
        h = SymmetricMatrix(np.diag([1.0, 2.0]))
        loss = QuadraticLoss(h)
        spec = Determinant(t).spec(2)
        est = estimate_R(loss, np.zeros(2), spec, 0.5, SeededStream(71), n)

        xs = np.linspace(-t, t, 200_001)
        i1 = np.trapezoid(np.exp(-0.5 * xs ** 2), xs)
        i2 = np.trapezoid(np.exp(-1.0 * xs ** 2), xs)
        s_grid = (2 * math.pi) ** 2 / (i1 * i2) ** 2

        assert abs(est.value - s_grid) <= 4 * est.stderr
        assert abs(est.value - 2.0) <= 0.15 * 2.0

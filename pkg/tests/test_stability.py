import math

import numpy as np
import pytest

from bsrd.kinetics import (
    CouplingParams,
    DiffusionParams,
    JacobianBlocks,
    KineticParams,
    jacobian_at,
    steady_state,
)
from bsrd.stability import (
    Regime,
    StabilityPreconditionError,
    classify_regime,
    critical_diffusion,
    dispersion_scan,
    quartic_coeffs,
    quartic_factors,
    report_to_csv,
    report_to_text,
    routh_hurwitz,
    solve_quadratic,
)

TABLE_COUPLING = CouplingParams(alpha1=5.0 / 12.0, alpha2=5.0, beta1=5.0 / 12.0,
                                beta2=0.0, kappa1=0.0, kappa2=5.0)


def blocks(jb, js):
    return JacobianBlocks(j_bulk=np.asarray(jb, float),
                          j_surf=np.asarray(js, float),
                          j_cross=np.zeros((2, 2)))


def random_blocks(rng):
    return blocks(rng.uniform(-5, 5, (2, 2)), rng.uniform(-5, 5, (2, 2)))


class TestSolveQuadratic:
    def test_distinct_real(self):
        r1, r2 = solve_quadratic(-3.0, 2.0)   # x^2 - 3x + 2
        assert sorted([r1.real, r2.real]) == [1.0, 2.0]

    def test_cancellation_resistant(self):
        # roots -1e8 and -1e-8: the naive formula loses the small root
        r = sorted(solve_quadratic(1e8 + 1e-8, 1.0), key=lambda z: abs(z))
        assert r[0].real == pytest.approx(-1e-8, rel=1e-12)
        assert r[1].real == pytest.approx(-1e8, rel=1e-12)

    def test_complex_pair(self):
        r1, r2 = solve_quadratic(2.0, 5.0)    # (x+1)^2 + 4
        assert r1 == pytest.approx(-1.0 + 2.0j)
        assert r2 == pytest.approx(-1.0 - 2.0j)


class TestQuarticCoeffs:
    def test_identity_blocks(self):
        qc = quartic_coeffs(blocks(-np.eye(2), -np.eye(2)))
        assert (qc.a1, qc.a2, qc.a3, qc.a4) == (4.0, 6.0, 4.0, 1.0)

    def test_reference_blocks(self):
        jb = [[400.0, 500.0], [-900.0, -500.0]]
        qc = quartic_coeffs(blocks(jb, jb))
        assert qc.a1 == pytest.approx(200.0)
        assert qc.a4 == pytest.approx(6.25e10)

    def test_zero_blocks(self):
        qc = quartic_coeffs(blocks(np.zeros((2, 2)), np.zeros((2, 2))))
        assert (qc.a1, qc.a2, qc.a3, qc.a4) == (0.0, 0.0, 0.0, 0.0)


class TestQuarticFactors:
    def test_identity_blocks_expand_to_coeffs(self):
        fb, fs = quartic_factors(blocks(-np.eye(2), -np.eye(2)))
        expanded = np.polymul(fb, fs)
        np.testing.assert_allclose(expanded, [1.0, 4.0, 6.0, 4.0, 1.0])

    def test_expansion_matches_coeffs_randomly(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            j = random_blocks(rng)
            qc = quartic_coeffs(j)
            expanded = np.polymul(*quartic_factors(j))
            expected = qc.as_array()
            scale = np.abs(expected) + 1.0
            assert np.max(np.abs(expanded - expected) / scale) < 1e-12

    def test_singular_surface_block(self):
        j = blocks([[1.0, 2.0], [3.0, 4.0]], np.zeros((2, 2)))
        _, fs = quartic_factors(j)
        np.testing.assert_array_equal(fs, [1.0, 0.0, 0.0])
        assert quartic_coeffs(j).a4 == 0.0
        assert routh_hurwitz(j).zero_root_marginal


class TestRouthHurwitz:
    def test_identity_blocks_stable(self):
        report = routh_hurwitz(blocks(-np.eye(2), -np.eye(2)))
        assert report.all_conditions_hold
        assert report.max_real_eigenvalue == pytest.approx(-1.0)

    def test_stable_spiral_blocks(self):
        spiral = [[0.0, 1.0], [-1.0, -1.0]]     # lambda^2 + lambda + 1
        report = routh_hurwitz(blocks(spiral, spiral))
        assert report.all_conditions_hold
        assert report.max_real_eigenvalue == pytest.approx(-0.5)

    def test_reference_point_condition4_matches_sign_test(self):
        p = KineticParams(0.1, 0.9, 500.0, 500.0)
        j = jacobian_at(p, TABLE_COUPLING, steady_state(p).as_tuple())
        report = routh_hurwitz(j)
        assert report.cond4.holds == (report.det_bulk * report.det_surf > 0)
        # Sign of the leading eigenvalue must match the condition suite.
        assert report.all_conditions_hold == (report.max_real_eigenvalue < 0)

    def test_minor_identities(self):
        # cond5 equals 2*(a1*a2 - a3); cond6 equals a3*(a1*a2 - a3) - a1^2*a4.
        rng = np.random.default_rng(5)
        for _ in range(300):
            j = random_blocks(rng)
            qc = quartic_coeffs(j)
            report = routh_hurwitz(j)
            minor2 = qc.a1 * qc.a2 - qc.a3
            minor3 = qc.a3 * minor2 - qc.a1 ** 2 * qc.a4
            assert report.cond5.value == pytest.approx(2.0 * minor2, rel=1e-9,
                                                       abs=1e-9)
            assert report.cond6.value == pytest.approx(minor3, rel=1e-9,
                                                       abs=1e-9)

    def test_equivalence_with_spectrum(self):
        rng = np.random.default_rng(2024)
        tested = 0
        while tested < 1000:
            j = random_blocks(rng)
            if abs(quartic_coeffs(j).a4) < 1e-6:
                continue
            report = routh_hurwitz(j)
            if abs(report.max_real_eigenvalue) < 1e-8:
                continue
            tested += 1
            assert report.all_conditions_hold == (report.max_real_eigenvalue < 0)


class TestCriticalDiffusion:
    # Unit-scale derivatives of the reference kinetics at steady state.
    FU, FV, GU, GV = 0.8, 1.0, -1.8, -1.0

    def test_closed_form_root(self):
        d_c = critical_diffusion(self.FU, self.FV, self.GU, self.GV)
        expected = (5.6 + math.sqrt(28.8)) / 1.28
        assert d_c == pytest.approx(expected, abs=1e-12)
        assert d_c == pytest.approx(8.5676, abs=1e-3)

    def test_rounded_reference_value(self):
        d_c = critical_diffusion(self.FU, self.FV, self.GU, self.GV)
        assert abs(d_c - 8.5) < 0.1

    def test_bisection_oracle(self):
        # Independent oracle: bisect the sign change of the discriminant
        # (d*fu + gv)^2 - 4 d (fu*gv - fv*gu) right of its negative dip.
        def disc(d):
            det = self.FU * self.GV - self.FV * self.GU
            return (d * self.FU + self.GV) ** 2 - 4.0 * d * det

        lo, hi = 4.0, 100.0
        assert disc(lo) < 0 < disc(hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if disc(mid) < 0:
                lo = mid
            else:
                hi = mid
        d_c = critical_diffusion(self.FU, self.FV, self.GU, self.GV)
        assert d_c == pytest.approx(0.5 * (lo + hi), abs=1e-6)

    def test_discriminant_sign_flip_at_threshold(self):
        d_c = critical_diffusion(self.FU, self.FV, self.GU, self.GV)
        det = self.FU * self.GV - self.FV * self.GU

        def disc(d):
            return (d * self.FU + self.GV) ** 2 - 4.0 * d * det

        assert disc(d_c * (1 - 1e-6)) < 0 < disc(d_c * (1 + 1e-6))
        assert d_c * self.FU + self.GV > 0

    def test_infinite_threshold_for_nonpositive_activator(self):
        assert critical_diffusion(-0.5, 1.0, -1.0, -0.5) == math.inf

    def test_preconditions(self):
        with pytest.raises(StabilityPreconditionError, match="trace"):
            critical_diffusion(1.0, 1.0, -1.0, 1.0)
        with pytest.raises(StabilityPreconditionError, match="determinant"):
            critical_diffusion(0.5, 2.0, 2.0, -1.0)


def unit_scale_blocks():
    p = KineticParams(0.1, 0.9, 1.0, 1.0)
    return jacobian_at(p, CouplingParams.zero(), steady_state(p).as_tuple())


class TestDispersionScan:
    def test_zero_mode_reduces_to_homogeneous_quadratics(self):
        j = unit_scale_blocks()
        p = KineticParams(0.1, 0.9, 500.0, 500.0)
        d = DiffusionParams(1.0, 20.0)
        table = dispersion_scan(j, d, p, 3)
        row = table.rows[0]
        # At l = 0 the branch quadratics are those of the scaled Jacobian.
        scaled = jacobian_at(p, CouplingParams.zero(),
                             steady_state(p).as_tuple())
        fb, fs = quartic_factors(scaled)
        roots_b = sorted(np.roots(fb), key=lambda z: (z.real, z.imag))
        got_b = sorted(row.lambda_bulk, key=lambda z: (z.real, z.imag))
        np.testing.assert_allclose(got_b, roots_b, rtol=1e-9)

    def test_unstable_band_modes(self):
        j = unit_scale_blocks()
        p = KineticParams(0.1, 0.9, 500.0, 500.0)
        table = dispersion_scan(j, DiffusionParams(1.0, 20.0), p, 50)
        assert table.unstable_surface_modes() == list(range(6, 18))
        assert table.unstable_bulk_modes() == []

    def test_band_endpoints_bracket_modes(self):
        # Det < 0 exactly inside ((375 - sqrt(90625))/2, (375 + sqrt(90625))/2).
        lo = (375.0 - math.sqrt(90625.0)) / 2.0
        hi = (375.0 + math.sqrt(90625.0)) / 2.0
        for l in range(0, 51):
            k2 = l * (l + 1)
            det = 20.0 * k2 ** 2 - 500.0 * 15.0 * k2 + 500.0 ** 2
            assert (det < 0) == (lo < k2 < hi)
            assert (det < 0) == (6 <= l <= 17)

    def test_equal_diffusion_stable_for_all_modes(self):
        j = unit_scale_blocks()
        p = KineticParams(0.1, 0.9, 500.0, 500.0)
        table = dispersion_scan(j, DiffusionParams(1.0, 1.0), p, 50)
        assert all(row.max_re_bulk < 0 and row.max_re_surf < 0
                   for row in table.rows)

    def test_root_residuals(self):
        j = unit_scale_blocks()
        p = KineticParams(0.1, 0.9, 500.0, 500.0)
        table = dispersion_scan(j, DiffusionParams(1.0, 20.0), p, 30)
        for row in table.rows:
            k2 = row.k2
            tr = 21.0 * k2 + 100.0
            det = 20.0 * k2 ** 2 - 7500.0 * k2 + 250000.0
            for lam in row.lambda_surf:
                residual = lam * lam + tr * lam + det
                scale = max(1.0, abs(tr) * abs(lam), abs(det), abs(lam) ** 2)
                assert abs(residual) <= 1e-9 * scale

    def test_single_interval_band(self):
        # Det(M) is an upward parabola in k^2, so the unstable k^2 form one
        # open interval; the flagged modes must be contiguous in l.
        j = unit_scale_blocks()
        p = KineticParams(0.1, 0.9, 500.0, 500.0)
        for d_surf in (10.0, 20.0, 40.0):
            table = dispersion_scan(j, DiffusionParams(1.0, d_surf), p, 50)
            modes = table.unstable_surface_modes()
            if modes:
                assert modes == list(range(modes[0], modes[-1] + 1))

    def test_scale_property(self):
        # (gamma, k^2) -> (c gamma, c k^2) leaves the sign pattern invariant:
        # Det scales by c^2 and Tr by c.
        fu, fv, gu, gv = 0.8, 1.0, -1.8, -1.0
        det = fu * gv - fv * gu
        rng = np.random.default_rng(9)
        for _ in range(200):
            gamma = rng.uniform(10.0, 1000.0)
            k2 = rng.uniform(0.0, 500.0)
            c = rng.uniform(0.1, 10.0)
            d = 20.0

            def det_m(g, kk):
                return d * kk ** 2 - g * (d * fu + gv) * kk + g * g * det

            def tr_m(g, kk):
                return (d + 1.0) * kk - g * (fu + gv)

            assert det_m(c * gamma, c * k2) == pytest.approx(
                c * c * det_m(gamma, k2), rel=1e-12)
            assert tr_m(c * gamma, c * k2) == pytest.approx(
                c * tr_m(gamma, k2), rel=1e-12)

    def test_csv_writer(self, tmp_path):
        j = unit_scale_blocks()
        p = KineticParams(0.1, 0.9, 500.0, 500.0)
        table = dispersion_scan(j, DiffusionParams(1.0, 20.0), p, 10)
        path = tmp_path / "disp.csv"
        table.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 12  # header + 11 modes

    def test_negative_lmax_rejected(self):
        with pytest.raises(ValueError):
            dispersion_scan(unit_scale_blocks(), DiffusionParams(1.0, 1.0),
                            KineticParams(0.1, 0.9, 1.0, 1.0), -1)


class TestClassifyRegime:
    def p(self, gamma=500.0):
        return KineticParams(0.1, 0.9, gamma, gamma)

    def test_reference_point_is_homogeneous_unstable_when_coupled(self):
        analysis = classify_regime(self.p(), TABLE_COUPLING,
                                   DiffusionParams(1.0, 1.0))
        # Oracle: the coupled surface determinant is negative, so a positive
        # real eigenvalue exists and the condition suite must fail.
        assert analysis.coupled.max_real_eigenvalue > 0
        assert not analysis.coupled.all_conditions_hold
        assert analysis.regime == Regime.HOMOGENEOUS_UNSTABLE
        # Both instability pairs fail at unit diffusion ratios.
        assert not analysis.uncoupled.turing_bulk.holds
        assert not analysis.uncoupled.turing_surf.holds
        assert analysis.predicted_pattern_regime == Regime.NO_PATTERN

    def test_prediction_grid(self):
        expectations = {
            (1.0, 1.0): Regime.NO_PATTERN,
            (1.0, 20.0): Regime.SURFACE_ONLY,
            (20.0, 1.0): Regime.BULK_ONLY,
            (20.0, 20.0): Regime.BOTH,
        }
        for (db, ds), expected in expectations.items():
            analysis = classify_regime(self.p(), TABLE_COUPLING,
                                       DiffusionParams(db, ds))
            assert analysis.predicted_pattern_regime == expected

    def test_surface_pair_variants(self):
        analysis = classify_regime(self.p(), TABLE_COUPLING,
                                   DiffusionParams(1.0, 20.0))
        assert analysis.uncoupled.turing_surf.holds
        assert not analysis.uncoupled.turing_bulk.holds

    def test_critical_diffusion_fields(self):
        analysis = classify_regime(self.p(), TABLE_COUPLING,
                                   DiffusionParams(1.0, 20.0))
        assert analysis.d_crit_bulk == pytest.approx(8.567627457812, rel=1e-9)
        assert analysis.d_crit_surf_uncoupled == pytest.approx(
            8.567627457812, rel=1e-9)
        assert analysis.d_crit_surf is None  # coupled block not Turing-capable

    def test_incompatible_coupling_rejected(self):
        bad = CouplingParams(alpha1=0.1, alpha2=5.0, beta1=0.3, beta2=0.0,
                             kappa1=0.0, kappa2=5.0)
        with pytest.raises(ValueError, match="boundary conditions"):
            classify_regime(self.p(), bad, DiffusionParams(1.0, 1.0))

    def test_degenerate_scale_rejected(self):
        with pytest.raises(ValueError, match="scale factors"):
            classify_regime(KineticParams(0.1, 0.9, 0.0, 0.0), TABLE_COUPLING,
                            DiffusionParams(1.0, 1.0))

    def test_report_serialization(self, tmp_path):
        analysis = classify_regime(self.p(), TABLE_COUPLING,
                                   DiffusionParams(1.0, 20.0))
        text = report_to_text(analysis)
        assert "8.567627" in text
        assert "SurfaceOnly" in text
        path = tmp_path / "report.csv"
        report_to_csv(analysis, path)
        lines = path.read_text().strip().splitlines()
        # header + 2 variants * (6 conditions + 2 pairs * 2 rows + 1 eig row)
        # + 2 regime rows
        assert len(lines) == 1 + 2 * 11 + 2

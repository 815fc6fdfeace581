import csv
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rootflow import quaternion as quat
from rootflow.diffeo import CircleRotation
from rootflow.fields import CircleFourier, ConstantCircle, LeftInvariantS3, Sampled
from rootflow.flow import (
    ConvergenceError,
    FlowApprox,
    RoundTripSettings,
    UnreachableTimeError,
    export_field_csv,
    export_trajectory_csv,
    extract_field,
    extract_field_grid,
    rational_time,
    richardson,
    round_trip_check,
    time_second_differences,
    trajectory,
    verify_eval_real,
    verify_flow_axioms,
)
from rootflow.manifold import Circle, Sphere3
from rootflow.rootsystem import RootSystem, identity_family, quat_sqrt_chain, roots_from_field, rotation_family

C, S = Circle(), Sphere3()
PERTURBED = CircleFourier(np.pi, sin=[0.3])


@pytest.fixture(scope="module")
def rot():
    return FlowApprox(rotation_family(np.pi, 20))


@pytest.fixture(scope="module")
def chain():
    return FlowApprox(quat_sqrt_chain(quat.I, 20))


@pytest.fixture(scope="module")
def perturbed():
    return FlowApprox(roots_from_field(PERTURBED, 12))


class TestRationalTime:
    def test_forms(self):
        assert rational_time((6, 8)) == Fraction(3, 4)
        assert rational_time("3/4") == Fraction(3, 4)
        assert rational_time(2) == Fraction(2)

    def test_bad_denominator(self):
        with pytest.raises(ValueError):
            rational_time((1, 0))


class TestEvalRational:
    def test_three_quarters(self, rot):
        assert rot.eval_rational(Fraction(3, 4), 0.0) == pytest.approx(3 * np.pi / 4)

    def test_zero_is_identity_bitwise(self, rot, chain, circle_grid, sphere_grid):
        assert np.array_equal(rot.eval_rational(0, circle_grid), circle_grid)
        assert np.array_equal(chain.eval_rational(0, sphere_grid), S.canonicalize(sphere_grid))

    def test_half_on_chain(self, chain):
        assert np.allclose(chain.eval_rational(Fraction(1, 2), quat.ONE), quat.I, atol=1e-15)

    def test_coherent_routes_agree(self, rot, circle_grid):
        direct = rot.power_map(4, 3).apply(circle_grid)
        via = rot.power_map(16, 12).apply(circle_grid)
        assert np.max(C.distance(direct, via)) <= 1e-12 * 16

    def test_unreachable_denominator(self):
        fa = FlowApprox(quat_sqrt_chain(quat.J, 6))
        with pytest.raises(UnreachableTimeError, match="eval_real"):
            fa.eval_rational(Fraction(1, 3), quat.ONE)

    def test_divisor_route(self):
        rs = RootSystem(CircleRotation(1.0), {4: CircleRotation(0.25), 8: CircleRotation(0.125)})
        assert FlowApprox(rs).eval_rational(Fraction(1, 2), 0.0) == pytest.approx(0.5)


class TestEvalReal:
    def test_third(self, rot):
        x, err = rot.eval_real(1 / 3, 0.0, tol=1e-9)
        assert abs(x - np.pi / 3) <= 1e-9
        assert err <= 1e-9

    def test_one_is_target_exactly(self, rot, circle_grid):
        x, err = rot.eval_real(1.0, circle_grid)
        assert np.array_equal(x, CircleRotation(np.pi).apply(circle_grid))
        assert err == 0.0

    def test_dyadic_exact(self, chain):
        x, err = chain.eval_real(0.25, quat.ONE)
        assert err == 0.0
        assert np.allclose(x, quat.principal_sqrt(quat.I))

    def test_incoherent_system_fails(self):
        fa = FlowApprox(rotation_family(np.pi, 20, perturb={4: 0.05}))
        with pytest.raises(ConvergenceError) as info:
            fa.eval_real(0.5, 0.0)
        assert "non-Cauchy" in str(info.value)
        assert info.value.table and {"level", "time", "difference"} <= set(info.value.table[0])

    def test_non_decreasing_differences_fail(self):
        # every root overshoots by the same angle, so the level values drift apart
        rs = RootSystem(CircleRotation(1.0), {2**c: CircleRotation(1.0 / 2**c + 0.1) for c in range(1, 9)})
        with pytest.raises(ConvergenceError):
            FlowApprox(rs).eval_real(0.3, 0.0)

    def test_report_entry(self, rot, circle_grid):
        assert verify_eval_real(rot, circle_grid).passed
        bad = FlowApprox(rotation_family(np.pi, 20, perturb={4: 0.05}))
        e = verify_eval_real(bad, circle_grid)
        assert not e.passed and "non-Cauchy" in e.error


@given(st.floats(-2.0, 2.0))
def test_eval_real_tracks_rotation_flow(t):
    fa = FlowApprox(rotation_family(1.0, 20))
    x, err = fa.eval_real(t, 0.0, tol=1e-10)
    assert C.distance(x, C.canonicalize(t)) <= 1e-9


class TestFlowAxioms:
    def test_rotation_pair(self, rot, circle_grid):
        e = verify_flow_axioms(rot, circle_grid, pairs=[(Fraction(1, 4), Fraction(1, 2))])
        assert e.residual <= 1e-12 and e.passed

    def test_chain_half_plus_half(self, chain, sphere_grid):
        e = verify_flow_axioms(chain, sphere_grid, pairs=[(Fraction(1, 2), Fraction(1, 2))])
        assert e.residual <= 1e-12

    def test_inverse_pairs(self, rot, circle_grid):
        e = verify_flow_axioms(rot, circle_grid, pairs=[(Fraction(3, 8), Fraction(-3, 8)), (0.4, -0.4)])
        assert e.passed

    def test_default_pairs_on_field_system(self, perturbed, circle_grid):
        e = verify_flow_axioms(perturbed, circle_grid[::8])
        assert e.passed
        assert e.details["identity_at_zero"] == 0.0


@given(st.integers(-16, 16), st.integers(-16, 16))
def test_rational_additivity_on_chain(a, b):
    fa = FlowApprox(quat_sqrt_chain(quat.K, 8))
    grid = S.sample_grid(8, 0)
    t1, t2 = Fraction(a, 16), Fraction(b, 16)
    lhs = fa.eval_rational(t2, fa.eval_rational(t1, grid))
    rhs = fa.eval_rational(t1 + t2, grid)
    assert np.max(S.distance(lhs, rhs)) <= 1e-10 * (abs(a) + abs(b) + abs(a + b) + 1)


class TestExtraction:
    def test_richardson_removes_linear_and_quadratic_error(self):
        h = np.array([1.0, 0.5, 0.25])
        assert richardson(list(3.0 + 2.0 * h + 5.0 * h**2)) == pytest.approx(3.0, abs=1e-13)

    def test_rotation_exact_at_any_depth(self, rot, circle_grid):
        for c in (1, 5, 12):
            assert np.array_equal(extract_field(rot, circle_grid, c, 2), np.full(256, np.pi))

    def test_chain_at_one(self, chain):
        v = extract_field(chain, quat.ONE, 10, 2)
        assert np.allclose(v, np.pi * quat.I, atol=1e-6)

    def test_chain_grid_is_tangent(self, chain, sphere_grid):
        v = extract_field(chain, sphere_grid, 12, 2)
        assert np.max(np.abs(np.sum(v * sphere_grid, axis=1))) <= 1e-12
        assert np.max(np.abs(v - LeftInvariantS3(np.pi * quat.I)(sphere_grid))) <= 1e-6

    def test_perturbed_field_recovered(self, perturbed):
        g = C.sample_grid(128)
        assert np.max(np.abs(extract_field(perturbed, g, 12, 2) - PERTURBED(g))) <= 1e-6

    def test_order_of_extraction_error(self, perturbed):
        g = C.sample_grid(128)
        e10, e11 = (np.max(np.abs(extract_field(perturbed, g, c, 2) - PERTURBED(g))) for c in (10, 11))
        assert 1.8**3 <= e10 / e11 <= 2.2**3

    def test_grid_version_recognizes_constant(self, rot, circle_grid):
        from rootflow.fields import recognize_field

        s = extract_field_grid(rot, circle_grid, 12, 2)
        assert isinstance(s, Sampled)
        rec = recognize_field(s)
        assert isinstance(rec, ConstantCircle) and rec.k == pytest.approx(np.pi, abs=1e-12)

    def test_identity_target_gives_zero_field(self, circle_grid):
        fa = FlowApprox(identity_family(C, 8))
        assert np.array_equal(extract_field(fa, circle_grid, 4, 2), np.zeros(256))

    def test_depth_limit_without_factory(self, circle_grid):
        rs = RootSystem(CircleRotation(1.0), {2**c: CircleRotation(1.0 / 2**c) for c in range(1, 6)})
        with pytest.raises(ValueError):
            extract_field(FlowApprox(rs), circle_grid, 4, 2)

    def test_cut_locus_retry(self, circle_grid):
        # level 1 is a half turn (on the cut locus); extraction moves one level deeper
        v = extract_field(FlowApprox(rotation_family(2 * np.pi, 20)), circle_grid, 0, 2)
        assert np.allclose(v, 2 * np.pi, atol=1e-12)


class TestRoundTrip:
    def test_circle_antipodal(self):
        rs = rotation_family(np.pi, 20)
        assert round_trip_check(rs.target, rs, RoundTripSettings(tol=1e-10)).residual <= 1e-10

    def test_chain_j(self):
        rs = quat_sqrt_chain(quat.J, 20)
        e = round_trip_check(rs.target, rs, RoundTripSettings(resolution=8, tol=1e-6))
        assert e.passed and e.residual <= 1e-6

    def test_wrong_target_fails(self):
        rs = rotation_family(np.pi, 20)
        assert not round_trip_check(CircleRotation(3.0), rs).passed


def test_smoothness_diagnostic_is_small_for_smooth_flow(perturbed):
    # |d^2/dt^2 Psi_t| = |xi' xi| <= 0.3 (pi + 0.3)
    assert time_second_differences(perturbed, C.sample_grid(8), depth=8) <= 0.3 * (np.pi + 0.3) + 1e-3


class TestCsv:
    def test_field_export(self, tmp_path, chain):
        g = S.sample_grid(6, 0)
        path = export_field_csv(S, g, extract_field(chain, g, 12, 2), tmp_path / "f.csv")
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["w", "x", "y", "z", "vw", "vx", "vy", "vz"]
        assert len(rows) == 7
        data = np.array(rows[1:], dtype=float)
        assert np.max(np.abs(np.sum(data[:, :4] * data[:, 4:], axis=1))) <= 1e-10

    def test_trajectory_export(self, tmp_path, rot):
        times = [Fraction(k, 4) for k in range(5)]
        pts = trajectory(rot, C.sample_grid(3), times)
        path = export_trajectory_csv(C, times, pts, tmp_path / "t.csv")
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["t", "index", "theta"]
        assert len(rows) == 1 + 5 * 3
        assert float(rows[-1][2]) == pytest.approx(C.canonicalize(C.sample_grid(3)[2] + np.pi))

    def test_export_is_deterministic(self, tmp_path, rot, circle_grid):
        v = extract_field(rot, circle_grid, 8, 2)
        a = export_field_csv(C, circle_grid, v, tmp_path / "a.csv")
        b = export_field_csv(C, circle_grid, v, tmp_path / "b.csv")
        assert open(a).read() == open(b).read()

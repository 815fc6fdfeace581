from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given

from rootflow import quaternion as quat
from rootflow.diffeo import CircleReflection, CircleRotation, Identity, QuatConjugation
from rootflow.fields import CircleFourier, ConstantCircle, LeftInvariantS3
from rootflow.flow import FlowApprox
from rootflow.manifold import Circle, Sphere3
from rootflow.rootsystem import quat_sqrt_chain, rotation_family
from rootflow.symmetry import (
    AntipodalAxesError,
    IntertwineCase,
    axis_cases,
    check_intertwine,
    conjugating_rotor,
    flow_conjugacy_check,
    left_multiplication_candidate,
    probe_group,
    rotor_family_cases,
    search_scaling,
)
from strategies import imaginary_units

C, S = Circle(), Sphere3()


class TestIntertwine:
    def test_reflection_relates_opposite_rotations(self, circle_grid):
        case = IntertwineCase(CircleReflection(), ConstantCircle(np.pi), ConstantCircle(-np.pi))
        assert check_intertwine(case, circle_grid).residual == 0.0

    def test_identity(self, circle_grid):
        xi = CircleFourier(1.0, sin=[0.2])
        assert check_intertwine(IntertwineCase(Identity(C), xi, xi), circle_grid).residual == 0.0

    def test_conjugation_on_sphere(self, sphere_grid):
        case = axis_cases(quat.I, quat.J)[0]
        assert case.name == "conjugation"
        assert check_intertwine(case, sphere_grid).residual <= 1e-12

    def test_left_multiplication_candidate_is_reported_large(self, sphere_grid):
        case = axis_cases(quat.I, quat.J)[1]
        e = check_intertwine(case, sphere_grid)
        assert e.residual > 1.0 and not e.passed

    def test_wrong_scaling_fails(self, circle_grid):
        case = IntertwineCase(CircleReflection(), ConstantCircle(np.pi), ConstantCircle(-np.pi), k=2.0)
        assert not check_intertwine(case, circle_grid).passed

    def test_positive_k_required(self):
        with pytest.raises(ValueError):
            IntertwineCase(Identity(C), ConstantCircle(1.0), ConstantCircle(1.0), k=0.0)

    def test_one_manifold_required(self):
        with pytest.raises(ValueError):
            IntertwineCase(Identity(C), LeftInvariantS3(np.pi * quat.I), ConstantCircle(1.0))


class TestRotor:
    def test_same_axis(self):
        assert np.allclose(conjugating_rotor(quat.I, quat.I), quat.ONE)

    def test_i_to_j(self):
        r = conjugating_rotor(quat.I, quat.J)
        assert quat.norm(r) == pytest.approx(1.0)
        assert np.allclose(quat.mul(quat.mul(r, quat.I), quat.inv(r)), quat.J, atol=1e-15)

    def test_antipodal_axes(self):
        with pytest.raises(AntipodalAxesError, match="intermediate axis"):
            conjugating_rotor(quat.I, -quat.I)

    def test_non_imaginary_rejected(self):
        with pytest.raises(ValueError):
            conjugating_rotor(quat.ONE, quat.I)


@given(imaginary_units(), imaginary_units())
def test_rotor_identity_holds(q1, q2):
    if np.dot(q1, q2) < -1 + 1e-6:
        return
    r = conjugating_rotor(q1, q2)
    assert np.max(np.abs(quat.mul(quat.mul(r, q1), quat.conj(r)) - q2)) <= 1e-12


@given(imaginary_units(), imaginary_units())
def test_conjugation_intertwines_any_axes(q1, q2):
    if np.dot(q1, q2) < -1 + 1e-6:
        return
    grid = S.sample_grid(16, 0)
    assert check_intertwine(axis_cases(q1, q2)[0], grid).residual <= 1e-12


class TestGroupProbe:
    def test_identity_and_reflection(self, circle_grid):
        base = ConstantCircle(np.pi)
        cases = [IntertwineCase(Identity(C), base, base), IntertwineCase(CircleReflection(), base, ConstantCircle(-np.pi))]
        res = probe_group(cases, circle_grid)
        assert res.closed and res.max_residual == 0.0
        assert len(res.closure_table) == 4

    def test_single_identity(self, circle_grid):
        base = ConstantCircle(1.0)
        res = probe_group([IntertwineCase(Identity(C), base, base)], circle_grid)
        assert res.closed and len(res.closure_table) == 1

    def test_rotor_family(self, sphere_grid):
        res = probe_group(rotor_family_cases(), sphere_grid)
        assert res.max_residual <= 1e-12
        assert len(res.closure_table) == 16

    def test_not_closed(self, sphere_grid):
        res = probe_group(rotor_family_cases(quarter_turns=(0, 1)), sphere_grid)
        assert not res.closed

    def test_reordering_invariant(self, sphere_grid):
        cases = rotor_family_cases()
        a = probe_group(cases, sphere_grid)
        b = probe_group(cases[::-1], sphere_grid)
        assert sorted(r["residual"] for r in a.closure_table) == sorted(r["residual"] for r in b.closure_table)

    def test_entry(self, circle_grid):
        base = ConstantCircle(1.0)
        e = probe_group([IntertwineCase(Identity(C), base, base)], circle_grid).entry()
        assert e.passed and e.label == "closure holds on sample"


class TestFlowConjugacy:
    def test_reflection_between_rotation_systems(self, circle_grid):
        e = flow_conjugacy_check(CircleReflection(), FlowApprox(rotation_family(np.pi)),
                                 FlowApprox(rotation_family(-np.pi)), 1, grid=circle_grid)
        assert e.residual <= 1e-10

    def test_identity(self, circle_grid):
        fa = FlowApprox(rotation_family(1.0))
        assert flow_conjugacy_check(Identity(C), fa, fa, 1, grid=circle_grid).residual == 0.0

    def test_quat_chains(self, sphere_grid):
        P = QuatConjugation(conjugating_rotor(quat.I, quat.J))
        e = flow_conjugacy_check(P, FlowApprox(quat_sqrt_chain(quat.I)), FlowApprox(quat_sqrt_chain(quat.J)),
                                 1, grid=sphere_grid, tol=1e-8)
        assert e.residual <= 1e-8

    def test_scaling_with_integer_k(self, circle_grid):
        fa1, fa2 = FlowApprox(rotation_family(1.0)), FlowApprox(rotation_family(2.0))
        e = flow_conjugacy_check(Identity(C), fa1, fa2, 2, times=(Fraction(1, 4), Fraction(1, 2)), grid=circle_grid)
        assert e.residual <= 1e-12

    def test_left_multiplication_does_not_conjugate(self, sphere_grid):
        e = flow_conjugacy_check(left_multiplication_candidate(quat.I, quat.J), FlowApprox(quat_sqrt_chain(quat.I)),
                                 FlowApprox(quat_sqrt_chain(quat.J)), 1, grid=sphere_grid)
        assert e.residual > 1.0


class TestScaling:
    def test_integer(self, circle_grid):
        res = search_scaling(IntertwineCase(CircleRotation(0.3), ConstantCircle(1.0), ConstantCircle(3.0)), circle_grid)
        assert res.kind == "integer" and res.k == 3.0 and res.residual == 0.0

    def test_fitted(self, circle_grid):
        res = search_scaling(IntertwineCase(CircleRotation(0.3), ConstantCircle(1.0), ConstantCircle(2.5)), circle_grid)
        assert res.kind == "fitted"
        assert res.k == pytest.approx(2.5, abs=1e-6)
        assert set(res.table) == set(range(1, 9))

import numpy as np
import pytest

from rootflow.diffeo import CircleLifted, CircleReflection, CircleRotation, FlowTime, Identity, sup_distance
from rootflow.fields import CircleFourier
from rootflow.functional_root import (
    RootSolveError,
    SqrtSettings,
    linearize_circle_map,
    solve_functional_sqrt,
)
from rootflow.manifold import Circle
from rootflow.rootsystem import SOLVED_SQRT_CHAIN, roots_from_field, solve_sqrt_chain

C = Circle()
PERTURBED = CircleFourier(np.pi, sin=[0.3])
VERIFY = C.verification_grid(997)


def test_rotation_halves():
    res = solve_functional_sqrt(CircleRotation(1.0))
    assert isinstance(res.root, CircleLifted)
    assert res.residual <= 1e-8
    assert sup_distance(res.root, CircleRotation(0.5), VERIFY) <= 1e-8


def test_identity_root_is_identity():
    res = solve_functional_sqrt(Identity(C))
    assert sup_distance(res.root, Identity(C), VERIFY) <= 1e-10


def test_reflection_is_rejected():
    with pytest.raises(RootSolveError, match="degree -1"):
        solve_functional_sqrt(CircleReflection())


def test_reported_residual_is_independent_of_solver_grid():
    res = solve_functional_sqrt(CircleRotation(2.0), SqrtSettings(n=256))
    g = res.root
    comp = C.distance(g.apply(g.apply(VERIFY)), CircleRotation(2.0).apply(VERIFY))
    assert res.residual == pytest.approx(float(np.max(comp)), rel=1e-6, abs=1e-15)


@pytest.fixture(scope="module")
def perturbed_root():
    return solve_functional_sqrt(FlowTime(PERTURBED, 1.0))


def test_perturbed_flow_half_time(perturbed_root):
    assert perturbed_root.residual <= 1e-7
    assert sup_distance(perturbed_root.root, FlowTime(PERTURBED, 0.5, h=1e-4), VERIFY) <= 1e-6


def test_root_is_monotone(perturbed_root):
    assert np.all(np.diff(np.append(perturbed_root.root.samples, perturbed_root.root.samples[0] + 1)) > 0)


def test_linearization_of_rotation_is_trivial():
    lin = linearize_circle_map(CircleRotation(1.0), n=128)
    assert lin is not None
    assert lin.rho == pytest.approx(1.0 / (2 * np.pi), abs=1e-12)


def test_rotation_chain_passes_everything():
    rs = solve_sqrt_chain(CircleRotation(1.0), 4, tol=1e-8)
    assert rs.provenance == SOLVED_SQRT_CHAIN
    for c, b in enumerate(rs.index_set, start=1):
        assert sup_distance(rs.root(b), CircleRotation(1.0 / 2**c), VERIFY) <= 1e-8
    assert rs.report.passed, rs.report.summary()


def test_perturbed_chain_matches_flow_roots():
    rs = solve_sqrt_chain(FlowTime(PERTURBED, 1.0), 3, tol=1e-6)
    ref = roots_from_field(PERTURBED, 3)
    for b in rs.index_set:
        assert sup_distance(rs.root(b), ref.root(b), VERIFY) <= 1e-6
    for check in ("condition-2-root", "condition-3-commutativity", "condition-4-coherency", "condition-5-convergence"):
        assert rs.report[check].passed, rs.report.summary()


def test_chain_refuses_reflection():
    with pytest.raises(RootSolveError):
        solve_sqrt_chain(CircleReflection(), 3)

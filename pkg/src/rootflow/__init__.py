"""Root systems to the identity, the flows they generate, and their symmetries."""

__version__ = "0.1.0"

from .diffeo import (
    CircleLifted,
    CircleReflection,
    CircleRotation,
    Compose,
    Diffeo,
    FlowTime,
    Identity,
    QuatConjugation,
    QuatLeftMult,
    TorusTranslation,
    compose,
    inverse,
    orientation_class,
    power,
    sup_distance,
)
from .fields import (
    CircleFourier,
    ConstantCircle,
    LeftInvariantS3,
    Sampled,
    TorusConstant,
    integrate_field,
    recognize_field,
)
from .flow import (
    ConvergenceError,
    FlowApprox,
    extract_field,
    extract_field_grid,
    round_trip_check,
    verify_flow_axioms,
)
from .functional_root import RootSolveError, SqrtSettings, solve_functional_sqrt
from .manifold import Circle, CutLocusError, Sphere3, Torus
from .rootsystem import (
    RootSystem,
    quat_sqrt_chain,
    roots_from_field,
    rotation_family,
    solve_sqrt_chain,
    verify_root_system,
)
from .symmetry import (
    IntertwineCase,
    check_intertwine,
    conjugating_rotor,
    flow_conjugacy_check,
    probe_group,
)

__all__ = [
    "Circle",
    "CircleFourier",
    "CircleLifted",
    "CircleReflection",
    "CircleRotation",
    "Compose",
    "ConstantCircle",
    "ConvergenceError",
    "CutLocusError",
    "Diffeo",
    "FlowApprox",
    "FlowTime",
    "Identity",
    "IntertwineCase",
    "LeftInvariantS3",
    "QuatConjugation",
    "QuatLeftMult",
    "RootSolveError",
    "RootSystem",
    "Sampled",
    "Sphere3",
    "SqrtSettings",
    "Torus",
    "TorusConstant",
    "TorusTranslation",
    "check_intertwine",
    "compose",
    "conjugating_rotor",
    "extract_field",
    "extract_field_grid",
    "flow_conjugacy_check",
    "integrate_field",
    "inverse",
    "orientation_class",
    "power",
    "probe_group",
    "quat_sqrt_chain",
    "recognize_field",
    "roots_from_field",
    "rotation_family",
    "round_trip_check",
    "solve_functional_sqrt",
    "solve_sqrt_chain",
    "sup_distance",
    "verify_flow_axioms",
    "verify_root_system",
]

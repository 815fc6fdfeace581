"""Intertwining relations between embeddings of one map, and group closure.

Two fields ``xi1`` and ``xi2`` are intertwined by an isometry ``P`` with scaling
``k`` when ``k DP(xi1(p)) = xi2(P(p))`` everywhere. Integrated, this says ``P``
conjugates the flows: ``P(Psi1_{k t}(p)) = Psi2_t(P(p))``.
"""
import itertools
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import quaternion as quat
from .diffeo import QuatConjugation, QuatLeftMult, compose, sup_distance
from .fields import LeftInvariantS3
from .flow import ConvergenceError
from .report import ReportEntry, failed_entry

ROTOR_TOL = 1e-12


class AntipodalAxesError(ValueError):
    """The two axes are opposite, so no rotor in their common plane is singled out."""


@dataclass
class IntertwineCase:
    """Isometry ``P``, source field ``xi1``, image field ``xi2`` and scaling ``k``."""

    P: object
    xi1: object
    xi2: object
    k: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("the scaling coefficient must be positive")
        m = self.P.manifold
        for f in (self.xi1, self.xi2):
            if getattr(f, "manifold", m) != m:
                raise ValueError("isometry and fields must live on one manifold")

    @property
    def manifold(self):
        return self.P.manifold


def intertwine_defect(case, grid, k=None):
    """Pointwise tangent norm of ``k DP(xi1(p)) - xi2(P(p))`` at ``P(p)``."""
    m = case.manifold
    k = case.k if k is None else k
    image, pushed = case.P.apply(grid), case.P.differential(grid, case.xi1(grid))
    return m.tangent_norm(image, k * pushed - case.xi2(image))


def check_intertwine(case, grid, tol=1e-12):
    defect = intertwine_defect(case, grid)
    i = int(np.argmax(defect))
    return ReportEntry(
        "intertwine",
        float(defect[i]),
        tol,
        witness={"point": np.asarray(grid)[i].tolist()},
        counts={"points": case.manifold.batch_size(grid)},
        label=case.name,
        details={"P": repr(case.P), "k": case.k},
    )


def conjugating_rotor(q1, q2):
    """Unit quaternion ``r`` with ``r q1 r^-1 = q2`` for imaginary unit ``q1``, ``q2``.

    ``r`` is the half rotation in the plane of the two axes; ``q1^-1 = -q1``
    gives ``r = normalize(1 - q2 q1)``. The defining identity is re-checked
    before returning.
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    for q in (q1, q2):
        if not quat.is_pure_imaginary(q) or abs(quat.norm(q) - 1.0) > 1e-12:
            raise ValueError("axes must be imaginary unit quaternions")
    raw = quat.ONE - quat.mul(q2, q1)
    if quat.norm(raw) < 1e-8:
        raise AntipodalAxesError(
            "axes are antipodal; conjugate through an intermediate axis perpendicular to both"
        )
    r = quat.normalize(raw)
    err = quat.norm(quat.mul(quat.mul(r, q1), quat.conj(r)) - q2)
    if err > ROTOR_TOL:
        raise ArithmeticError(f"rotor fails its defining identity by {err:.3e}")
    return r


def left_multiplication_candidate(q1, q2):
    """Left multiplication by ``q2 q1^-1``, the alternative isometry candidate for two axes."""
    return QuatLeftMult(quat.mul(q2, quat.inv(q1)))


def axis_cases(q1, q2):
    """Both isometry candidates relating ``LeftInvariantS3(pi q1)`` to ``LeftInvariantS3(pi q2)``."""
    xi1 = LeftInvariantS3(np.pi * np.asarray(q1, dtype=float))
    xi2 = LeftInvariantS3(np.pi * np.asarray(q2, dtype=float))
    return [
        IntertwineCase(QuatConjugation(conjugating_rotor(q1, q2)), xi1, xi2, 1.0, "conjugation"),
        IntertwineCase(left_multiplication_candidate(q1, q2), xi1, xi2, 1.0, "left-multiplication"),
    ]


@dataclass
class ScalingResult:
    k: float
    residual: float
    kind: str
    table: dict = field(default_factory=dict)


def search_scaling(case, grid, tol=1e-12, k_max=8):
    """Scaling ``k``: integers ``1..k_max`` first, then bounded 1-D minimization."""
    table = {}
    for k in range(1, k_max + 1):
        table[k] = float(np.max(intertwine_defect(case, grid, k)))
    best = min(table, key=table.get)
    if table[best] <= tol:
        return ScalingResult(float(best), table[best], "integer", table)
    res = minimize_scalar(
        lambda k: float(np.max(intertwine_defect(case, grid, k))),
        bounds=(1e-6, float(k_max)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if res.fun < table[best]:
        return ScalingResult(float(res.x), float(res.fun), "fitted", table)
    return ScalingResult(float(best), table[best], "integer", table)


@dataclass
class GroupProbeResult:
    elements: list
    closure_table: list
    max_residual: float
    tol: float

    @property
    def closed(self):
        return self.max_residual <= self.tol

    def entry(self, name="group-closure"):
        return ReportEntry(
            name,
            self.max_residual,
            self.tol,
            counts={"elements": len(self.elements), "pairs": len(self.closure_table)},
            label="closure holds on sample" if self.closed else "closure fails on sample",
            details={"elements": [repr(e) for e in self.elements], "closure_table": self.closure_table},
        )


def probe_group(candidates, grid, tol=1e-12):
    """Compose every ordered pair and match the result to the nearest candidate.

    Candidates must intertwine a shared base field with ``k = 1``; any that
    fails is reported in the closure table with a matched index of ``None``.
    """
    elements = [c.P for c in candidates]
    table = []
    worst = 0.0
    for c in candidates:
        r = float(np.max(intertwine_defect(c, grid, 1.0)))
        if r > tol:
            table.append({"pair": None, "candidate": c.name or repr(c.P), "intertwine_residual": r})
            worst = max(worst, r)
    for (ia, pa), (ib, pb) in itertools.product(enumerate(elements), repeat=2):
        prod = compose(pa, pb)
        dists = [sup_distance(prod, e, grid) for e in elements]
        j = int(np.argmin(dists))
        table.append({"pair": [ia, ib], "match": j, "residual": dists[j]})
        worst = max(worst, dists[j])
    return GroupProbeResult(elements, table, worst, tol)


def rotor_family_cases(axis=quat.K, base_axis=quat.I, quarter_turns=(0, 1, 3, 2)):
    """Conjugations by powers of the quarter-turn rotor about ``axis``, with base field ``pi base_axis p``.

    The default list ``{id, C_r, C_r^-1, C_{r^2}}`` is closed under composition.
    """
    r = quat.normalize(quat.ONE + np.asarray(axis, dtype=float))
    base = LeftInvariantS3(np.pi * np.asarray(base_axis, dtype=float))
    cases = []
    for n in quarter_turns:
        s = quat.power(r, n)
        image_axis = quat.mul(quat.mul(s, base.omega), quat.conj(s))
        cases.append(IntertwineCase(QuatConjugation(s), base, LeftInvariantS3(image_axis), 1.0, f"rotor^{n}"))
    return cases


def flow_conjugacy_check(P, fa1, fa2, k=1, times=None, grid=None, tol=1e-10):
    """Largest ``distance(P(Psi1_{k t}(p)), Psi2_t(P(p)))`` over times and grid."""
    times = times or (Fraction(1, 4), Fraction(1, 2), Fraction(1))
    m = P.manifold
    moved = P.apply(grid)
    rows, worst, witness = [], 0.0, {}
    try:
        for t in times:
            if isinstance(t, Fraction) and float(k).is_integer():
                kt = int(k) * t
            else:
                kt = float(k) * float(t)
            a, e1 = fa1.eval(kt, grid)
            b, e2 = fa2.eval(t, moved)
            d = m.distance(P.apply(a), b)
            i = int(np.argmax(d))
            rows.append({"time": str(t), "residual": float(d[i]), "error_estimates": [e1, e2]})
            if d[i] >= worst:
                worst, witness = float(d[i]), {"time": str(t), "point": np.asarray(grid)[i].tolist()}
    except ConvergenceError as exc:
        return failed_entry("flow-conjugacy", str(exc), table=exc.table)
    return ReportEntry(
        "flow-conjugacy",
        worst,
        tol,
        witness=witness,
        counts={"times": len(rows), "points": m.batch_size(grid)},
        details={"P": repr(P), "k": k, "times": rows},
    )


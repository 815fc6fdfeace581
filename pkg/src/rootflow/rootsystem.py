"""Root systems to the identity: construction and verification.

A root system for ``f`` is a family ``b -> g_b`` of diffeomorphisms with
``g_b^b = f``, pairwise commuting, coherent under gcd reduction of exponent
and index, converging to the identity, and each isotopic to the identity.
The index set is a cofinal subset of the naturals, by default ``2, 4, ..., 2^C``.
"""
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from . import quaternion as quat
from .diffeo import (
    CircleRotation,
    FlowTime,
    Identity,
    QuatLeftMult,
    orientation_class,
    power,
    sup_distance,
)
from .functional_root import RootSolveError, SqrtSettings, solve_functional_sqrt
from .manifold import Circle
from .report import ReportEntry, VerificationReport

ANALYTIC = "analytic"
FROM_FIELD = "from-field"
SOLVED_SQRT_CHAIN = "solved-sqrt-chain"
QUAT_CHAIN = "quat-chain"

DEFAULT_EXPONENTS = (-2, 2, 3, 4, 6, 8)
DEFAULT_LEMMA_CASES = ((1, 2, 1, 4), (3, 4, 1, 2), (0, 2, 5, 4), (1, 2, 3, 4))


@dataclass
class RootSystem:
    """Target ``f`` together with its roots ``g_b`` on a listed index set.

    ``factory`` optionally produces roots beyond the listed indices (used by
    analytic families so that real-time evaluation can refine further).
    Index ``1`` always resolves to the target.
    """

    target: object
    roots: dict
    provenance: str = ANALYTIC
    factory: Optional[Callable] = None
    metadata: dict = field(default_factory=dict)
    report: Optional[VerificationReport] = None

    def __post_init__(self):
        self.roots = {int(b): g for b, g in sorted(self.roots.items())}
        m = self.target.manifold
        for b, g in self.roots.items():
            if b < 1:
                raise ValueError("root indices must be positive")
            if g.manifold != m:
                raise ValueError(f"root g_{b} lives on a different manifold than the target")
        self._extra = {}

    @property
    def manifold(self):
        return self.target.manifold

    @property
    def index_set(self):
        return tuple(self.roots)

    def has(self, b):
        if b == 1 or b in self.roots:
            return True
        if self.factory is None:
            return False
        try:
            self.root(b)
        except (KeyError, ValueError):
            return False
        return True

    def root(self, b):
        b = int(b)
        if b == 1:
            return self.target
        if b in self.roots:
            return self.roots[b]
        if self.factory is None:
            raise KeyError(f"index {b} is not in the index set")
        if b not in self._extra:
            self._extra[b] = self.factory(b)
        return self._extra[b]

    def __getitem__(self, b):
        return self.root(b)


def _dyadic(depth):
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return [2**c for c in range(1, depth + 1)]


def rotation_family(alpha=np.pi, depth=20, perturb=None):
    """``g_b`` = rotation by ``alpha / b`` for the rotation by ``alpha``.

    ``perturb`` maps an index to an angle offset added to that root, which is
    how deliberately broken systems are built.
    """
    perturb = {int(k): float(v) for k, v in (perturb or {}).items()}

    def make(b):
        return CircleRotation(alpha / b + perturb.get(b, 0.0))

    rs = RootSystem(
        CircleRotation(alpha),
        {b: make(b) for b in _dyadic(depth)},
        ANALYTIC,
        factory=make,
        metadata={"family": "circle-rotation", "alpha": alpha, "perturb": perturb},
    )
    return rs


def identity_family(manifold, depth=4):
    ident = Identity(manifold)
    return RootSystem(ident, {b: ident for b in _dyadic(depth)}, ANALYTIC,
                      factory=lambda b: ident, metadata={"family": "identity"})


def quat_sqrt_chain(q, depth=20):
    """Roots of the antipodal map ``L_-1`` on S^3 by repeated principal square roots.

    ``u_1 = q`` (a purely imaginary unit quaternion, so ``q^2 = -1``) and
    ``u_c = normalize(1 + u_{c-1})``, the square root with the smaller angle to 1;
    ``g_{2^c}`` is left multiplication by ``u_c``.
    """
    q = quat.as_quat(q)
    if not quat.is_pure_imaginary(q) or abs(quat.norm(q) - 1.0) > 1e-12:
        raise ValueError("quat_sqrt_chain needs a purely imaginary unit quaternion")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    q = quat.normalize(q)
    chain = [q]

    def level(c):
        while len(chain) < c:
            chain.append(quat.principal_sqrt(chain[-1]))
        return chain[c - 1]

    def make(b):
        c = int(b).bit_length() - 1
        if b != 2**c or c < 1:
            raise KeyError(f"quaternion chains are indexed by powers of two, not {b}")
        return QuatLeftMult(level(c))

    roots = {2**c: make(2**c) for c in range(1, depth + 1)}
    return RootSystem(
        QuatLeftMult(-quat.ONE),
        roots,
        QUAT_CHAIN,
        factory=make,
        metadata={"q": q.tolist(), "depth": depth},
    )


def chain_quaternions(rs):
    """The ``u_c`` of a quaternion chain, ordered by level."""
    return [rs.roots[b].q for b in rs.index_set]


def roots_from_field(field_, depth=12, h=1e-3, exact=True):
    """``g_{2^c}`` = time ``2^-c`` map of the field; the target is its time-1 map.

    Indices beyond ``depth`` are produced on demand as ``Phi_{1/b}``.
    """
    def make(b):
        return FlowTime(field_, 1.0 / b, h, exact)

    return RootSystem(
        FlowTime(field_, 1.0, h, exact),
        {b: make(b) for b in _dyadic(depth)},
        FROM_FIELD,
        factory=make,
        metadata={"field": repr(field_), "h": h},
    )


# ---------------------------------------------------------------- verification


def _max_with_witness(dist, grid):
    k = int(np.argmax(dist))
    point = np.asarray(grid)[k]
    return float(dist[k]), np.asarray(point).tolist()


def verify_isotopy_surrogate(rs, grid):
    """Orientation/degree surrogate for condition 1 on the target and every root."""
    failures = []
    for b in (1,) + rs.index_set:
        oc = orientation_class(rs.root(b), grid)
        if not oc.preserving:
            failures.append({"index": b, "reason": oc.detail})
    witness = failures[0] if failures else {}
    return ReportEntry(
        "condition-1-isotopy",
        float(len(failures)),
        0.0,
        witness=witness,
        counts={"maps": 1 + len(rs.index_set)},
        label="surrogate",
        details={"failures": failures},
    )


def verify_root_property(rs, grid, tol=1e-12):
    """Condition 2: ``g_b^b = f`` over the grid; tolerance scales with ``b``."""
    f_img = rs.target.apply(grid)
    m = rs.manifold
    worst, witness, per_index = 0.0, {}, {}
    for b in rs.index_set:
        dist = m.distance(power(rs.root(b), b).apply(grid), f_img)
        r, p = _max_with_witness(dist, grid)
        per_index[b] = r
        if r >= worst:
            worst, witness = r, {"index": b, "point": p}
    return ReportEntry(
        "condition-2-root",
        worst,
        tol * max(rs.index_set),
        witness=witness,
        counts={"indices": len(rs.index_set), "points": m.batch_size(grid)},
        details={"per_index": per_index},
    )


def verify_commutativity(rs, grid, tol=1e-12):
    """Condition 3, read as plain commutation ``g_b1 o g_b2 = g_b2 o g_b1``."""
    m = rs.manifold
    images = {b: rs.root(b).apply(grid) for b in rs.index_set}
    worst, witness, pairs = 0.0, {}, 0
    for b1, b2 in combinations(rs.index_set, 2):
        lhs = rs.root(b1).apply(images[b2])
        rhs = rs.root(b2).apply(images[b1])
        r, p = _max_with_witness(m.distance(lhs, rhs), grid)
        pairs += 1
        if r >= worst:
            worst, witness = r, {"indices": [b1, b2], "point": p}
    return ReportEntry(
        "condition-3-commutativity",
        worst,
        tol * 2,
        witness=witness,
        counts={"pairs": pairs, "points": m.batch_size(grid)},
    )


def default_exponent_pairs(rs, exponents=DEFAULT_EXPONENTS):
    pairs = []
    for b in rs.index_set:
        for a in exponents:
            if math.gcd(a, b) > 1:
                pairs.append((a, b))
    return pairs


def verify_coherency(rs, grid, pairs=None, tol=1e-12):
    """Condition 4: ``g_b^a = g_{b/d}^{a/d}`` with ``d = gcd(a, b)``."""
    m = rs.manifold
    if pairs is None:
        pairs = default_exponent_pairs(rs)
    worst, witness, tested, untestable = 0.0, {}, 0, []
    max_count = 1
    for a, b in pairs:
        d = math.gcd(a, b)
        if not (rs.has(b) and rs.has(b // d)):
            untestable.append([a, b])
            continue
        lhs = power(rs.root(b), a).apply(grid)
        rhs = power(rs.root(b // d), a // d).apply(grid)
        r, p = _max_with_witness(m.distance(lhs, rhs), grid)
        tested += 1
        max_count = max(max_count, abs(a))
        if r >= worst:
            worst, witness = r, {"exponent": a, "index": b, "point": p}
    return ReportEntry(
        "condition-4-coherency",
        worst,
        tol * max_count,
        witness=witness,
        counts={"pairs": tested, "points": m.batch_size(grid)},
        untestable=untestable,
    )


def _extrapolate_to_zero(s, y):
    """Neville polynomial extrapolation of y(s) to s = 0."""
    s = list(map(float, s))
    t = list(map(float, y))
    n = len(t)
    for k in range(1, n):
        for i in range(n - 1, k - 1, -1):
            t[i] = t[i] + (t[i] - t[i - 1]) * s[i] / (s[i - k] - s[i])
    return t[-1]


def verify_convergence_to_identity(rs, grid, tol_slope=0.05):
    """Condition 5: ``g_b -> id`` as ``b`` grows.

    ``delta_b`` is the sup displacement of ``g_b``. The residual is the limit of
    ``delta_b`` extrapolated (in ``1/b``) from the three largest indices,
    increased by any growth of ``delta_b`` over the upper half of the indices;
    its tolerance is ``tol_slope * delta_bmax``. Separately the decay
    ``delta_b ~ K/b`` must fit the upper half with relative error at most
    ``tol_slope``; a failed fit forces the residual above the tolerance. Roots
    that are exactly the identity on the upper half pass without a fit.
    """
    idx = rs.index_set
    if len(idx) < 3:
        raise ValueError("condition 5 needs at least three indices")
    m = rs.manifold
    ident = Identity(m)
    delta = [sup_distance(rs.root(b), ident, grid) for b in idx]
    top = len(idx) // 2
    upper_b = np.array(idx[top:], dtype=float)
    upper_d = np.array(delta[top:])
    growth = float(np.max(np.concatenate([[0.0], np.diff(upper_d)])))
    limit = abs(_extrapolate_to_zero([1.0 / b for b in idx[-3:]], delta[-3:]))
    # least-squares K for delta ~ K / b
    k_fit = float(np.sum(upper_d / upper_b) / np.sum(1.0 / upper_b**2))
    model = k_fit / upper_b
    if not np.any(upper_d > 0):
        fit_err = 0.0  # roots are exactly the identity: nothing left to decay
    elif k_fit > 0:
        fit_err = float(np.max(np.abs(upper_d - model) / np.where(model > 0, model, 1.0)))
    else:
        fit_err = math.inf
    tolerance = tol_slope * delta[-1] if delta[-1] > 0 else 1e-12
    residual = max(limit, growth)
    if not fit_err <= tol_slope:
        residual = max(residual, tolerance * (1.0 + (fit_err / tol_slope if math.isfinite(fit_err) else 1.0)))
    return ReportEntry(
        "condition-5-convergence",
        residual,
        tolerance,
        witness={"limit_estimate": limit, "max_growth": growth},
        counts={"indices": len(idx), "points": m.batch_size(grid)},
        details={
            "table": [[b, d] for b, d in zip(idx, delta)],
            "K": k_fit,
            "fit_relative_error": fit_err,
            "tol_slope": tol_slope,
        },
    )


def verify_lemma_commute_power(rs, grid, cases=DEFAULT_LEMMA_CASES, tol=1e-12):
    """``g_b2^a2 o g_b1^a1 = g_{b1 b2}^(a2 b1 + a1 b2)`` on each case ``(a1, b1, a2, b2)``."""
    m = rs.manifold
    worst, witness, tested, untestable = 0.0, {}, 0, []
    max_count = 1
    for a1, b1, a2, b2 in cases:
        if not (rs.has(b1) and rs.has(b2) and rs.has(b1 * b2)):
            untestable.append([a1, b1, a2, b2])
            continue
        lhs = power(rs.root(b2), a2).apply(power(rs.root(b1), a1).apply(grid))
        e = a2 * b1 + a1 * b2
        rhs = power(rs.root(b1 * b2), e).apply(grid)
        r, p = _max_with_witness(m.distance(lhs, rhs), grid)
        tested += 1
        max_count = max(max_count, abs(e), abs(a1) + abs(a2))
        if r >= worst:
            worst, witness = r, {"case": [a1, b1, a2, b2], "point": p}
    return ReportEntry(
        "lemma-commute-power",
        worst,
        tol * max_count,
        witness=witness,
        counts={"cases": tested, "points": m.batch_size(grid)},
        untestable=untestable,
    )


CONDITION_CHECKS = {
    "1": "condition-1-isotopy",
    "2": "condition-2-root",
    "3": "condition-3-commutativity",
    "4": "condition-4-coherency",
    "5": "condition-5-convergence",
    "lemma": "lemma-commute-power",
}


def verify_root_system(rs, grid, tol=1e-12, tol_slope=0.05, checks=("1", "2", "3", "4", "5", "lemma"),
                       exponent_pairs=None, lemma_cases=DEFAULT_LEMMA_CASES):
    """Run the requested condition checks and collect them in a report."""
    report = VerificationReport()
    for c in checks:
        c = str(c)
        if c == "1":
            report.add(verify_isotopy_surrogate(rs, grid))
        elif c == "2":
            report.add(verify_root_property(rs, grid, tol))
        elif c == "3":
            report.add(verify_commutativity(rs, grid, tol))
        elif c == "4":
            report.add(verify_coherency(rs, grid, exponent_pairs, tol))
        elif c == "5":
            report.add(verify_convergence_to_identity(rs, grid, tol_slope))
        elif c == "lemma":
            report.add(verify_lemma_commute_power(rs, grid, lemma_cases, tol))
        else:
            raise ValueError(f"unknown condition check {c!r}")
    return report


# ------------------------------------------------------- functional square roots


def solve_sqrt_chain(f, depth=3, settings=None, grid=None, tol=None, tol_slope=0.05, verify=True):
    """Dyadic root chain of a circle map by repeated numerical square roots.

    ``g_2 = sqrt(f)``, ``g_{2^(c+1)} = sqrt(g_{2^c})``. The returned system has
    its verification report attached unless ``verify`` is false.
    """
    settings = settings or SqrtSettings()
    surrogate = orientation_class(f, Circle().sample_grid(256))
    if not surrogate.preserving:
        raise RootSolveError(f"target fails the isotopy surrogate ({surrogate.detail})")
    roots, residuals = {}, {}
    current = f
    for c in range(1, depth + 1):
        try:
            result = solve_functional_sqrt(current, settings)
        except RootSolveError as exc:
            raise RootSolveError(f"level {c}: {exc}", exc.history, partial=roots) from exc
        roots[2**c] = result.root
        residuals[2**c] = result.residual
        current = result.root
    rs = RootSystem(f, roots, SOLVED_SQRT_CHAIN, metadata={"solver_residuals": residuals})
    if not verify:
        return rs
    if grid is None:
        grid = Circle().verification_grid(settings.verify_points)
    checks = ("1", "2", "3", "4", "5", "lemma") if depth >= 3 else ("1", "2", "3", "4", "lemma")
    rs.report = verify_root_system(rs, grid, tol if tol is not None else settings.tol, tol_slope, checks)
    return rs

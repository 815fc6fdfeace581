"""Flows built from root systems.

``FlowApprox`` evaluates ``Psi_{a/b} = g_b^a`` exactly on reachable rational
times and by truncated dyadic expansion (with a Cauchy stopping rule) on real
times. The generating field is recovered from the one-sided difference
quotient ``2^c log_p(g_{2^c}(p))`` with Richardson extrapolation in ``2^-c``.
"""
import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .diffeo import power
from .fields import Sampled, integrate_field, recognize_field
from .manifold import Circle, CutLocusError, Sphere3, Torus
from .rootsystem import FROM_FIELD
from .report import ReportEntry, failed_entry

ANALYTIC_MAX_DEPTH = 40


class UnreachableTimeError(ValueError):
    """The denominator of a rational time divides no index of the root system."""


class ConvergenceError(RuntimeError):
    """Dyadic approximants of a real time are not Cauchy; ``table`` holds the diagnostics."""

    def __init__(self, message, table):
        super().__init__(message)
        self.table = table


def rational_time(t):
    """Reduced ``Fraction`` from an int, Fraction, ``(a, b)`` pair or ``"a/b"`` string."""
    if isinstance(t, Fraction):
        return t
    if isinstance(t, tuple):
        a, b = t
        if b <= 0:
            raise ValueError("denominator must be positive")
        return Fraction(int(a), int(b))
    if isinstance(t, (int, np.integer)):
        return Fraction(int(t))
    if isinstance(t, str):
        return Fraction(t)
    raise TypeError(f"not a rational time: {t!r}")


def _round_half_up(x):
    return math.floor(x + 0.5)


class FlowApprox:
    """Evaluator of the flow ``Psi_t`` generated by a root system.

    Powers ``g_b^a`` are memoized per ``(b, a)``; the cache holds map objects,
    so its size is bounded by the number of distinct times requested.
    """

    def __init__(self, rs, max_depth=None):
        self.rs = rs
        self.manifold = rs.manifold
        if max_depth is None:
            if rs.factory is not None and rs.provenance != FROM_FIELD:
                max_depth = ANALYTIC_MAX_DEPTH
            else:
                max_depth = max((c for c in range(64) if 2**c in rs.index_set), default=0)
        self.max_depth = int(max_depth)
        self._cache = {}

    def power_map(self, b, a):
        key = (int(b), int(a))
        if key not in self._cache:
            self._cache[key] = power(self.rs.root(b), a)
        return self._cache[key]

    def _denominator_route(self, t):
        b = t.denominator
        if self.rs.has(b):
            return b, t.numerator
        for kb in self.rs.index_set:
            if kb % b == 0:
                k = kb // b
                return kb, k * t.numerator
        raise UnreachableTimeError(
            f"no index of the root system is a multiple of {b}; use eval_real for t={t}"
        )

    def eval_rational(self, t, p):
        t = rational_time(t)
        b, a = self._denominator_route(t)
        return self.power_map(b, a).apply(p)

    def _level(self, c, t, p):
        a = _round_half_up(t * 2**c)
        return a, self.power_map(2**c, a).apply(p)

    def _has_level(self, c):
        return c <= self.max_depth and self.rs.has(2**c)

    def eval_real(self, t, p, tol=1e-10, confirm_levels=2):
        """Evaluate ``Psi_t`` at a real time; returns ``(point, error_estimate)``.

        Levels ``c = 0, 1, ...`` use ``t_c = round(t 2^c) / 2^c``. Once ``t_c == t``
        the value is exact, provided the next ``confirm_levels`` levels agree with
        it (the coherency cross-check); the error estimate is then 0. Otherwise
        iteration stops when successive values at distinct approximant times
        differ by at most ``tol``, or at
        ``max_depth``. Raises ``ConvergenceError`` when the differences fail to
        decrease over three consecutive levels or an exact dyadic value is not
        reproduced at finer levels.
        """
        t = float(t)
        m = self.manifold
        table = []
        prev, prev_a = None, 0
        diffs = []
        c = 0
        while self._has_level(c):
            a, x = self._level(c, t, p)
            diff = math.inf if prev is None else float(np.max(m.distance(x, prev)))
            table.append({"level": c, "time": a / 2**c, "difference": diff})
            if a / 2**c == t:
                for extra in range(c + 1, c + 1 + confirm_levels):
                    if not self._has_level(extra):
                        break
                    _, y = self._level(extra, t, p)
                    d = float(np.max(m.distance(x, y)))
                    table.append({"level": extra, "time": t, "difference": d})
                    if not d <= tol:
                        raise ConvergenceError(
                            f"non-Cauchy: exact dyadic value at level {c} changes by {d:.3e} at level {extra}",
                            table,
                        )
                return x, 0.0
            same_time = prev is not None and a == 2 * prev_a
            if prev is not None and not same_time:
                diffs.append(diff)
                if diff <= tol:
                    return x, diff
                if len(diffs) >= 4 and all(diffs[-i] >= diffs[-i - 1] for i in range(1, 4)):
                    raise ConvergenceError("non-Cauchy: differences stopped decreasing", table)
            prev, prev_a = x, a
            c += 1
        if prev is None:
            raise ConvergenceError("no dyadic level is available", table)
        return prev, (diffs[-1] if diffs else math.inf)

    def eval(self, t, p, tol=1e-10):
        """Rational times exactly, floats through ``eval_real``; returns ``(point, error)``."""
        if isinstance(t, (Fraction, tuple, str, int, np.integer)):
            try:
                return self.eval_rational(t, p), 0.0
            except UnreachableTimeError:
                t = float(rational_time(t))
        return self.eval_real(t, p, tol)


def _composition_count(fa, t):
    if isinstance(t, float):
        return 2**fa.max_depth
    t = rational_time(t)
    try:
        _, a = fa._denominator_route(t)
    except UnreachableTimeError:
        return 2**fa.max_depth
    return max(abs(a), 1)


DEFAULT_TIME_PAIRS = (
    (Fraction(1, 4), Fraction(1, 2)),
    (Fraction(1, 2), Fraction(1, 2)),
    (Fraction(3, 4), Fraction(-1, 4)),
    (Fraction(1, 4), Fraction(-1, 4)),
    (Fraction(1, 2), Fraction(-1, 2)),
    (0.3, 0.45),
    (1.0 / 3.0, -1.0 / 3.0),
)


def _add_times(t1, t2):
    if isinstance(t1, float) or isinstance(t2, float):
        return float(t1) + float(t2)
    return rational_time(t1) + rational_time(t2)


def verify_flow_axioms(fa, grid, pairs=DEFAULT_TIME_PAIRS, tol=1e-10, real_tol=1e-10):
    """Identity at time zero and additivity ``Psi_t2(Psi_t1(p)) = Psi_{t1+t2}(p)``.

    The tolerance is ``tol`` times the largest composition count among the
    rational pairs plus the largest sum of real-time error estimates.
    """
    m = fa.manifold
    zero = fa.eval_rational(Fraction(0), grid)
    zero_res = float(np.max(m.distance(zero, m.canonicalize(grid))))
    table, worst, witness = [], zero_res, {"pair": [0, 0]} if zero_res > 0 else {}
    count, budget = 1, 0.0
    try:
        for t1, t2 in pairs:
            x1, e1 = fa.eval(t1, grid, real_tol)
            x2, e2 = fa.eval(t2, x1, real_tol)
            s = _add_times(t1, t2)
            y, e3 = fa.eval(s, grid, real_tol)
            r = float(np.max(m.distance(x2, y)))
            table.append({"t1": str(t1), "t2": str(t2), "residual": r, "error_estimates": [e1, e2, e3]})
            if any(isinstance(t, float) for t in (t1, t2)):
                budget = max(budget, e1 + e2 + e3)
            else:
                count = max(count, sum(_composition_count(fa, t) for t in (t1, t2, s)))
            if r >= worst:
                worst, witness = r, {"pair": [str(t1), str(t2)]}
    except ConvergenceError as exc:
        return failed_entry("flow-axioms", str(exc), table=exc.table)
    return ReportEntry(
        "flow-axioms",
        worst,
        tol * count + budget,
        witness=witness,
        counts={"pairs": len(table), "points": m.batch_size(grid)},
        details={"identity_at_zero": zero_res, "pairs": table},
    )


def verify_eval_real(fa, grid, times=(0.3, 0.5, 0.75, 1.0), tol=1e-10):
    """Real-time evaluation converges at every requested time."""
    rows = []
    worst = 0.0
    for t in times:
        try:
            _, err = fa.eval_real(t, grid, tol)
        except ConvergenceError as exc:
            return failed_entry("eval-real", f"t={t}: {exc}", table=exc.table, time=t)
        rows.append({"time": t, "error_estimate": err})
        worst = max(worst, err)
    return ReportEntry("eval-real", worst, max(tol, worst), counts={"times": len(rows)},
                       details={"times": rows})


def richardson(values):
    """Extrapolate ``values[j] ~ D(h 2^-j)`` to ``h -> 0`` assuming error in powers of ``h``."""
    table = [np.asarray(v, dtype=float) for v in values]
    for k in range(1, len(table)):
        factor = 2.0**k - 1.0
        table = [table[j] + (table[j] - table[j - 1]) / factor for j in range(1, len(table))]
    return table[-1]


def extract_field(fa, p, depth=12, richardson_levels=2):
    """Tangent at ``p`` estimating ``d/dt Psi_t(p)`` at ``t = 0``.

    Base estimates ``D_c = 2^c log_p(g_{2^c}(p))`` for ``c = depth .. depth + r``
    are combined by Richardson extrapolation. A cut-locus hit restarts one level
    deeper. Levels past the stored index set are used when the root system can
    produce them on demand; otherwise ``c + r`` is bounded by the top stored level.
    """
    m = fa.manifold
    p = np.asarray(p, dtype=float)
    r = int(richardson_levels)
    c = int(depth)
    limit = ANALYTIC_MAX_DEPTH + r if fa.rs.factory is not None else fa.max_depth
    if c + r > limit:
        raise ValueError(f"depth {c} with {r} Richardson levels exceeds the available depth {limit}")
    while c + r <= limit:
        try:
            quotients = [2.0**j * fa.rs.root(2**j).displacement(p) for j in range(c, c + r + 1)]
        except CutLocusError:
            c += 1
            continue
        return m.project_tangent(p, richardson(quotients))
    raise CutLocusError(f"no level up to {limit} stays inside the cut locus")


def extract_field_grid(fa, grid, depth=12, richardson_levels=2):
    """Sampled field from ``extract_field`` at every grid point."""
    values = extract_field(fa, grid, depth, richardson_levels)
    return Sampled(fa.manifold, grid, values)


def time_second_differences(fa, p, depth=10, steps=8):
    """Largest second difference (per ``h^2``) of ``t -> Psi_t(p)`` on ``t = k 2^-depth``.

    A smoothness diagnostic only; nothing is certified.
    """
    m = fa.manifold
    h = 2.0**-depth
    pts = [fa.eval_rational(Fraction(k, 2**depth), p) for k in range(steps + 2)]
    worst = 0.0
    for k in range(1, steps + 1):
        fwd = m.log(pts[k], pts[k + 1])
        bwd = m.log(pts[k], pts[k - 1])
        worst = max(worst, float(np.max(m.tangent_norm(pts[k], fwd + bwd))) / h**2)
    return worst


@dataclass
class RoundTripSettings:
    depth: int = 12
    richardson: int = 2
    resolution: int = 256
    seed: int = 0
    h: float = 1e-3
    tol: float = 1e-6
    verify_points: int = 997
    recognize: bool = True


def extraction_grid(m, resolution, seed=0):
    if isinstance(m, Torus):
        return m.sample_grid(max(2, round(resolution ** (1.0 / m.n))), seed)
    return m.sample_grid(resolution, seed)


def round_trip_check(f, rs, settings=None, field=None):
    """Extract the field of ``rs``, integrate it for unit time and compare with ``f``.

    The root system is expected to have passed conditions 2-5 already. A field
    extracted earlier can be passed as ``field`` to skip the extraction.
    """
    settings = settings or RoundTripSettings()
    m = rs.manifold
    depth = settings.depth
    xi = field
    if xi is None:
        fa = FlowApprox(rs)
        if rs.factory is None:
            depth = min(depth, fa.max_depth - settings.richardson)
        grid = extraction_grid(m, settings.resolution, settings.seed)
        try:
            xi = extract_field_grid(fa, grid, depth, settings.richardson)
        except CutLocusError as exc:
            return failed_entry("round-trip", str(exc))
    if settings.recognize:
        xi = recognize_field(xi)
    check = m.verification_grid(settings.verify_points, settings.seed)
    moved = integrate_field(xi, 1.0, check, settings.h)
    dist = m.distance(moved, f.apply(check))
    k = int(np.argmax(dist))
    return ReportEntry(
        "round-trip",
        float(dist[k]),
        settings.tol,
        witness={"point": np.asarray(check)[k].tolist()},
        counts={"points": m.batch_size(check)},
        details={"field": repr(xi), "depth": depth, "richardson": settings.richardson},
    )


def _coord_names(m):
    if isinstance(m, Circle):
        return ["theta"], ["xi"]
    if isinstance(m, Sphere3):
        return ["w", "x", "y", "z"], ["vw", "vx", "vy", "vz"]
    return [f"x{i + 1}" for i in range(m.n)], [f"v{i + 1}" for i in range(m.n)]


def _fmt(x):
    return format(float(x), ".17g")


def export_field_csv(m, points, values, path):
    """CSV with a header row, then per point: coordinates followed by tangent components."""
    coords, comps = _coord_names(m)
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    vals = np.asarray(values, dtype=float).reshape(len(points), -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(coords + comps)
        for row_p, row_v in zip(pts, vals):
            writer.writerow([_fmt(x) for x in row_p] + [_fmt(v) for v in row_v])
    return path


def trajectory(fa, p, times):
    """Points ``Psi_t(p)`` for each time; rational times exact, floats via ``eval_real``."""
    return [fa.eval(t, p)[0] for t in times]


def export_trajectory_csv(m, times, points, path):
    """Time-series CSV: ``t, index, coordinates`` per start point and time."""
    coords, _ = _coord_names(m)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "index"] + coords)
        for t, pts in zip(times, points):
            pts = np.asarray(pts, dtype=float).reshape(-1, len(coords))
            for i, row in enumerate(pts):
                writer.writerow([_fmt(float(t))] + [i] + [_fmt(x) for x in row])
    return path

"""Self-diffeomorphisms of the model manifolds and their algebra.

Every map acts on batches of points. ``compose``, ``inverse`` and ``power``
simplify algebraically where this is exact (rotation angles add, quaternion
left multiplications multiply, translations add) and otherwise build a
symbolic ``Compose`` / ``Inverse`` / ``Power`` node.
"""
import enum
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import quaternion as quat
from .fields import VectorField, flow_displacement, integrate_field, LeftInvariantS3
from .manifold import TWO_PI, CUT_LOCUS_GUARD, Circle, CutLocusError, Sphere3, Torus

FD_STEP = 1e-5
LIFT_INVERSE_TOL = 1e-13


class Diffeo:
    manifold = None
    is_isometry = False

    def apply(self, p):
        raise NotImplementedError

    def __call__(self, p):
        return self.apply(p)

    def lift(self, theta):
        """Lift to R of a circle map: the unwrapped image of ``theta``."""
        raise NotImplementedError(f"{type(self).__name__} has no circle lift")

    def displacement(self, p):
        """Tangent at ``p`` pointing to ``apply(p)``: ``log_p(apply(p))``."""
        return self.manifold.log(p, self.apply(p))

    def differential(self, p, v):
        """Push the tangent ``v`` at ``p`` forward; the result is tangent at ``apply(p)``."""
        return fd_differential(self, p, v)


def fd_differential(d, p, v, h=FD_STEP):
    """Central difference of ``d`` along the geodesic through ``p`` in direction ``v``."""
    m = d.manifold
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    speed = m.tangent_norm(p, v)
    safe = np.where(speed > 0, speed, 1.0)
    unit = v / (safe if m.point_shape == () else safe[..., None])
    q0 = d.apply(p)
    q_plus = d.apply(m.exp(p, h * unit))
    q_minus = d.apply(m.exp(p, -h * unit))
    try:
        diff = (m.log(q0, q_plus) - m.log(q0, q_minus)) / (2.0 * h)
    except CutLocusError as exc:
        raise CutLocusError("finite-difference differential crossed the cut locus") from exc
    diff = m.project_tangent(q0, diff)
    scale = speed if m.point_shape == () else speed[..., None]
    return diff * scale


def _rotation_log(alpha):
    if -np.pi < alpha < np.pi:
        return float(alpha)
    wrapped = float(np.mod(alpha + np.pi, TWO_PI) - np.pi)
    if abs(wrapped) >= np.pi - CUT_LOCUS_GUARD:
        raise CutLocusError("rotation by pi has no unique logarithm")
    return wrapped


@dataclass(frozen=True)
class Identity(Diffeo):
    manifold: object = Circle()
    is_isometry = True

    def apply(self, p):
        return self.manifold.canonicalize(p)

    def lift(self, theta):
        return np.asarray(theta, dtype=float)

    def displacement(self, p):
        return np.zeros_like(np.asarray(p, dtype=float))

    def differential(self, p, v):
        return np.asarray(v, dtype=float)


@dataclass(frozen=True)
class CircleRotation(Diffeo):
    alpha: float
    manifold = Circle()
    is_isometry = True

    def apply(self, p):
        return self.manifold.canonicalize(np.asarray(p, dtype=float) + self.alpha)

    def lift(self, theta):
        return np.asarray(theta, dtype=float) + self.alpha

    def displacement(self, p):
        return np.full(np.shape(p), _rotation_log(self.alpha))

    def differential(self, p, v):
        return np.asarray(v, dtype=float)


@dataclass(frozen=True)
class CircleReflection(Diffeo):
    """theta -> -theta, i.e. complex conjugation on the unit circle."""

    manifold = Circle()
    is_isometry = True

    def apply(self, p):
        return self.manifold.canonicalize(-np.asarray(p, dtype=float))

    def lift(self, theta):
        return -np.asarray(theta, dtype=float)

    def differential(self, p, v):
        return -np.asarray(v, dtype=float)


class CircleLifted(Diffeo):
    """Circle map given by samples of its lift ``F`` on ``[0, 1)`` (units of turns).

    ``F(x + 1) = F(x) + 1``; between samples ``F`` is the monotone piecewise-cubic
    (PCHIP) interpolant of the periodically extended samples.
    """

    manifold = Circle()
    PAD = 3

    def __init__(self, samples):
        samples = np.array(samples, dtype=float)
        n = len(samples)
        if n < 4:
            raise ValueError("CircleLifted needs at least 4 samples")
        ext = np.concatenate([samples, [samples[0] + 1.0]])
        if np.any(np.diff(ext) <= 0):
            raise ValueError("lift samples must be strictly increasing with F(1) = F(0) + 1")
        self.samples = samples
        self.samples.setflags(write=False)
        idx = np.arange(-self.PAD, n + self.PAD + 1)
        knots = idx / n
        values = samples[np.mod(idx, n)] + np.floor_divide(idx, n)
        self._interp = PchipInterpolator(knots, values, extrapolate=False)
        self._deriv = self._interp.derivative()

    @classmethod
    def from_lift(cls, lift, n=1024):
        """Sample a lift given in radians (a callable R -> R) on ``n`` knots."""
        x = np.arange(n) / n
        return cls(np.asarray(lift(TWO_PI * x), dtype=float) / TWO_PI)

    @property
    def n(self):
        return len(self.samples)

    def __repr__(self):
        return f"CircleLifted(n={self.n})"

    def lift_turns(self, x):
        x = np.asarray(x, dtype=float)
        base = np.floor(x)
        out = self._interp(x - base) + base
        if np.any(~np.isfinite(out)):
            raise ValueError("CircleLifted evaluated outside its interpolation range")
        return out

    def lift(self, theta):
        return TWO_PI * self.lift_turns(np.asarray(theta, dtype=float) / TWO_PI)

    def lift_derivative(self, theta):
        x = np.asarray(theta, dtype=float) / TWO_PI
        return self._deriv(x - np.floor(x))

    def apply(self, p):
        return self.manifold.canonicalize(self.lift(p))

    def displacement(self, p):
        return self.manifold.log(p, self.apply(p))

    def differential(self, p, v):
        return self.lift_derivative(p) * np.asarray(v, dtype=float)


class QuatLeftMult(Diffeo):
    """p -> q p on S^3."""

    manifold = Sphere3()
    is_isometry = True

    def __init__(self, q):
        q = quat.as_quat(q)
        if abs(quat.norm(q) - 1.0) > 1e-12:
            raise ValueError("QuatLeftMult needs a unit quaternion")
        self.q = quat.normalize(q)
        self.q.setflags(write=False)

    def __repr__(self):
        return f"QuatLeftMult({np.array2string(self.q, precision=6)})"

    def __eq__(self, other):
        return isinstance(other, QuatLeftMult) and np.array_equal(self.q, other.q)

    def __hash__(self):
        return hash(("QuatLeftMult", self.q.tobytes()))

    def apply(self, p):
        return quat.normalize(quat.mul(self.q, p))

    def displacement(self, p):
        # log_p(q p) = log(q) p, since right multiplication by p is an isometry
        if self.q[0] <= -1.0 + 1e-15 or quat.angle_to_one(self.q) >= np.pi - CUT_LOCUS_GUARD:
            raise CutLocusError("left multiplication by -1 has no unique logarithm")
        return quat.mul(quat.log(self.q), p)

    def differential(self, p, v):
        return quat.mul(self.q, v)


class QuatConjugation(Diffeo):
    """p -> r p r^-1 on S^3."""

    manifold = Sphere3()
    is_isometry = True

    def __init__(self, r):
        r = quat.as_quat(r)
        if abs(quat.norm(r) - 1.0) > 1e-12:
            raise ValueError("QuatConjugation needs a unit quaternion")
        self.r = quat.normalize(r)
        self.r.setflags(write=False)

    def __repr__(self):
        return f"QuatConjugation({np.array2string(self.r, precision=6)})"

    def __eq__(self, other):
        return isinstance(other, QuatConjugation) and np.array_equal(self.r, other.r)

    def __hash__(self):
        return hash(("QuatConjugation", self.r.tobytes()))

    def apply(self, p):
        return quat.normalize(quat.mul(quat.mul(self.r, p), quat.conj(self.r)))

    def differential(self, p, v):
        return quat.mul(quat.mul(self.r, v), quat.conj(self.r))


class TorusTranslation(Diffeo):
    is_isometry = True

    def __init__(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float)).copy()
        v.setflags(write=False)
        self.v = v
        self.manifold = Torus(len(v))

    def __repr__(self):
        return f"TorusTranslation({self.v.tolist()})"

    def __eq__(self, other):
        return isinstance(other, TorusTranslation) and np.array_equal(self.v, other.v)

    def __hash__(self):
        return hash(("TorusTranslation", self.v.tobytes()))

    def apply(self, p):
        return self.manifold.canonicalize(np.asarray(p, dtype=float) + self.v)

    def displacement(self, p):
        p = np.asarray(p, dtype=float)
        return self.manifold.log(np.zeros(self.manifold.n), self.v) + np.zeros_like(p)

    def differential(self, p, v):
        return np.asarray(v, dtype=float)


class FlowTime(Diffeo):
    """Time-``t`` map of a vector field, integrated by RK4 with step at most ``h``."""

    def __init__(self, field, t, h=1e-3, exact=True):
        if not isinstance(field, VectorField):
            raise TypeError("FlowTime needs a VectorField")
        self.field = field
        self.t = float(t)
        self.h = float(h)
        self.exact = bool(exact)
        self.manifold = field.manifold

    def __repr__(self):
        return f"FlowTime({self.field!r}, t={self.t!r}, h={self.h!r})"

    def apply(self, p):
        return integrate_field(self.field, self.t, p, self.h, self.exact)

    def lift(self, theta):
        if not isinstance(self.manifold, Circle):
            return super().lift(theta)
        theta = np.asarray(theta, dtype=float)
        return theta + flow_displacement(self.field, self.t, theta, self.h, self.exact)

    def displacement(self, p):
        m = self.manifold
        if isinstance(m, Sphere3):
            if self.exact and isinstance(self.field, LeftInvariantS3):
                omega = self.t * self.field.omega
                if quat.norm(omega) >= np.pi - CUT_LOCUS_GUARD:
                    raise CutLocusError("flow displacement reaches the cut locus")
                return quat.mul(omega, p)
            return super().displacement(p)
        y = flow_displacement(self.field, self.t, p, self.h, self.exact)
        half = np.pi if isinstance(m, Circle) else 0.5
        if np.any(np.abs(y) >= half - CUT_LOCUS_GUARD):
            raise CutLocusError("flow displacement reaches the cut locus")
        return y


class Compose(Diffeo):
    """``Compose([d1, d2, ..., dk])`` is d1 o d2 o ... o dk (dk applied first)."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("Compose needs at least one map")
        m = parts[0].manifold
        if any(d.manifold != m for d in parts):
            raise ValueError("composed maps must share one manifold")
        self.parts = tuple(parts)
        self.manifold = m
        self.is_isometry = all(d.is_isometry for d in parts)

    def __repr__(self):
        return f"Compose({list(self.parts)!r})"

    def apply(self, p):
        for d in reversed(self.parts):
            p = d.apply(p)
        return p

    def lift(self, theta):
        for d in reversed(self.parts):
            theta = d.lift(theta)
        return theta

    def differential(self, p, v):
        for d in reversed(self.parts):
            v = d.differential(p, v)
            p = d.apply(p)
        return v


class Inverse(Diffeo):
    """Pointwise inverse of a circle map with increasing lift (bisection, then Newton)."""

    def __init__(self, base):
        if not isinstance(base.manifold, Circle):
            raise NotImplementedError("generic inverses are implemented for circle maps only")
        self.base = base
        self.manifold = base.manifold
        self.is_isometry = base.is_isometry
        grid = np.linspace(0.0, TWO_PI, 4097)
        disp = base.lift(grid) - grid
        if np.any(np.diff(base.lift(grid)) <= 0):
            raise ValueError("Inverse needs an increasing lift")
        margin = 1e-3 + 1e-2 * np.ptp(disp)
        self._dmin = float(disp.min() - margin)
        self._dmax = float(disp.max() + margin)

    def __repr__(self):
        return f"Inverse({self.base!r})"

    def lift(self, theta):
        theta = np.asarray(theta, dtype=float)
        lo = theta - self._dmax
        hi = theta - self._dmin
        base = self.base
        while np.max(hi - lo) > 1e-7:
            mid = 0.5 * (lo + hi)
            above = base.lift(mid) > theta
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        y = 0.5 * (lo + hi)
        for _ in range(30):
            r = base.lift(y) - theta
            if np.max(np.abs(r)) <= LIFT_INVERSE_TOL:
                break
            if hasattr(base, "lift_derivative"):
                slope = base.lift_derivative(y)
            else:
                slope = (base.lift(y + FD_STEP) - base.lift(y - FD_STEP)) / (2 * FD_STEP)
            y = np.clip(y - r / slope, lo - 1e-7, hi + 1e-7)
        return y

    def apply(self, p):
        return self.manifold.canonicalize(self.lift(p))


class Power(Diffeo):
    """``d`` applied ``a >= 2`` times."""

    def __init__(self, base, a):
        a = int(a)
        if a < 2:
            raise ValueError("use power() for exponents below 2")
        self.base = base
        self.a = a
        self.manifold = base.manifold
        self.is_isometry = base.is_isometry

    def __repr__(self):
        return f"Power({self.base!r}, {self.a})"

    def apply(self, p):
        for _ in range(self.a):
            p = self.base.apply(p)
        return p

    def lift(self, theta):
        for _ in range(self.a):
            theta = self.base.lift(theta)
        return theta

    def differential(self, p, v):
        for _ in range(self.a):
            v = self.base.differential(p, v)
            p = self.base.apply(p)
        return v


def identity(manifold):
    return Identity(manifold)


def _merge(d1, d2):
    """Exact simplification of d1 o d2, or None."""
    if isinstance(d1, Identity):
        return d2
    if isinstance(d2, Identity):
        return d1
    if isinstance(d1, CircleRotation) and isinstance(d2, CircleRotation):
        return CircleRotation(d1.alpha + d2.alpha)
    if isinstance(d1, CircleReflection) and isinstance(d2, CircleReflection):
        return Identity(d1.manifold)
    if isinstance(d1, QuatLeftMult) and isinstance(d2, QuatLeftMult):
        return QuatLeftMult(quat.normalize(quat.mul(d1.q, d2.q)))
    if isinstance(d1, QuatConjugation) and isinstance(d2, QuatConjugation):
        return QuatConjugation(quat.normalize(quat.mul(d1.r, d2.r)))
    if isinstance(d1, TorusTranslation) and isinstance(d2, TorusTranslation):
        return TorusTranslation(d1.v + d2.v)
    return None


def compose(*maps):
    """d1 o d2 o ... (rightmost applied first), simplified where exact."""
    flat = []
    for d in maps:
        flat.extend(d.parts if isinstance(d, Compose) else [d])
    m = flat[0].manifold
    if any(d.manifold != m for d in flat):
        raise ValueError("composed maps must share one manifold")
    out = []
    for d in flat:
        if out:
            merged = _merge(out[-1], d)
            if merged is not None:
                out[-1] = merged
                continue
        out.append(d)
    out = [d for d in out if not isinstance(d, Identity)]
    if not out:
        return Identity(m)
    if len(out) == 1:
        return out[0]
    return Compose(out)


def inverse(d):
    if isinstance(d, Identity) or isinstance(d, CircleReflection):
        return d
    if isinstance(d, CircleRotation):
        return CircleRotation(-d.alpha)
    if isinstance(d, QuatLeftMult):
        return QuatLeftMult(quat.conj(d.q))
    if isinstance(d, QuatConjugation):
        return QuatConjugation(quat.conj(d.r))
    if isinstance(d, TorusTranslation):
        return TorusTranslation(-d.v)
    if isinstance(d, FlowTime):
        return FlowTime(d.field, -d.t, d.h, d.exact)
    if isinstance(d, Inverse):
        return d.base
    if isinstance(d, Compose):
        return compose(*[inverse(p) for p in reversed(d.parts)])
    if isinstance(d, Power):
        return power(inverse(d.base), d.a)
    return Inverse(d)


def power(d, a):
    a = int(a)
    if a == 0:
        return Identity(d.manifold)
    if a < 0:
        return power(inverse(d), -a)
    if a == 1 or isinstance(d, Identity):
        return d
    if isinstance(d, CircleRotation):
        return CircleRotation(a * d.alpha)
    if isinstance(d, CircleReflection):
        return d if a % 2 else Identity(d.manifold)
    if isinstance(d, QuatLeftMult):
        return QuatLeftMult(quat.power(d.q, a))
    if isinstance(d, QuatConjugation):
        return QuatConjugation(quat.power(d.r, a))
    if isinstance(d, TorusTranslation):
        return TorusTranslation(a * d.v)
    if isinstance(d, Power):
        return Power(d.base, d.a * a)
    return Power(d, a)


def apply(d, p):
    return d.apply(p)


def differential(d, p, v):
    """Return ``(apply(d, p), Dd_p(v))``."""
    return d.apply(p), d.differential(p, v)


def pointwise_distance(d1, d2, grid):
    if d1.manifold != d2.manifold:
        raise ValueError("maps live on different manifolds")
    return d1.manifold.distance(d1.apply(grid), d2.apply(grid))


def sup_distance(d1, d2, grid):
    """Largest displacement between ``d1`` and ``d2`` over the grid."""
    return float(np.max(pointwise_distance(d1, d2, grid)))


class Orientation(enum.Enum):
    PRESERVING_DEGREE1 = "preserving-degree-1"
    REVERSING = "reversing"
    OTHER = "other"


@dataclass(frozen=True)
class OrientationResult:
    kind: Orientation
    detail: str

    @property
    def preserving(self):
        return self.kind is Orientation.PRESERVING_DEGREE1


def orientation_class(d, grid):
    """Orientation/degree surrogate for isotopy to the identity.

    On the circle the lift is followed once around a closed loop through the
    grid: degree +1 with an increasing lift is ``PRESERVING_DEGREE1``. On S^3
    and tori the sign of the Jacobian determinant, taken in a global tangent
    frame, must be positive at every grid point.
    """
    m = d.manifold
    if isinstance(m, Circle):
        theta = np.sort(np.asarray(grid, dtype=float))
        loop = np.concatenate([theta, [theta[0] + TWO_PI]])
        try:
            values = d.lift(loop)
        except NotImplementedError:
            values = np.unwrap(d.apply(loop))
        degree = int(np.rint((values[-1] - values[0]) / TWO_PI))
        steps = np.diff(values)
        if degree == 1 and np.all(steps > 0):
            return OrientationResult(Orientation.PRESERVING_DEGREE1, "degree 1")
        if degree == -1 and np.all(steps < 0):
            return OrientationResult(Orientation.REVERSING, "degree -1")
        return OrientationResult(Orientation.OTHER, f"degree {degree}, lift not monotone")
    grid = np.asarray(grid, dtype=float)
    frame = m.tangent_frame(grid)
    image = d.apply(grid)
    image_frame = m.tangent_frame(image)
    cols = [d.differential(grid, frame[..., a, :]) for a in range(m.dim)]
    jac = np.einsum("anq,nbq->nab", np.stack(cols), image_frame)
    det = np.linalg.det(jac)
    if np.all(det > 0):
        return OrientationResult(Orientation.PRESERVING_DEGREE1, f"orientation-preserving, min det {det.min():.3g}")
    if np.all(det < 0):
        return OrientationResult(Orientation.REVERSING, f"orientation-reversing, max det {det.max():.3g}")
    return OrientationResult(Orientation.OTHER, "Jacobian determinant changes sign")


def isometry_defect(d, grid):
    """Largest change of pairwise distance under ``d`` over grid pairs."""
    m = d.manifold
    image = d.apply(grid)
    n = m.batch_size(grid)
    i, j = np.triu_indices(n, k=1)
    before = m.distance(np.asarray(grid)[i], np.asarray(grid)[j])
    after = m.distance(image[i], image[j])
    return float(np.max(np.abs(before - after))) if len(i) else 0.0

"""Vector fields on the model manifolds and their numerical flows."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import quaternion as quat
from .manifold import TWO_PI, Circle, Sphere3, Torus

MAX_STEP_DISTANCE = np.pi / 4


class IntegrationError(RuntimeError):
    pass


class VectorField:
    """Base class: a time-independent tangent field evaluated on batches of points."""

    manifold = None

    def __call__(self, p):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantCircle(VectorField):
    k: float
    manifold = Circle()

    def __call__(self, p):
        return np.full(np.shape(p), float(self.k))


@dataclass(frozen=True)
class CircleFourier(VectorField):
    """xi(theta) = constant + sum_m cos[m-1]*cos(m theta) + sin[m-1]*sin(m theta)."""

    constant: float = 0.0
    cos: tuple = ()
    sin: tuple = ()
    manifold = Circle()

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))

    def __call__(self, p):
        theta = np.asarray(p, dtype=float)
        out = np.full(theta.shape, float(self.constant))
        for m, c in enumerate(self.cos, start=1):
            if c:
                out = out + c * np.cos(m * theta)
        for m, s in enumerate(self.sin, start=1):
            if s:
                out = out + s * np.sin(m * theta)
        return out


@dataclass(frozen=True, eq=False)
class LeftInvariantS3(VectorField):
    """xi(p) = omega * p for a fixed purely imaginary quaternion omega."""

    omega: np.ndarray
    manifold = Sphere3()

    def __post_init__(self):
        omega = quat.as_quat(self.omega).copy()
        if abs(omega[0]) > 1e-12:
            raise ValueError("LeftInvariantS3 needs a purely imaginary quaternion")
        omega[0] = 0.0
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    def __call__(self, p):
        return quat.mul(self.omega, p)

    def __eq__(self, other):
        return isinstance(other, LeftInvariantS3) and np.array_equal(self.omega, other.omega)

    def __hash__(self):
        return hash(("LeftInvariantS3", self.omega.tobytes()))


@dataclass(frozen=True, eq=False)
class TorusConstant(VectorField):
    v: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float)).copy()
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def manifold(self):
        return Torus(len(self.v))

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(self.v, p.shape).copy()

    def __eq__(self, other):
        return isinstance(other, TorusConstant) and np.array_equal(self.v, other.v)

    def __hash__(self):
        return hash(("TorusConstant", self.v.tobytes()))


class Sampled(VectorField):
    """A field known at grid points, extended by a manifold-specific interpolation rule.

    * circle: trigonometric interpolation (the grid must be uniformly spaced),
    * torus: periodic multilinear interpolation on a ``sample_grid`` lattice,
    * sphere3: inverse-distance blend of the right-trivialized values
      ``xi(p_k) * conj(p_k)`` over nearest neighbours, re-projected to the tangent space.
    """

    def __init__(self, manifold, points, values, neighbours=4):
        self.manifold = manifold
        self.points = np.array(points, dtype=float)
        self.values = np.array(values, dtype=float)
        if isinstance(manifold, Circle):
            self.rule = "trigonometric"
            self._fourier = _trig_interpolant(self.points, self.values)
        elif isinstance(manifold, Torus):
            self.rule = "multilinear"
            self._setup_lattice()
        elif isinstance(manifold, Sphere3):
            self.rule = "nearest-neighbour-blend"
            manifold.check_tangent(self.points, self.values)
            self._omega = quat.mul(self.values, quat.conj(self.points))
            self._tree = cKDTree(self.points)
            self._neighbours = min(int(neighbours), len(self.points))
        else:
            raise TypeError(f"unsupported manifold {manifold!r}")

    def __repr__(self):
        return f"Sampled({self.manifold!r}, n={len(self.points)}, rule={self.rule!r})"

    def _setup_lattice(self):
        n = self.manifold.n
        r = round(len(self.points) ** (1.0 / n))
        if r**n != len(self.points):
            raise ValueError("torus samples must form a full lattice")
        expected = self.manifold.sample_grid(r)
        if not np.allclose(self.points, expected, atol=1e-12):
            raise ValueError("torus samples must be the sample_grid lattice")
        self._r = r
        self._table = self.values.reshape((r,) * n + (n,))

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if self.rule == "trigonometric":
            return self._fourier(p)
        if self.rule == "multilinear":
            return self._multilinear(p)
        return self._blend(p)

    def _multilinear(self, p):
        n, r = self.manifold.n, self._r
        flat = p.reshape(-1, n)
        x = np.mod(flat, 1.0) * r
        i0 = np.floor(x).astype(int)
        frac = x - i0
        out = np.zeros_like(flat)
        for corner in range(2**n):
            bits = [(corner >> d) & 1 for d in range(n)]
            idx = tuple(np.mod(i0[:, d] + bits[d], r) for d in range(n))
            w = np.prod([frac[:, d] if bits[d] else 1.0 - frac[:, d] for d in range(n)], axis=0)
            out += w[:, None] * self._table[idx]
        return out.reshape(p.shape)

    def _blend(self, p):
        flat = quat.normalize(p.reshape(-1, 4))
        dist, idx = self._tree.query(flat, k=self._neighbours)
        dist = np.atleast_2d(dist.reshape(len(flat), -1))
        idx = np.atleast_2d(idx.reshape(len(flat), -1))
        exact = dist[:, 0] < 1e-14
        w = 1.0 / np.where(exact[:, None], 1.0, dist) ** 2
        w = np.where(exact[:, None], np.eye(1, w.shape[1]), w)
        w = w / w.sum(axis=1, keepdims=True)
        omega = np.einsum("nk,nkq->nq", w, self._omega[idx])
        omega[:, 0] = 0.0
        v = quat.mul(omega, flat)
        v = v - quat.dot(flat, v)[:, None] * flat
        return v.reshape(p.shape)


def _trig_interpolant(theta, values):
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    step = TWO_PI / n
    offset = theta[0]
    if not np.allclose(np.diff(theta), step, atol=1e-12):
        raise ValueError("trigonometric interpolation needs a uniform circle grid")
    c = np.fft.rfft(values) / n
    m = np.arange(len(c))
    weight = np.full(len(c), 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    amp = weight * c
    # shift the phase so the series is expressed in absolute angle
    amp = amp * np.exp(-1j * m * offset)
    cos_c = amp.real
    sin_c = -amp.imag

    def evaluate(p):
        p = np.asarray(p, dtype=float)
        arg = np.multiply.outer(p, m)
        return np.cos(arg) @ cos_c + np.sin(arg) @ sin_c

    return evaluate


def recognize_field(xi, tol=1e-10):
    """Replace a sampled field by an analytic one when its samples allow it.

    Circle samples with spread below ``tol`` become ``ConstantCircle``; S^3
    samples whose right-trivialized values agree become ``LeftInvariantS3``;
    torus samples that are constant become ``TorusConstant``. Otherwise the
    input is returned unchanged.
    """
    if not isinstance(xi, Sampled):
        return xi
    if xi.rule == "trigonometric":
        if np.ptp(xi.values) < tol:
            return ConstantCircle(float(np.mean(xi.values)))
    elif xi.rule == "nearest-neighbour-blend":
        if np.max(np.ptp(xi._omega, axis=0)) < tol:
            return LeftInvariantS3(np.mean(xi._omega, axis=0) * np.array([0.0, 1, 1, 1]))
    elif xi.rule == "multilinear":
        if np.max(np.ptp(xi.values, axis=0)) < tol:
            return TorusConstant(np.mean(xi.values, axis=0))
    return xi


def _rk4_chart(f, y0, t, h):
    """Fixed-step RK4 of y' = f(y) from 0 to t; the step is t/ceil(|t|/h)."""
    n = max(1, math.ceil(abs(t) / h - 1e-12)) if t != 0 else 0
    y = np.array(y0, dtype=float, copy=True)
    if n == 0:
        return y
    dt = t / n
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        incr = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(np.abs(incr) > MAX_STEP_DISTANCE):
            raise IntegrationError(f"RK4 step of size {dt} moved farther than pi/4; reduce h")
        y = y + incr
    return y


def flow_displacement(xi, t, p, h=1e-3, exact=True):
    """Unwrapped chart displacement of the time-``t`` flow on the circle or a torus.

    Integrates the displacement ``y`` with ``y' = xi(p + y)`` so that the result
    carries no cancellation error from the base coordinate.
    """
    m = xi.manifold
    p = np.asarray(p, dtype=float)
    if exact and isinstance(xi, ConstantCircle):
        return np.full(p.shape, xi.k * t)
    if exact and isinstance(xi, TorusConstant):
        return np.broadcast_to(xi.v * t, p.shape).copy()
    if isinstance(m, Sphere3):
        raise TypeError("flow_displacement is defined for chart manifolds only")
    return _rk4_chart(lambda y: xi(p + y), np.zeros_like(p), t, h)


def integrate_field(xi, t, p, h=1e-3, exact=True):
    """Time-``t`` flow of ``xi`` applied to the points ``p``.

    Classical RK4 with fixed step ``t / ceil(|t|/h)``. Circle and torus are
    integrated in the chart and reduced at the end; S^3 is integrated in R^4 and
    renormalized after each step. With ``exact=True`` constant circle/torus
    fields and left-invariant S^3 fields use their closed-form flows.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    m = xi.manifold
    p = np.asarray(p, dtype=float)
    if isinstance(m, Sphere3):
        p = quat.normalize(p)
        if exact and isinstance(xi, LeftInvariantS3):
            return quat.normalize(quat.mul(quat.exp(t * xi.omega), p))
        return _rk4_sphere(xi, p, t, h)
    return m.canonicalize(p + flow_displacement(xi, t, p, h, exact))


def _rk4_sphere(xi, p, t, h):
    n = max(1, math.ceil(abs(t) / h - 1e-12)) if t != 0 else 0
    if n == 0:
        return p.copy()
    dt = t / n
    for _ in range(n):
        k1 = xi(p)
        k2 = xi(quat.normalize(p + 0.5 * dt * k1))
        k3 = xi(quat.normalize(p + 0.5 * dt * k2))
        k4 = xi(quat.normalize(p + dt * k3))
        new = quat.normalize(p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if np.any(Sphere3().distance(p, new) > MAX_STEP_DISTANCE):
            raise IntegrationError(f"RK4 step of size {dt} moved farther than pi/4; reduce h")
        p = new
    return p

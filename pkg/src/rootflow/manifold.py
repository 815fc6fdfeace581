"""Model closed manifolds: the circle, the 3-sphere of unit quaternions and flat tori.

Points and tangent vectors are plain numpy arrays in canonical coordinates,
batched over leading axes:

* ``Circle``: angle in radians, canonical range ``[0, 2*pi)``; a tangent is the
  scalar coefficient of d/dtheta. Point shape ``()``.
* ``Sphere3``: unit quaternion ``(w, x, y, z)``; a tangent is an ambient
  4-vector orthogonal to the base point. Point shape ``(4,)``. ``q`` and ``-q``
  are different points.
* ``Torus(n)``: coordinates in ``[0, 1)^n``; tangents are n-vectors. Point
  shape ``(n,)``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import quaternion as quat

TWO_PI = 2.0 * np.pi

UNIT_NORM_TOL = 1e-12
TANGENCY_TOL = 1e-10
CUT_LOCUS_GUARD = 1e-9


class CutLocusError(ValueError):
    """Raised by ``log`` when the target is (numerically) on the cut locus."""


class TangencyError(ValueError):
    """Raised when a vector is not tangent at its base point."""


def _wrap_unit(x):
    """Reduce into [0, 1), guarding against ``np.mod`` returning exactly 1."""
    x = np.mod(x, 1.0)
    return np.where(x >= 1.0, 0.0, x)


class Manifold:
    point_shape = ()
    dim = 0

    def canonicalize(self, p):
        raise NotImplementedError

    def exp(self, p, v):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def distance(self, p, q):
        raise NotImplementedError

    def project_tangent(self, p, v):
        return np.asarray(v, dtype=float)

    def tangent_norm(self, p, v):
        v = np.asarray(v, dtype=float)
        if self.point_shape == ():
            return np.abs(v)
        return np.linalg.norm(v, axis=-1)

    def tangent_frame(self, p):
        """Orthonormal tangent basis at ``p``, shape ``p.shape + (dim,) + vec_shape``."""
        raise NotImplementedError

    def sample_grid(self, resolution, seed=0):
        raise NotImplementedError

    def verification_grid(self, n=997, seed=0):
        """Grid disjoint from ``sample_grid`` used to grade solvers and round trips."""
        raise NotImplementedError

    def batch_size(self, p):
        p = np.asarray(p)
        nd = len(self.point_shape)
        return int(np.prod(p.shape[: p.ndim - nd])) if p.ndim > nd else 1

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[p.ndim - len(self.point_shape):] != self.point_shape:
            raise ValueError(f"{self!r} expects points of shape {self.point_shape}, got {p.shape}")
        return p


@dataclass(frozen=True)
class Circle(Manifold):
    point_shape = ()
    dim = 1

    def __repr__(self):
        return "Circle()"

    def canonicalize(self, p):
        p = np.mod(np.asarray(p, dtype=float), TWO_PI)
        return np.where(p >= TWO_PI, 0.0, p)

    def signed_difference(self, p, q):
        """Shortest signed angle from ``p`` to ``q`` in ``[-pi, pi)``."""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        return np.mod(d + np.pi, TWO_PI) - np.pi

    def exp(self, p, v):
        return self.canonicalize(np.asarray(p, dtype=float) + np.asarray(v, dtype=float))

    def log(self, p, q):
        d = self.signed_difference(p, q)
        if np.any(np.abs(d) >= np.pi - CUT_LOCUS_GUARD):
            raise CutLocusError("circle log: points are antipodal")
        return d

    def distance(self, p, q):
        return np.abs(self.signed_difference(p, q))

    def tangent_frame(self, p):
        p = np.asarray(p, dtype=float)
        return np.ones(p.shape + (1,))

    def sample_grid(self, resolution, seed=0):
        if resolution < 2:
            raise ValueError("resolution must be >= 2")
        return TWO_PI * np.arange(resolution) / resolution

    def verification_grid(self, n=997, seed=0):
        return TWO_PI * (np.arange(n) + 0.5) / n


@dataclass(frozen=True)
class Sphere3(Manifold):
    point_shape = (4,)
    dim = 3

    def __repr__(self):
        return "Sphere3()"

    def canonicalize(self, p):
        return quat.normalize(p)

    def check_tangent(self, p, v):
        if np.any(np.abs(quat.dot(p, v)) > TANGENCY_TOL * np.maximum(1.0, quat.norm(v))):
            raise TangencyError("vector is not tangent to S^3 at its base point")

    def project_tangent(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - quat.dot(p, v)[..., None] * p

    def exp(self, p, v):
        p = quat.as_quat(p)
        v = quat.as_quat(v)
        self.check_tangent(p, v)
        theta = np.linalg.norm(v, axis=-1)[..., None]
        safe = np.where(theta > 0, theta, 1.0)
        direction = np.where(theta > 0, v / safe, 0.0)
        return quat.normalize(np.cos(theta) * p + np.sin(theta) * direction)

    def log(self, p, q):
        p = quat.as_quat(p)
        q = quat.as_quat(q)
        theta = self.distance(p, q)
        if np.any(theta >= np.pi - CUT_LOCUS_GUARD):
            raise CutLocusError("S^3 log: points are antipodal")
        w = q - quat.dot(p, q)[..., None] * p
        wn = np.linalg.norm(w, axis=-1)
        safe = np.where(wn > 0, wn, 1.0)
        return np.where((wn > 0)[..., None], (theta / safe)[..., None] * w, 0.0)

    def distance(self, p, q):
        p = quat.as_quat(p)
        q = quat.as_quat(q)
        # 2*atan2(|p-q|, |p+q|) stays accurate for nearby and nearly antipodal pairs
        return 2.0 * np.arctan2(np.linalg.norm(p - q, axis=-1), np.linalg.norm(p + q, axis=-1))

    def tangent_frame(self, p):
        p = quat.as_quat(p)
        basis = np.stack([quat.mul(e, p) for e in (quat.I, quat.J, quat.K)], axis=-2)
        return basis

    def _from_unit_cube(self, u):
        # Shoemake's area-preserving map from [0,1)^3 onto S^3
        u1, u2, u3 = u[:, 0], u[:, 1], u[:, 2]
        a = np.sqrt(1.0 - u1)
        b = np.sqrt(u1)
        q = np.stack(
            [
                a * np.sin(TWO_PI * u2),
                a * np.cos(TWO_PI * u2),
                b * np.sin(TWO_PI * u3),
                b * np.cos(TWO_PI * u3),
            ],
            axis=-1,
        )
        return quat.normalize(q)

    def sample_grid(self, resolution, seed=0):
        if resolution < 2:
            raise ValueError("resolution must be >= 2")
        sampler = qmc.Halton(d=3, scramble=True, seed=np.random.default_rng([seed, 0]))
        return self._from_unit_cube(sampler.random(resolution))

    def verification_grid(self, n=997, seed=0):
        sampler = qmc.Halton(d=3, scramble=True, seed=np.random.default_rng([seed, 1]))
        return self._from_unit_cube(sampler.random(n))


@dataclass(frozen=True)
class Torus(Manifold):
    n: int = 1

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("torus dimension must be >= 1")

    def __repr__(self):
        return f"Torus({self.n})"

    @property
    def point_shape(self):
        return (self.n,)

    @property
    def dim(self):
        return self.n

    def canonicalize(self, p):
        return _wrap_unit(np.asarray(p, dtype=float))

    def signed_difference(self, p, q):
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        return np.mod(d + 0.5, 1.0) - 0.5

    def exp(self, p, v):
        return self.canonicalize(np.asarray(p, dtype=float) + np.asarray(v, dtype=float))

    def log(self, p, q):
        d = self.signed_difference(p, q)
        if np.any(np.abs(d) >= 0.5 - CUT_LOCUS_GUARD):
            raise CutLocusError("torus log: displacement reaches half a period")
        return d

    def distance(self, p, q):
        return np.linalg.norm(self.signed_difference(p, q), axis=-1)

    def tangent_frame(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(self.n), p.shape[:-1] + (self.n, self.n)).copy()

    def sample_grid(self, resolution, seed=0):
        if resolution < 2:
            raise ValueError("resolution must be >= 2")
        axes = [np.arange(resolution) / resolution] * self.n
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def verification_grid(self, n=997, seed=0):
        sampler = qmc.Halton(d=self.n, scramble=True, seed=np.random.default_rng([seed, 1]))
        return sampler.random(n)


def manifold_from_name(name):
    """Parse ``"circle"``, ``"sphere3"`` or ``"torus<n>"`` / ``"torus(n)"``."""
    key = str(name).strip().lower().replace(" ", "")
    if key in ("circle", "s1"):
        return Circle()
    if key in ("sphere3", "s3"):
        return Sphere3()
    if key.startswith("torus"):
        rest = key[len("torus"):].strip("()") or "1"
        return Torus(int(rest))
    raise ValueError(f"unknown manifold {name!r}")


def manifold_name(m):
    if isinstance(m, Circle):
        return "circle"
    if isinstance(m, Sphere3):
        return "sphere3"
    return f"torus{m.n}"


def exp_point(m, p, v):
    return m.exp(p, v)


def log_point(m, p, q):
    return m.log(p, q)


def distance(m, p, q):
    return m.distance(p, q)


def sample_grid(m, resolution, seed=0):
    return m.sample_grid(resolution, seed)

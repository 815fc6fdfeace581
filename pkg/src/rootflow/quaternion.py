"""Vectorized unit-quaternion arithmetic.

Quaternions are real arrays with trailing axis of length 4 in (w, x, y, z)
order. Every function broadcasts over leading axes.
"""
import numpy as np

ONE = np.array([1.0, 0.0, 0.0, 0.0])
I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])


def as_quat(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (4,):
        raise ValueError(f"expected trailing axis of length 4, got shape {q.shape}")
    return q


def mul(p, q):
    """Hamilton product p*q."""
    p = as_quat(p)
    q = as_quat(q)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def conj(q):
    q = as_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def norm(q):
    return np.linalg.norm(as_quat(q), axis=-1)


def normalize(q):
    q = as_quat(q)
    return q / norm(q)[..., None]


def inv(q):
    q = as_quat(q)
    return conj(q) / np.sum(q * q, axis=-1)[..., None]


def dot(p, q):
    return np.sum(as_quat(p) * as_quat(q), axis=-1)


def angle_to_one(q):
    """Angle in R^4 between the unit quaternion ``q`` and 1."""
    q = as_quat(q)
    return np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), q[..., 0])


def exp(v):
    """Exponential of a purely imaginary quaternion (real part ignored)."""
    v = as_quat(v)
    vec = v[..., 1:]
    theta = np.linalg.norm(vec, axis=-1)
    # sin(theta)/theta, with the removable singularity handled explicitly
    safe = np.where(theta > 0, theta, 1.0)
    sinc = np.where(theta > 0, np.sin(safe) / safe, 1.0)
    return np.concatenate([np.cos(theta)[..., None], sinc[..., None] * vec], axis=-1)


def log(q):
    """Logarithm of a unit quaternion, returned as a purely imaginary quaternion.

    The principal branch is used: the result has norm in [0, pi]. For
    ``q = -1`` the imaginary direction is undefined and ``ValueError`` is raised.
    """
    q = as_quat(q)
    vec = q[..., 1:]
    s = np.linalg.norm(vec, axis=-1)
    if np.any((s == 0) & (q[..., 0] < 0)):
        raise ValueError("log of -1 has no unique imaginary direction")
    theta = np.arctan2(s, q[..., 0])
    safe = np.where(s > 0, s, 1.0)
    scale = np.where(s > 0, theta / safe, 1.0)
    return np.concatenate([np.zeros_like(theta)[..., None], scale[..., None] * vec], axis=-1)


def power(q, a):
    """Integer power by binary exponentiation, renormalizing after each product."""
    q = normalize(q)
    a = int(a)
    if a < 0:
        q = conj(q)
        a = -a
    result = np.broadcast_to(ONE, q.shape).copy()
    base = q
    while a:
        if a & 1:
            result = normalize(mul(result, base))
        a >>= 1
        if a:
            base = normalize(mul(base, base))
    return result


def principal_sqrt(u):
    """Square root of a unit quaternion with the smaller angle to 1.

    Computed as normalize(1 + u); undefined at u = -1.
    """
    u = normalize(u)
    s = u + ONE
    if np.any(norm(s) < 1e-12):
        raise ValueError("principal square root is undefined at -1")
    return normalize(s)


def is_pure_imaginary(q, tol=1e-12):
    return bool(np.all(np.abs(as_quat(q)[..., 0]) <= tol))

r"""Unit quaternion algebra with logarithmic and exponential maps.

Quaternions are stored as arrays ``[w, x, y, z]`` (scalar first) and all
products use the Hamilton convention. Every function accepts a single
quaternion of shape (4,) or a stack of shape (..., 4) and broadcasts.

The log map sends a unit quaternion to a tangent vector at the identity whose
norm is the *half* rotation angle, and the exp map is its inverse:

.. math::

    \log(q) = \arccos(q_w) \frac{(q_x, q_y, q_z)}{\|(q_x, q_y, q_z)\|},
    \qquad
    \exp(u) = (\cos\|u\|, \frac{\sin\|u\|}{\|u\|} u)

Both are inverse to each other for ``||u|| < pi`` and ``q != (-1, 0, 0, 0)``.
"""
import numpy as np

from .errors import DomainError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# Vector parts shorter than this use the zero branch of the log map.
ZERO_VECTOR_TOL = 1e-12
# Maximum deviation from unit norm accepted by the log map.
UNIT_NORM_TOL = 1e-6


def _as_quat(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError(f"expected quaternion(s) with last dimension 4, got {q.shape}")
    return q


def quat_normalize(q):
    """Scale quaternion(s) to unit norm."""
    q = _as_quat(q)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conjugate(q):
    """Return ``(w, -x, -y, -z)``."""
    q = _as_quat(q)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_product(a, b):
    """Hamilton product ``a * b``, renormalized to unit norm.

    Parameters
    ----------
    a, b : array-like, shape (..., 4)
        Unit quaternions. Shapes broadcast.

    Returns
    -------
    q : array, shape (..., 4)
    """
    a = _as_quat(a)
    b = _as_quat(b)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    q = np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)
    return quat_normalize(q)


def quat_log(q):
    """Logarithmic map from unit quaternions to tangent vectors.

    Parameters
    ----------
    q : array-like, shape (..., 4)
        Unit quaternion(s), none equal to ``(-1, 0, 0, 0)``.

    Returns
    -------
    u : array, shape (..., 3)
        Tangent vector(s) with ``||u|| = arccos(w)`` in ``[0, pi)``.

    Raises
    ------
    DomainError
        If a norm deviates from 1 by more than 1e-6 or a quaternion is the
        antipode of the identity.
    """
    q = _as_quat(q)
    norm = np.linalg.norm(q, axis=-1)
    if not np.all(np.isfinite(q)) or np.any(np.abs(norm - 1.0) > UNIT_NORM_TOL):
        raise DomainError("quat_log expects unit quaternions")
    w = q[..., 0]
    v = q[..., 1:]
    vnorm = np.linalg.norm(v, axis=-1)
    zero = vnorm < ZERO_VECTOR_TOL
    if np.any(zero & (w < 0.0)):
        raise DomainError("quat_log is undefined at (-1, 0, 0, 0)")
    # atan2(|v|, w) equals arccos(w) on the unit sphere and keeps full
    # precision near w = +-1 where arccos is ill-conditioned.
    angle = np.arctan2(vnorm, w)
    scale = np.where(zero, 0.0, angle / np.where(zero, 1.0, vnorm))
    return v * scale[..., np.newaxis]


def quat_exp(u):
    """Exponential map from tangent vectors to unit quaternions.

    ``exp(0)`` is the identity. The result is renormalized but its sign is
    not canonicalized, so ``quat_log(quat_exp(u)) == u`` for ``||u|| < pi``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != 3:
        raise ValueError(f"expected tangent vector(s) with last dimension 3, got {u.shape}")
    theta = np.linalg.norm(u, axis=-1, keepdims=True)
    # sin(theta) / theta, exactly 1 at theta = 0
    sinc = np.sinc(theta / np.pi)
    q = np.concatenate([np.cos(theta), sinc * u], axis=-1)
    return quat_normalize(q)


def hemisphere_align(seq):
    """Flip signs so that consecutive quaternions lie on the same hemisphere.

    The first element is negated iff its scalar part is negative; every later
    element is negated iff its dot product with the (already aligned)
    predecessor would otherwise be negative.

    Parameters
    ----------
    seq : array-like, shape (n, 4)

    Returns
    -------
    aligned : array, shape (n, 4)
    """
    seq = _as_quat(seq)
    if seq.ndim != 2 or len(seq) == 0:
        raise ValueError("hemisphere_align expects a nonempty (n, 4) sequence")
    dots = np.einsum("ij,ij->i", seq[1:], seq[:-1])
    steps = np.where(dots < 0.0, -1.0, 1.0)
    first = -1.0 if seq[0, 0] < 0.0 else 1.0
    signs = first * np.concatenate([[1.0], np.cumprod(steps)])
    return seq * signs[:, np.newaxis]


def quat_canonical(q):
    """Representative with nonnegative scalar part."""
    q = _as_quat(q)
    return np.where(q[..., :1] < 0.0, -q, q)


def quat_error(q_target, q):
    """Rotation vector ``2 log(q_target * conj(q))`` taking ``q`` to ``q_target``."""
    return 2.0 * quat_log(quat_product(q_target, quat_conjugate(q)))


def quat_angle(a, b):
    """Geodesic rotation angle in radians between two orientations."""
    rel = quat_product(a, quat_conjugate(b))
    return 2.0 * np.arctan2(np.linalg.norm(rel[..., 1:], axis=-1), np.abs(rel[..., 0]))


def quat_rotate(q, v):
    """Rotate vector(s) ``v`` by unit quaternion(s) ``q``."""
    q = _as_quat(q)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    r = q[..., 1:]
    t = 2.0 * np.cross(r, v)
    return v + w * t + np.cross(r, t)

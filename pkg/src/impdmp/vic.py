"""Variable impedance control law and a closed-loop rigid-body simulator."""
import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrationError, ParseError, ValidationError
from .quaternion import quat_conjugate, quat_log, quat_normalize, quat_product, quat_rotate

logger = logging.getLogger(__name__)

TRACE_HEADER = ("t", "ex", "ey", "ez", "erx", "ery", "erz", "fx", "fy", "fz", "tx", "ty", "tz",
                "kx", "ky", "kz", "krx", "kry", "krz")
DIVERGENCE_LIMIT = 1e3
STIFFNESS_MODES = ("variable", "min", "max")


@dataclass(frozen=True)
class Wrench:
    """Force (N) and torque (N m)."""
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        force = np.array(self.force, dtype=float).reshape(3)
        torque = np.array(self.torque, dtype=float).reshape(3)
        if not (np.all(np.isfinite(force)) and np.all(np.isfinite(torque))):
            raise ValidationError("wrench components must be finite")
        object.__setattr__(self, "force", force)
        object.__setattr__(self, "torque", torque)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    def as_vector(self):
        return np.concatenate([self.force, self.torque])

    def __add__(self, other):
        return Wrench(self.force + other.force, self.torque + other.torque)


def damping_from_stiffness(k):
    """Diagonal damping ``D = sqrt(2 K)`` for diagonal stiffness ``k``."""
    k = np.asarray(k, dtype=float)
    if np.any(~(k > 0.0)):
        raise DomainError("stiffness must be positive to derive damping")
    return np.sqrt(2.0 * k)


def pose_error(p_ref, q_ref, p, q):
    """Position error ``p_ref - p`` and orientation error ``2 log(q_ref * conj(q))``."""
    e_p = np.asarray(p_ref, dtype=float) - np.asarray(p, dtype=float)
    e_r = 2.0 * quat_log(quat_product(q_ref, quat_conjugate(q)))
    return e_p, e_r


def compute_wrench(k, ref_pose, actual_pose, ref_twist, actual_twist, ff=None):
    """Impedance wrench ``K e + D de + ff``.

    Parameters
    ----------
    k : array, shape (6,)
        Diagonal stiffness, translational then rotational.
    ref_pose, actual_pose : tuple (p, q)
        Positions (m) and unit quaternions.
    ref_twist, actual_twist : tuple (v, omega)
        Linear (m/s) and angular (rad/s) velocities.
    ff : Wrench, optional
        Feed-forward wrench added unchanged.

    Returns
    -------
    wrench : Wrench
    """
    k = np.asarray(k, dtype=float).reshape(6)
    d = damping_from_stiffness(k)
    e_p, e_r = pose_error(ref_pose[0], ref_pose[1], actual_pose[0], actual_pose[1])
    e = np.concatenate([e_p, e_r])
    e_dot = (np.concatenate([np.asarray(ref_twist[0], float), np.asarray(ref_twist[1], float)])
             - np.concatenate([np.asarray(actual_twist[0], float), np.asarray(actual_twist[1], float)]))
    w = k * e + d * e_dot
    if ff is not None:
        w = w + ff.as_vector()
    return Wrench(w[:3], w[3:])


def map_to_joint_torques(w, J):
    """Joint torques ``J^T w`` for a 6 x n Jacobian."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != 6 or J.shape[1] < 1:
        raise ValidationError("Jacobian must have shape (6, n)")
    vec = w.as_vector() if isinstance(w, Wrench) else np.asarray(w, dtype=float).reshape(6)
    return J.T @ vec


@dataclass
class SimBody:
    """Free rigid body standing in for the end effector and payload."""
    mass: float = 1.0
    inertia: np.ndarray = field(default_factory=lambda: np.full(3, 0.01))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.inertia = np.broadcast_to(np.asarray(self.inertia, dtype=float), (3,)).copy()
        self.position = np.asarray(self.position, dtype=float).reshape(3).copy()
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3).copy()
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float).reshape(3).copy()
        if not self.mass > 0.0 or np.any(~(self.inertia > 0.0)):
            raise ValidationError("mass and inertia must be positive")
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValidationError("body orientation must be a unit quaternion")
        self.quaternion = quat_normalize(q)

    def energy(self, k=None, e=None):
        """Kinetic energy, plus spring energy ``0.5 e^T K e`` if given."""
        omega_b = quat_rotate(quat_conjugate(self.quaternion), self.angular_velocity)
        kinetic = 0.5 * self.mass * self.velocity @ self.velocity + 0.5 * omega_b @ (self.inertia * omega_b)
        if k is None:
            return float(kinetic)
        return float(kinetic + 0.5 * np.sum(np.asarray(k) * np.asarray(e) ** 2))


@dataclass(frozen=True)
class Disturbance:
    """Constant external wrench applied for ``t_on <= t < t_off``."""
    t_on: float
    t_off: float
    wrench: Wrench

    def active(self, t):
        return self.t_on <= t < self.t_off


@dataclass
class Reference:
    """Pose and stiffness samples on a uniform grid."""
    t: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    stiffness: np.ndarray

    @classmethod
    def from_rollout(cls, result):
        return cls(result.t, result.positions, result.quaternions, result.stiffness)

    def twist(self):
        """Reference velocities by central differences of the samples."""
        from .dmp import angular_velocity
        v = np.gradient(self.positions, self.t, axis=0, edge_order=2)
        return v, angular_velocity(self.quaternions, self.t)


@dataclass
class SimTrace:
    """Per-step record of a closed-loop simulation."""
    t: np.ndarray
    ref_positions: np.ndarray
    ref_quaternions: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    velocities: np.ndarray
    angular_velocities: np.ndarray
    position_error: np.ndarray
    orientation_error: np.ndarray
    wrench: np.ndarray
    stiffness: np.ndarray

    @property
    def errors(self):
        return np.concatenate([self.position_error, self.orientation_error], axis=1)

    def mean_abs_error(self, mask=None):
        """Mean absolute tracking error per axis (m, then rad)."""
        e = np.abs(self.errors)
        if mask is not None:
            e = e[np.asarray(mask)]
        return e.mean(axis=0)

    def to_csv(self, path):
        data = np.column_stack([self.t, self.position_error, self.orientation_error,
                                self.wrench, self.stiffness])
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for row in data:
                writer.writerow([repr(float(v)) for v in row])


def apply_stiffness_mode(stiffness, mode, bounds, axes="all"):
    """Replace a stiffness schedule by a constant-bound one.

    Parameters
    ----------
    stiffness : array, shape (n, 6)
    mode : {"variable", "min", "max"}
    bounds : StiffnessBounds
    axes : {"all", "translational", "rotational"}
        Axes that follow ``mode``; the others are held at ``k_max``.
    """
    if mode not in STIFFNESS_MODES:
        raise ValidationError(f"stiffness mode must be one of {STIFFNESS_MODES}")
    selected = {"all": np.ones(6, bool), "translational": np.arange(6) < 3,
                "rotational": np.arange(6) >= 3}.get(axes)
    if selected is None:
        raise ValidationError("axes must be all, translational or rotational")
    stiffness = np.array(stiffness, dtype=float)
    out = np.broadcast_to(bounds.k_max, stiffness.shape).copy()
    if mode == "variable":
        out[:, selected] = stiffness[:, selected]
    else:
        level = bounds.k_min if mode == "min" else bounds.k_max
        out[:, selected] = level[selected]
    return out


def simulate(reference, body=None, disturbances=(), dt=1e-3, ff=None, gravity=False,
             initial_pose=None):
    """Track a reference with the impedance law on a free rigid body.

    The body starts at the reference's initial twist and, unless
    ``initial_pose`` is given, at its initial pose. Each step
    computes the wrench from the current stiffness sample (held between
    reference samples), adds active disturbances and optional gravity, then
    advances with semi-implicit Euler: velocities first, then poses, with the
    orientation updated by ``q <- exp(dt omega / 2) * q``. Rotational dynamics
    are integrated in the body frame with the diagonal inertia.

    Parameters
    ----------
    reference : Reference
        Uniform grid whose step is an integer multiple of ``dt``.
    body : SimBody, optional
        Mass and inertia; its own pose and twist are ignored. Defaults to
        1 kg and 0.01 kg m^2.
    disturbances : sequence of Disturbance
    dt : float
    ff : Wrench, optional
        Constant feed-forward wrench.
    gravity : bool
        Apply ``-9.81 m/s^2`` along z (not compensated unless ``ff`` does).
    initial_pose : tuple (p, q), optional
        Start pose of the body, e.g. to observe settling from an offset.

    Returns
    -------
    trace : SimTrace

    Raises
    ------
    IntegrationError
        If the body position leaves a 1000 m ball.
    """
    if not dt > 0.0:
        raise ValidationError("dt must be positive")
    t_ref = np.asarray(reference.t, dtype=float)
    steps = np.diff(t_ref)
    if len(t_ref) < 2 or not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0):
        raise ValidationError("reference must be sampled on a uniform grid")
    ratio = steps[0] / dt
    sub = int(round(ratio))
    if sub < 1 or abs(ratio - sub) > 1e-6 * max(ratio, 1.0):
        raise ValidationError(f"dt = {dt} must divide the reference step {steps[0]}")
    body = SimBody() if body is None else body
    p_ref = np.asarray(reference.positions, dtype=float)
    q_ref = np.asarray(reference.quaternions, dtype=float)
    k_ref = np.asarray(reference.stiffness, dtype=float)
    damping = damping_from_stiffness(k_ref)
    v_ref, w_ref = reference.twist()
    ff_vec = np.zeros(6) if ff is None else ff.as_vector()
    dist = [(d.t_on, d.t_off, d.wrench.as_vector()) for d in disturbances]

    n = (len(t_ref) - 1) * sub
    t = t_ref[0] + np.arange(n + 1) * dt
    rec = {name: np.empty((n + 1, size)) for name, size in (
        ("p", 3), ("q", 4), ("v", 3), ("w", 3), ("ep", 3), ("er", 3), ("wrench", 6), ("k", 6))}
    ref_idx = np.minimum(np.arange(n + 1) // sub, len(t_ref) - 1)

    if initial_pose is None:
        p, q = p_ref[0].copy(), quat_normalize(q_ref[0])
    else:
        p = np.asarray(initial_pose[0], dtype=float).reshape(3).copy()
        q = quat_normalize(np.asarray(initial_pose[1], dtype=float).reshape(4))
    v = v_ref[0].copy()
    w = w_ref[0].copy()
    inertia = body.inertia
    mass = body.mass
    for i in range(n + 1):
        j = ref_idx[i]
        e_p = p_ref[j] - p
        e_r = 2.0 * quat_log(quat_product(q_ref[j], quat_conjugate(q)))
        e = np.concatenate([e_p, e_r])
        e_dot = np.concatenate([v_ref[j] - v, w_ref[j] - w])
        wrench = k_ref[j] * e + damping[j] * e_dot + ff_vec
        rec["p"][i], rec["q"][i], rec["v"][i], rec["w"][i] = p, q, v, w
        rec["ep"][i], rec["er"][i], rec["wrench"][i], rec["k"][i] = e_p, e_r, wrench, k_ref[j]
        if i == n:
            break
        total = wrench.copy()
        for t_on, t_off, extra in dist:
            if t_on <= t[i] < t_off:
                total += extra
        if gravity:
            total[2] -= 9.81 * mass
        v = v + dt * total[:3] / mass
        p = p + dt * v
        # rigid-body rotation in the body frame
        q_inv = quat_conjugate(q)
        w_b = quat_rotate(q_inv, w)
        tau_b = quat_rotate(q_inv, total[3:])
        w_b = w_b + dt * (tau_b - np.cross(w_b, inertia * w_b)) / inertia
        w = quat_rotate(q, w_b)
        q = _integrate_orientation(q, w, dt)
        if not np.all(np.isfinite(p)) or p @ p > DIVERGENCE_LIMIT ** 2:
            raise IntegrationError(f"simulation diverged at t = {t[i + 1]:.4g} s")
    return SimTrace(t, p_ref[ref_idx], q_ref[ref_idx], rec["p"], rec["q"], rec["v"], rec["w"],
                    rec["ep"], rec["er"], rec["wrench"], rec["k"])


def _integrate_orientation(q, omega, dt):
    half = 0.5 * dt * omega
    theta = np.sqrt(half @ half)
    dq = np.concatenate([[np.cos(theta)], np.sinc(theta / np.pi) * half])
    return quat_product(dq, q)


def parse_disturbances(text, source="<string>"):
    """Parse a disturbance script.

    The script is a JSON list of objects ``{"t_on", "t_off", "force",
    "torque"}``; ``force`` and ``torque`` are 3-vectors and default to zero.

    Raises
    ------
    ParseError
        With the line number of the offending text or entry.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, source, exc.lineno) from None
    if not isinstance(data, list):
        raise ParseError("disturbance script must be a JSON list", source, 1)
    lines = _entry_lines(text)
    out = []
    for idx, entry in enumerate(data):
        line = lines[idx] if idx < len(lines) else None
        if not isinstance(entry, dict):
            raise ParseError(f"entry {idx} is not an object", source, line)
        unknown = set(entry) - {"t_on", "t_off", "force", "torque"}
        if unknown:
            raise ParseError(f"entry {idx}: unknown keys {sorted(unknown)}", source, line)
        try:
            t_on, t_off = float(entry["t_on"]), float(entry["t_off"])
            force = np.asarray(entry.get("force", [0.0, 0.0, 0.0]), dtype=float)
            torque = np.asarray(entry.get("torque", [0.0, 0.0, 0.0]), dtype=float)
        except KeyError as exc:
            raise ParseError(f"entry {idx}: missing key {exc.args[0]!r}", source, line) from None
        except (TypeError, ValueError) as exc:
            raise ParseError(f"entry {idx}: {exc}", source, line) from None
        if force.shape != (3,) or torque.shape != (3,):
            raise ParseError(f"entry {idx}: force and torque must have 3 components", source, line)
        if not (np.isfinite(t_on) and np.isfinite(t_off)) or t_off < t_on:
            raise ParseError(f"entry {idx}: need finite t_on <= t_off", source, line)
        try:
            out.append(Disturbance(t_on, t_off, Wrench(force, torque)))
        except ValidationError as exc:
            raise ParseError(f"entry {idx}: {exc}", source, line) from None
    return out


def load_disturbances(path):
    with open(path, encoding="utf-8") as f:
        return parse_disturbances(f.read(), path)


def _entry_lines(text):
    """Line numbers where the elements of a top-level JSON array begin."""
    lines = []
    depth = 0
    in_string = escape = False
    expect = False
    line = 1
    for ch in text:
        if ch == "\n":
            line += 1
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if expect and not ch.isspace() and ch not in "],":
            lines.append(line)
            expect = False
        if ch == '"':
            in_string = True
        elif ch in "[{":
            depth += 1
            if depth == 1 and ch == "[":
                expect = True
        elif ch in "]}":
            depth -= 1
        elif ch == "," and depth == 1:
            expect = True
    return lines


def disturbances_to_json(disturbances):
    return json.dumps([{"t_on": d.t_on, "t_off": d.t_off, "force": d.wrench.force.tolist(),
                        "torque": d.wrench.torque.tolist()} for d in disturbances], indent=2)

r"""Extended DMP coupling position, orientation and stiffness.

All three transformation systems share one canonical system
:math:`\tau \dot{x} = -\alpha_x x`:

.. math::

    \tau \dot{y} &= \alpha_p(\beta_p(p_g - p) - y) + G_p f_p(x),
    \quad \tau \dot{p} = y \\
    \tau \dot{z} &= \alpha_k(\beta_k(k_g - k) - z) + G_k f_k(x),
    \quad \tau \dot{k} = z \\
    \tau \dot{\eta} &= \alpha_q(\beta_q 2\log(q_g * \bar{q}) - \eta) + G_q f_q(x),
    \quad \tau \dot{q} = \tfrac{1}{2} \eta * q

with diagonal spatial scalings :math:`G_p = diag(p_g - p_0)`,
:math:`G_k = diag(k_g - k_0)` and :math:`G_q = diag(2\log(q_g * \bar{q}_0))`,
and forcing terms

.. math::

    f(x) = \frac{\sum_s \theta_s \psi_s(x)}{\sum_s \psi_s(x)} x, \quad
    \psi_s(x) = \exp(-h_s (x - c_s)^2)
"""
import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError, ScalingWarning, ValidationError
from .quaternion import (hemisphere_align, quat_angle, quat_conjugate, quat_exp, quat_log,
                         quat_normalize, quat_product)
from .stiffness import StiffnessBounds

logger = logging.getLogger(__name__)

SCALING_TOL = 1e-6
QUAT_DRIFT_TOL = 1e-6
ROLLOUT_HEADER = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz",
                  "kx", "ky", "kz", "krx", "kry", "krz")


@dataclass(frozen=True)
class CanonicalSystem:
    """Phase dynamics ``tau * dx/dt = -alpha_x * x`` with ``x(0) = 1``."""
    alpha_x: float = 6.0
    tau: float = 1.0

    def __post_init__(self):
        if not (self.alpha_x > 0.0 and self.tau > 0.0):
            raise ValidationError("alpha_x and tau must be positive")

    def phase(self, t):
        return np.exp(-self.alpha_x * np.asarray(t, dtype=float) / self.tau)


def phase(cs, t):
    """Closed-form phase ``exp(-alpha_x t / tau)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValidationError("phase is defined for t >= 0")
    return cs.phase(t)


@dataclass(frozen=True)
class BasisSet:
    """Gaussian basis functions over the phase.

    Attributes
    ----------
    centers : array, shape (S,)
        Strictly decreasing, in (0, 1].
    widths : array, shape (S,)
        Positive inverse squared widths ``h_s``.
    """
    centers: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        h = np.array(self.widths, dtype=float)
        if c.ndim != 1 or c.shape != h.shape or len(c) == 0:
            raise ValidationError("centers and widths must be equal-length vectors")
        if np.any(c <= 0.0) or np.any(c > 1.0) or np.any(np.diff(c) >= 0.0):
            raise ValidationError("centers must be strictly decreasing in (0, 1]")
        if np.any(h <= 0.0):
            raise ValidationError("widths must be positive")
        c.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", h)

    @property
    def n_basis(self):
        return len(self.centers)

    @classmethod
    def uniform_in_time(cls, n_basis, alpha_x, overlap=0.5):
        """Centers equally spaced in time over the nominal duration.

        Each width is chosen so that a basis function has decayed to
        ``overlap`` at the center of its successor.
        """
        if n_basis < 1:
            raise ValidationError("need at least one basis function")
        centers = np.exp(-alpha_x * np.linspace(0.0, 1.0, n_basis))
        if n_basis == 1:
            return cls(centers, np.ones(1))
        gaps = -np.diff(centers)
        widths = np.empty(n_basis)
        widths[:-1] = -np.log(overlap) / gaps ** 2
        widths[-1] = widths[-2]
        return cls(centers, widths)


def basis_activation(basis, x):
    """Unnormalized activations ``exp(-h_s (x - c_s)^2)``, shape (..., S)."""
    x = np.asarray(x, dtype=float)[..., np.newaxis]
    return np.exp(-basis.widths * (x - basis.centers) ** 2)


def forcing_term(basis, weights, x):
    """Normalized weighted basis sum times the phase.

    Parameters
    ----------
    basis : BasisSet
    weights : array, shape (n_dims, S)
    x : float or array, shape (n,)

    Returns
    -------
    f : array, shape (..., n_dims)
    """
    x = np.asarray(x, dtype=float)
    log_psi = -basis.widths * (x[..., np.newaxis] - basis.centers) ** 2
    # shifting by the max leaves the ratio unchanged and avoids 0/0
    psi = np.exp(log_psi - log_psi.max(axis=-1, keepdims=True))
    f = (psi @ np.asarray(weights, dtype=float).T) / psi.sum(axis=-1, keepdims=True)
    return f * x[..., np.newaxis]


def lwr_weights(basis, x, targets):
    """Locally weighted regression of forcing targets on the phase.

    Solves one weighted least-squares problem per basis function,
    ``theta_s = sum_j psi_s(x_j) x_j F_j / sum_j psi_s(x_j) x_j^2``.

    Parameters
    ----------
    basis : BasisSet
    x : array, shape (M,)
    targets : array, shape (M, n_dims)

    Returns
    -------
    weights : array, shape (n_dims, S)
    """
    x = np.asarray(x, dtype=float)
    psi = basis_activation(basis, x)
    num = (psi * x[:, np.newaxis]).T @ np.asarray(targets, dtype=float)
    den = psi.T @ (x ** 2)
    safe = den > np.finfo(float).tiny
    weights = np.zeros_like(num)
    weights[safe] = num[safe] / den[safe, np.newaxis]
    return weights.T


def ls_weights(basis, x, targets, ridge=1e-10):
    """Joint least-squares fit of all basis weights.

    Minimizes ``sum_j ||f(x_j) - F_j||^2`` over the same forcing-term model
    that :func:`lwr_weights` fits locally. A ridge term scaled by the mean
    diagonal of the normal matrix keeps nearly collinear late-phase bases
    well conditioned.
    """
    x = np.asarray(x, dtype=float)
    psi = basis_activation(basis, x)
    phi = psi / psi.sum(axis=1, keepdims=True) * x[:, np.newaxis]
    normal = phi.T @ phi
    lam = ridge * np.trace(normal) / len(normal)
    rhs = phi.T @ np.asarray(targets, dtype=float)
    return np.linalg.solve(normal + lam * np.eye(len(normal)), rhs).T


REGRESSORS = {"ls": ls_weights, "lwr": lwr_weights}


@dataclass(frozen=True)
class DmpGains:
    """Spring/damper gains; each beta defaults to alpha / 4 (critical damping)."""
    alpha_p: float = 48.0
    alpha_q: float = 48.0
    alpha_k: float = 48.0
    beta_p: float = None
    beta_q: float = None
    beta_k: float = None

    def __post_init__(self):
        for name in ("p", "q", "k"):
            alpha = getattr(self, f"alpha_{name}")
            if not alpha > 0.0:
                raise ValidationError(f"alpha_{name} must be positive")
            if getattr(self, f"beta_{name}") is None:
                object.__setattr__(self, f"beta_{name}", alpha / 4.0)

    def to_dict(self):
        return {k: float(getattr(self, k)) for k in
                ("alpha_p", "alpha_q", "alpha_k", "beta_p", "beta_q", "beta_k")}


def _vec(a, n):
    a = np.array(a, dtype=float).reshape(n)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DmpModel:
    """Fitted extended DMP.

    Weights are stored per system with shape (n_dims, S). The ``*_flags``
    masks mark dimensions whose spatial scaling was replaced by 1 because
    goal and start coincided during fitting.
    """
    canonical: CanonicalSystem
    basis: BasisSet
    gains: DmpGains
    weights_p: np.ndarray
    weights_q: np.ndarray
    weights_k: np.ndarray
    p0: np.ndarray
    pg: np.ndarray
    q0: np.ndarray
    qg: np.ndarray
    k0: np.ndarray
    kg: np.ndarray
    duration: float
    y0: np.ndarray = None
    eta0: np.ndarray = None
    z0: np.ndarray = None
    flags_p: np.ndarray = None
    flags_q: np.ndarray = None
    flags_k: np.ndarray = None
    bounds: StiffnessBounds = None

    def __post_init__(self):
        s = self.basis.n_basis
        for name, n in (("weights_p", 3), ("weights_q", 3), ("weights_k", 6)):
            w = np.array(getattr(self, name), dtype=float, order="C").reshape(n, s)
            w.setflags(write=False)
            object.__setattr__(self, name, w)
        for name, n in (("p0", 3), ("pg", 3), ("q0", 4), ("qg", 4), ("k0", 6), ("kg", 6)):
            object.__setattr__(self, name, _vec(getattr(self, name), n))
        for name, n in (("y0", 3), ("eta0", 3), ("z0", 6)):
            value = getattr(self, name)
            object.__setattr__(self, name, _vec(np.zeros(n) if value is None else value, n))
        for name, n in (("flags_p", 3), ("flags_q", 3), ("flags_k", 6)):
            value = getattr(self, name)
            flags = np.zeros(n, dtype=bool) if value is None else np.array(value, dtype=bool).reshape(n)
            flags.setflags(write=False)
            object.__setattr__(self, name, flags)
        object.__setattr__(self, "duration", float(self.duration))
        if not self.duration > 0.0:
            raise ValidationError("duration must be positive")

    @classmethod
    def from_anchors(cls, p0, pg, q0, qg, k0, kg, duration, n_basis=30, gains=None,
                     alpha_x=6.0, tau=None, bounds=None):
        """Model with all forcing weights zero: a pure goal attractor."""
        basis = BasisSet.uniform_in_time(n_basis, alpha_x)
        zeros = np.zeros
        return cls(CanonicalSystem(alpha_x, duration if tau is None else tau), basis,
                   gains or DmpGains(), zeros((3, n_basis)), zeros((3, n_basis)),
                   zeros((6, n_basis)), p0, pg, quat_normalize(q0), quat_normalize(qg), k0, kg,
                   duration, bounds=bounds)

    def scaling(self, pg=None, qg=None, kg=None):
        """Diagonal spatial scalings ``(G_p, G_q, G_k)`` for the given goals."""
        pg = self.pg if pg is None else np.asarray(pg, dtype=float)
        qg = self.qg if qg is None else np.asarray(qg, dtype=float)
        kg = self.kg if kg is None else np.asarray(kg, dtype=float)
        g_p = np.where(self.flags_p, 1.0, pg - self.p0)
        g_q = np.where(self.flags_q, 1.0, 2.0 * quat_log(quat_product(qg, quat_conjugate(self.q0))))
        g_k = np.where(self.flags_k, 1.0, kg - self.k0)
        return g_p, g_q, g_k

    def to_dict(self):
        d = {
            "alpha_x": self.canonical.alpha_x,
            "tau": self.canonical.tau,
            "duration": self.duration,
            "gains": self.gains.to_dict(),
            "centers": self.basis.centers.tolist(),
            "widths": self.basis.widths.tolist(),
            "bounds": None if self.bounds is None else self.bounds.to_dict(),
        }
        for name in ("weights_p", "weights_q", "weights_k", "p0", "pg", "q0", "qg", "k0", "kg",
                     "y0", "eta0", "z0", "flags_p", "flags_q", "flags_k"):
            d[name] = getattr(self, name).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        bounds = None if d.get("bounds") is None else StiffnessBounds.from_dict(d["bounds"])
        names = ("weights_p", "weights_q", "weights_k", "p0", "pg", "q0", "qg", "k0", "kg",
                 "y0", "eta0", "z0", "flags_p", "flags_q", "flags_k")
        return cls(CanonicalSystem(d["alpha_x"], d["tau"]), BasisSet(d["centers"], d["widths"]),
                   DmpGains(**d["gains"]), duration=d["duration"], bounds=bounds,
                   **{name: d[name] for name in names})


def _scaling(diff, label):
    flags = np.abs(diff) < SCALING_TOL
    if np.any(flags):
        msg = (f"{label}: goal equals start in dimension(s) {np.nonzero(flags)[0].tolist()}; "
               "spatial scaling replaced by 1")
        logger.warning(msg)
        warnings.warn(msg, ScalingWarning, stacklevel=3)
    return np.where(flags, 1.0, diff), flags


def angular_velocity(quaternions, t):
    """Angular velocity from a quaternion sequence by finite differences.

    Interior samples use ``2 log(q_{j+1} * conj(q_{j-1})) / (t_{j+1} - t_{j-1})``;
    the end samples use one-sided differences.
    """
    q = hemisphere_align(quaternions)
    t = np.asarray(t, dtype=float)
    omega = np.empty((len(q), 3))
    omega[1:-1] = (2.0 * quat_log(quat_product(q[2:], quat_conjugate(q[:-2])))
                   / (t[2:] - t[:-2])[:, np.newaxis])
    omega[0] = 2.0 * quat_log(quat_product(q[1], quat_conjugate(q[0]))) / (t[1] - t[0])
    omega[-1] = 2.0 * quat_log(quat_product(q[-1], quat_conjugate(q[-2]))) / (t[-1] - t[-2])
    return omega


def fit_trajectory(t, positions, quaternions, stiffness, n_basis=30, gains=None, alpha_x=6.0,
                   tau=None, overlap=0.5, bounds=None, regression="ls"):
    """Fit forcing-term weights of all three systems to one reference.

    Target forcing values come from inverting each transformation system with
    central finite differences, e.g. for position

    ``f_p(x_j) = G_p^-1 (tau^2 pdd_j - alpha_p (beta_p (p_g - p_j) - tau pd_j))``

    and analogously for stiffness and for orientation with
    ``eta_j = tau * omega_j``. Weights are then regressed on the phase,
    jointly (``"ls"``) or one basis at a time (``"lwr"``).

    Parameters
    ----------
    t : array, shape (M,)
        Uniform time grid.
    positions : array, shape (M, 3)
    quaternions : array, shape (M, 4)
    stiffness : array, shape (M, 6)
    n_basis : int
        Number of basis functions ``S``.
    gains : DmpGains, optional
    alpha_x : float
    tau : float, optional
        Time constant; defaults to the reference duration.
    overlap : float
        Basis overlap, see :meth:`BasisSet.uniform_in_time`.
    bounds : StiffnessBounds, optional
        Stored with the model and used to validate new stiffness goals.
    regression : {"ls", "lwr"}
        Weight estimator, see :func:`ls_weights` and :func:`lwr_weights`.

    Returns
    -------
    model : DmpModel
    """
    if regression not in REGRESSORS:
        raise ValidationError(f"regression must be one of {sorted(REGRESSORS)}")
    regress = REGRESSORS[regression]
    t = np.asarray(t, dtype=float)
    p = np.asarray(positions, dtype=float)
    k = np.asarray(stiffness, dtype=float)
    m = len(t)
    if m < 3 or p.shape != (m, 3) or k.shape != (m, 6) or np.shape(quaternions) != (m, 4):
        raise ValidationError("reference arrays must share a grid of at least 3 samples")
    steps = np.diff(t)
    if np.any(steps <= 0.0) or not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0):
        raise ValidationError("reference must be sampled on a uniform grid")
    q = hemisphere_align(quat_normalize(quaternions))
    gains = gains or DmpGains()
    tt = t - t[0]
    duration = float(tt[-1])
    tau = duration if tau is None else float(tau)
    cs = CanonicalSystem(alpha_x, tau)
    basis = BasisSet.uniform_in_time(n_basis, alpha_x, overlap)
    x = cs.phase(tt)

    p0, pg, k0, kg, q0, qg = p[0], p[-1], k[0], k[-1], q[0], q[-1]
    g_p, flags_p = _scaling(pg - p0, "position")
    g_k, flags_k = _scaling(kg - k0, "stiffness")
    g_q, flags_q = _scaling(2.0 * quat_log(quat_product(qg, quat_conjugate(q0))), "orientation")

    pd = np.gradient(p, tt, axis=0, edge_order=2)
    pdd = np.gradient(pd, tt, axis=0, edge_order=2)
    f_p = (tau ** 2 * pdd - gains.alpha_p * (gains.beta_p * (pg - p) - tau * pd)) / g_p

    kd = np.gradient(k, tt, axis=0, edge_order=2)
    kdd = np.gradient(kd, tt, axis=0, edge_order=2)
    f_k = (tau ** 2 * kdd - gains.alpha_k * (gains.beta_k * (kg - k) - tau * kd)) / g_k

    eta = tau * angular_velocity(q, tt)
    eta_d = np.gradient(eta, tt, axis=0, edge_order=2)
    err_q = 2.0 * quat_log(quat_product(qg, quat_conjugate(q)))
    f_q = (tau * eta_d - gains.alpha_q * (gains.beta_q * err_q - eta)) / g_q

    return DmpModel(cs, basis, gains, regress(basis, x, f_p), regress(basis, x, f_q),
                    regress(basis, x, f_k), p0, pg, q0, qg, k0, kg, duration,
                    y0=tau * pd[0], eta0=eta[0], z0=tau * kd[0],
                    flags_p=flags_p, flags_q=flags_q, flags_k=flags_k, bounds=bounds)


def fit(dist, profile, n_basis=30, gains=None, alpha_x=6.0, tau=None, overlap=0.5,
        regression="ls"):
    """Fit a :class:`DmpModel` to a trajectory distribution and stiffness profile."""
    if len(dist.grid) != len(profile.grid) or not np.allclose(dist.grid, profile.grid):
        raise ValidationError("distribution and stiffness profile use different grids")
    return fit_trajectory(dist.grid, dist.positions, dist.quaternions, profile.k, n_basis=n_basis,
                          gains=gains, alpha_x=alpha_x, tau=tau, overlap=overlap,
                          bounds=profile.bounds, regression=regression)


@dataclass
class RolloutResult:
    """Pose and stiffness trajectory sampled every ``dt``."""
    t: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    stiffness: np.ndarray
    goals: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    def sample(self, grid):
        """Interpolate onto another time grid (positions and stiffness linearly,
        orientations along the geodesic)."""
        from .preprocess import _resample_quaternions
        grid = np.asarray(grid, dtype=float)
        p = np.column_stack([np.interp(grid, self.t, self.positions[:, d]) for d in range(3)])
        k = np.column_stack([np.interp(grid, self.t, self.stiffness[:, d]) for d in range(6)])
        q = _resample_quaternions(self.t, self.quaternions, np.clip(grid, self.t[0], self.t[-1]))
        return RolloutResult(grid, p, q, k, dict(self.goals))

    def to_csv(self, path):
        data = np.column_stack([self.t, self.positions, self.quaternions, self.stiffness])
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(ROLLOUT_HEADER)
            for row in data:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        from .errors import ParseError
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != ROLLOUT_HEADER:
                raise ParseError(f"expected header {','.join(ROLLOUT_HEADER)}", path, 1)
            rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(ROLLOUT_HEADER):
                    raise ParseError(f"expected {len(ROLLOUT_HEADER)} fields", path, reader.line_num)
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ParseError(str(exc), path, reader.line_num) from None
        if len(rows) < 2:
            raise ParseError("need at least 2 samples", path)
        data = np.array(rows)
        return cls(data[:, 0], data[:, 1:4], quat_normalize(data[:, 4:8]), data[:, 8:14])


GOAL_KEYS = ("p_g", "q_g", "k_g", "tau")


def rollout(model, dt=1e-3, goals=None, bounds=None):
    """Integrate the extended DMP with explicit Euler steps.

    Orientation uses the geometric update ``q <- exp(dt eta / (2 tau)) * q``,
    which keeps the state on the unit sphere.

    Parameters
    ----------
    model : DmpModel
    dt : float
        Integration and output step in seconds.
    goals : dict, optional
        Overrides for ``p_g``, ``q_g``, ``k_g`` and ``tau``. The spatial
        scalings are recomputed from the new goals; a new ``tau`` rescales the
        duration to ``duration * tau_new / tau``.
    bounds : StiffnessBounds, optional
        Limits for ``k_g``; defaults to the bounds stored in the model.

    Returns
    -------
    result : RolloutResult

    Raises
    ------
    ValidationError
        On unknown goal keys, ``dt <= 0`` or ``k_g`` outside the bounds.
    IntegrationError
        If the state diverges or the quaternion norm drifts beyond 1e-6 in
        a single step.
    """
    if not dt > 0.0:
        raise ValidationError("dt must be positive")
    goals = dict(goals or {})
    unknown = set(goals) - set(GOAL_KEYS)
    if unknown:
        raise ValidationError(f"unknown goal keys {sorted(unknown)}")
    pg = np.asarray(goals.get("p_g", model.pg), dtype=float).reshape(3)
    qg = quat_normalize(np.asarray(goals.get("q_g", model.qg), dtype=float).reshape(4))
    if np.dot(qg, model.q0) < 0.0:
        qg = -qg
    kg = np.asarray(goals.get("k_g", model.kg), dtype=float).reshape(6)
    tau = float(goals.get("tau", model.canonical.tau))
    if not tau > 0.0:
        raise ValidationError("tau must be positive")
    bounds = bounds if bounds is not None else model.bounds
    if "k_g" in goals and bounds is not None and not bounds.contains(kg):
        raise ValidationError(f"stiffness goal {kg.tolist()} outside bounds "
                              f"[{bounds.k_min.tolist()}, {bounds.k_max.tolist()}]")

    duration = model.duration * tau / model.canonical.tau
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    x = np.exp(-model.canonical.alpha_x * t / tau)
    g_p, g_q, g_k = model.scaling(pg, qg, kg)
    force_p = forcing_term(model.basis, model.weights_p, x) * g_p
    force_q = forcing_term(model.basis, model.weights_q, x) * g_q
    force_k = forcing_term(model.basis, model.weights_k, x) * g_k

    gn = model.gains
    positions = np.empty((n + 1, 3))
    quaternions = np.empty((n + 1, 4))
    stiffness = np.empty((n + 1, 6))
    p, y = model.p0.copy(), model.y0.copy()
    k, z = model.k0.copy(), model.z0.copy()
    q, eta = model.q0.copy(), model.eta0.copy()
    for i in range(n + 1):
        positions[i], quaternions[i], stiffness[i] = p, q, k
        if i == n:
            break
        yd = (gn.alpha_p * (gn.beta_p * (pg - p) - y) + force_p[i]) / tau
        zd = (gn.alpha_k * (gn.beta_k * (kg - k) - z) + force_k[i]) / tau
        err_q = 2.0 * quat_log(quat_product(qg, quat_conjugate(q)))
        eta_d = (gn.alpha_q * (gn.beta_q * err_q - eta) + force_q[i]) / tau
        p = p + dt * y / tau
        y = y + dt * yd
        k = k + dt * z / tau
        z = z + dt * zd
        q = _rotate_step(q, dt * eta / (2.0 * tau))
        eta = eta + dt * eta_d
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(k)) and np.all(np.isfinite(eta))):
            raise IntegrationError(f"DMP state diverged at t = {t[i + 1]:.4g} s")
    if np.any(stiffness <= 0.0):
        logger.warning("rollout stiffness is not positive everywhere (min %.4g)", stiffness.min())
    return RolloutResult(t, positions, quaternions, stiffness,
                         {"p_g": pg, "q_g": qg, "k_g": kg, "tau": tau})


def _rotate_step(q, half_angle_vec):
    theta = np.sqrt(half_angle_vec @ half_angle_vec)
    dq = np.empty(4)
    dq[0] = np.cos(theta)
    dq[1:] = np.sinc(theta / np.pi) * half_angle_vec
    w1, x1, y1, z1 = dq
    w2, x2, y2, z2 = q
    out = np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])
    norm = np.sqrt(out @ out)
    if abs(norm - 1.0) > QUAT_DRIFT_TOL or not np.isfinite(norm):
        raise IntegrationError(f"quaternion norm drifted to {norm:.9g}; reduce dt")
    return out / norm


def reproduction_errors(model, dist, profile, dt=1e-3):
    """RMS errors of an unmodified rollout against its training reference.

    Returns
    -------
    errors : dict
        ``position`` (m, Euclidean), ``orientation`` (rad, geodesic) and
        ``stiffness`` (per axis) RMSE.
    """
    result = rollout(model, dt=dt).sample(dist.grid - dist.grid[0])
    pos = np.sqrt(np.mean(np.sum((result.positions - dist.positions) ** 2, axis=1)))
    ori = np.sqrt(np.mean(quat_angle(result.quaternions, dist.quaternions) ** 2))
    stiff = np.sqrt(np.mean((result.stiffness - profile.k) ** 2, axis=0))
    return {"position": float(pos), "orientation": float(ori), "stiffness": stiff}

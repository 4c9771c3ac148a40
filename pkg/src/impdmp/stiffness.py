"""Map demonstration spread to stiffness with the quadratic indicator function."""
import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import DegenerateVarianceError, DegenerateVarianceWarning, ValidationError

logger = logging.getLogger(__name__)

AXES = ("kx", "ky", "kz", "krx", "kry", "krz")
DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class StiffnessBounds:
    """Per-axis stiffness limits: 3 translational (N/m), 3 rotational (N m/rad)."""
    k_min: np.ndarray
    k_max: np.ndarray

    def __post_init__(self):
        k_min = np.broadcast_to(np.asarray(self.k_min, dtype=float), (6,)).copy()
        k_max = np.broadcast_to(np.asarray(self.k_max, dtype=float), (6,)).copy()
        if not (np.all(k_min > 0.0) and np.all(k_min < k_max)):
            raise ValidationError("stiffness bounds need 0 < k_min < k_max on every axis")
        k_min.setflags(write=False)
        k_max.setflags(write=False)
        object.__setattr__(self, "k_min", k_min)
        object.__setattr__(self, "k_max", k_max)

    @classmethod
    def from_groups(cls, t_min=200.0, t_max=550.0, r_min=10.0, r_max=20.0):
        return cls([t_min] * 3 + [r_min] * 3, [t_max] * 3 + [r_max] * 3)

    @property
    def midpoint(self):
        return 0.5 * (self.k_min + self.k_max)

    @property
    def span(self):
        return self.k_max - self.k_min

    def contains(self, k, rtol=1e-9):
        k = np.asarray(k, dtype=float)
        slack = rtol * self.k_max
        return bool(np.all(k >= self.k_min - slack) and np.all(k <= self.k_max + slack))

    def to_dict(self):
        return {"k_min": self.k_min.tolist(), "k_max": self.k_max.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["k_min"], d["k_max"])


@dataclass
class StiffnessProfile:
    """Six stiffness time series on a grid.

    Attributes
    ----------
    grid : array, shape (M,)
    k : array, shape (M, 6)
    bounds : StiffnessBounds
    degenerate_axes : tuple of int
        Axes mapped to the bounds midpoint for lack of variance.
    """
    grid: np.ndarray
    k: np.ndarray
    bounds: StiffnessBounds
    degenerate_axes: tuple = field(default=())

    def to_dict(self):
        return {"grid": self.grid.tolist(), "k": self.k.tolist(),
                "bounds": self.bounds.to_dict(), "degenerate_axes": list(self.degenerate_axes)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["grid"], dtype=float), np.asarray(d["k"], dtype=float),
                   StiffnessBounds.from_dict(d["bounds"]), tuple(d.get("degenerate_axes", ())))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(("t",) + AXES)
            for t, row in zip(self.grid, self.k):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def stiffness_indicator(d, k_min, k_max):
    r"""Stiffness series from a standard-deviation series.

    Uses the left branch of an upward parabola through ``(d_max, k_min)``
    and ``(d_min, k_max)``:

    .. math::

        k(t) = a (d(t) - d_{max})^2 + k_{min}, \quad
        a = \frac{k_{max} - k_{min}}{(d_{min} - d_{max})^2}

    so low spread gives high stiffness.

    Parameters
    ----------
    d : array, shape (M,)
        Standard deviation along one axis.
    k_min, k_max : float
        Bounds for this axis.

    Returns
    -------
    k : array, shape (M,)

    Raises
    ------
    DegenerateVarianceError
        If ``d_max - d_min < 1e-12``.
    """
    d = np.asarray(d, dtype=float)
    d_min, d_max = d.min(), d.max()
    if d_max - d_min < DEGENERATE_SPREAD:
        raise DegenerateVarianceError(f"standard deviation spread {d_max - d_min:.3g} too small")
    a = (k_max - k_min) / (d_min - d_max) ** 2
    k = a * (d - d_max) ** 2 + k_min
    return np.clip(k, k_min, k_max)


def build_profiles(dist, bounds, smoothing=0):
    """Stiffness profiles for all six axes of a trajectory distribution.

    Axes without variance signal fall back to the bounds midpoint with a
    :class:`DegenerateVarianceWarning`; the other axes are unaffected.

    Parameters
    ----------
    dist : TrajectoryDistribution
    bounds : StiffnessBounds
    smoothing : int
        Moving-average window (samples) applied to the spread first;
        0 or 1 disables it.
    """
    stddev = np.asarray(dist.stddev, dtype=float)
    if smoothing and smoothing > 1:
        stddev = uniform_filter1d(stddev, size=int(smoothing), axis=0, mode="nearest")
    k = np.empty_like(stddev)
    degenerate = []
    for axis in range(6):
        try:
            k[:, axis] = stiffness_indicator(stddev[:, axis], bounds.k_min[axis], bounds.k_max[axis])
        except DegenerateVarianceError:
            k[:, axis] = bounds.midpoint[axis]
            degenerate.append(axis)
            msg = f"axis {AXES[axis]} has no variance signal; using constant {bounds.midpoint[axis]:g}"
            logger.warning(msg)
            warnings.warn(msg, DegenerateVarianceWarning, stacklevel=2)
    return StiffnessProfile(np.array(dist.grid, dtype=float), k, bounds, tuple(degenerate))

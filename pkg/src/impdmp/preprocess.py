"""Loading, time alignment and tangent-space projection of demonstrations."""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .quaternion import hemisphere_align, quat_conjugate, quat_exp, quat_log, quat_product

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz")
# Accepted deviation of an ingested quaternion from unit norm.
INGEST_NORM_TOL = 1e-3


@dataclass
class Demonstration:
    """One recorded pose trajectory.

    Attributes
    ----------
    t : array, shape (n,)
        Strictly increasing timestamps in seconds.
    positions : array, shape (n, 3)
        End-effector positions in meters.
    quaternions : array, shape (n, 4)
        Unit quaternions ``[w, x, y, z]``.
    name : str
        Label, usually the source file stem.
    """
    t: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.quaternions = np.asarray(self.quaternions, dtype=float)
        n = len(self.t)
        if self.t.ndim != 1 or self.positions.shape != (n, 3) or self.quaternions.shape != (n, 4):
            raise ValidationError(f"demonstration {self.name!r}: inconsistent array shapes")
        if n < 2:
            raise ValidationError(f"demonstration {self.name!r}: need at least 2 samples")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.positions))
                and np.all(np.isfinite(self.quaternions))):
            raise ValidationError(f"demonstration {self.name!r}: non-finite values")
        bad = np.nonzero(np.diff(self.t) <= 0.0)[0]
        if len(bad):
            raise ValidationError(
                f"demonstration {self.name!r}: timestamps not strictly increasing at sample {bad[0] + 1}")
        norms = np.linalg.norm(self.quaternions, axis=1)
        off = np.nonzero(np.abs(norms - 1.0) > INGEST_NORM_TOL + 1e-12)[0]
        if len(off):
            raise ValidationError(
                f"demonstration {self.name!r}: quaternion norm {norms[off[0]]:.6g} "
                f"at sample {off[0]} is not unit")
        self.quaternions = self.quaternions / norms[:, np.newaxis]

    def __len__(self):
        return len(self.t)


@dataclass
class AlignedDataset:
    """Demonstrations resampled on one shared time grid.

    Attributes
    ----------
    grid : array, shape (M,)
        Uniform grid on ``[0, T]``.
    positions : array, shape (N, M, 3)
    quaternions : array, shape (N, M, 4)
        Hemisphere-aligned per demonstration.
    tangents : array, shape (N, M, 3)
        ``quat_log`` of ``quaternions``.
    """
    grid: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    tangents: np.ndarray

    @property
    def n_demos(self):
        return self.positions.shape[0]

    @property
    def duration(self):
        return float(self.grid[-1])

    def pooled(self):
        """Stack all datapoints as rows ``(t, px, py, pz, ux, uy, uz)``."""
        n, m = self.positions.shape[:2]
        t = np.broadcast_to(self.grid[np.newaxis, :, np.newaxis], (n, m, 1))
        return np.concatenate([t, self.positions, self.tangents], axis=2).reshape(n * m, 7)

    def to_demonstrations(self):
        return [Demonstration(self.grid, self.positions[i], self.quaternions[i], name=f"aligned{i}")
                for i in range(self.n_demos)]


def read_demonstration(path):
    """Parse a single demonstration CSV file."""
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path) from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", path, 1)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}",
                                 path, reader.line_num)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(str(exc), path, reader.line_num) from None
    if not rows:
        raise ParseError("no samples", path)
    data = np.array(rows)
    return Demonstration(data[:, 0], data[:, 1:4], data[:, 4:8], name=path.stem)


def load_demonstrations(path):
    """Load demonstrations from a CSV file or a directory of CSV files.

    Files in a directory are read in sorted name order, one demonstration
    per file. Quaternions are renormalized on ingest.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".csv")
        if not files:
            raise ValidationError(f"no .csv files in {path}")
    else:
        files = [path]
    demos = []
    for f in files:
        try:
            demos.append(read_demonstration(f))
        except ValidationError as exc:
            raise ValidationError(f"{f}: {exc}") from None
    logger.info("loaded %d demonstrations from %s", len(demos), path)
    return demos


def write_demonstration(demo, path):
    data = np.column_stack([demo.t, demo.positions, demo.quaternions])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def _resample_quaternions(t, q, grid):
    # Geodesic interpolation in the tangent space of the earlier sample.
    q = hemisphere_align(q)
    idx = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 2)
    frac = (grid - t[idx]) / (t[idx + 1] - t[idx])
    frac = np.clip(frac, 0.0, 1.0)
    delta = quat_log(quat_product(q[idx + 1], quat_conjugate(q[idx])))
    out = quat_product(quat_exp(frac[:, np.newaxis] * delta), q[idx])
    out = np.where((frac == 0.0)[:, np.newaxis], q[idx], out)
    out = np.where((frac == 1.0)[:, np.newaxis], q[idx + 1], out)
    return hemisphere_align(out)


def time_align(demos, T=11.0, M=500):
    """Map every demonstration onto ``[0, T]`` and resample at ``M`` points.

    Each clock is mapped by ``t -> T (t - t0) / (t1 - t0)``. Positions are
    linearly interpolated, orientations are interpolated along the geodesic
    between neighbouring (hemisphere-aligned) samples.

    Parameters
    ----------
    demos : list of Demonstration
    T : float
        Common duration in seconds.
    M : int
        Number of uniform grid points, including both endpoints.

    Returns
    -------
    dataset : AlignedDataset
    """
    if not T > 0.0:
        raise ValidationError("T must be positive")
    if M < 2:
        raise ValidationError("M must be at least 2")
    if not demos:
        raise ValidationError("no demonstrations to align")
    grid = np.linspace(0.0, T, M)
    positions = np.empty((len(demos), M, 3))
    quaternions = np.empty((len(demos), M, 4))
    for i, demo in enumerate(demos):
        t0, t1 = demo.t[0], demo.t[-1]
        if t1 == t0:
            raise ValidationError(f"demonstration {demo.name!r} has zero duration")
        s = T * (demo.t - t0) / (t1 - t0)
        s[0], s[-1] = 0.0, T
        for d in range(3):
            positions[i, :, d] = np.interp(grid, s, demo.positions[:, d])
        quaternions[i] = _resample_quaternions(s, demo.quaternions, grid)
    tangents = to_tangent_space(quaternions)
    return AlignedDataset(grid, positions, quaternions, tangents)


def to_tangent_space(quaternions):
    """Apply ``quat_log`` elementwise to an (N, M, 4) quaternion grid."""
    quaternions = np.asarray(quaternions, dtype=float)
    return quat_log(quaternions)

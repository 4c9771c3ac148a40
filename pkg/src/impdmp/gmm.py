"""Gaussian mixture model fit by EM and Gaussian mixture regression over time."""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import logsumexp

from .errors import DegenerateDataError, ValidationError
from .quaternion import quat_exp

logger = logging.getLogger(__name__)

VARIANCE_SOURCES = ("empirical", "gmr")


def _frozen(a):
    a = np.array(a, dtype=float, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GmmModel:
    """Fitted mixture of ``H`` full-covariance Gaussians.

    Attributes
    ----------
    priors : array, shape (H,)
    means : array, shape (H, D)
    covariances : array, shape (H, D, D)
    seed : int
        Seed used for initialization.
    log_likelihood : tuple of float
        Mean per-sample log-likelihood after every E-step.
    """
    priors: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    seed: int = 0
    log_likelihood: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "priors", _frozen(self.priors))
        object.__setattr__(self, "means", _frozen(self.means))
        object.__setattr__(self, "covariances", _frozen(self.covariances))
        object.__setattr__(self, "log_likelihood", tuple(float(v) for v in self.log_likelihood))
        h, d = self.means.shape
        if self.priors.shape != (h,) or self.covariances.shape != (h, d, d):
            raise ValidationError("inconsistent GMM parameter shapes")

    @property
    def n_components(self):
        return len(self.priors)

    @property
    def n_dims(self):
        return self.means.shape[1]

    def to_dict(self):
        return {
            "H": self.n_components,
            "seed": int(self.seed),
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "covariances": [c.ravel().tolist() for c in self.covariances],
            "log_likelihood": list(self.log_likelihood),
        }

    @classmethod
    def from_dict(cls, d):
        means = np.asarray(d["means"], dtype=float)
        dim = means.shape[1]
        covs = np.asarray(d["covariances"], dtype=float).reshape(-1, dim, dim)
        return cls(d["priors"], means, covs, seed=d.get("seed", 0),
                   log_likelihood=d.get("log_likelihood", ()))


def _log_gaussian(X, mean, cov):
    """Log density of N(mean, cov) at the rows of X."""
    L = np.linalg.cholesky(cov)
    diff = solve_triangular(L, (X - mean).T, lower=True)
    maha = np.sum(diff ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (X.shape[1] * np.log(2.0 * np.pi) + logdet + maha)


def _floor(cov, eps):
    """Symmetrize; add ``eps * I`` if the smallest eigenvalue is below eps."""
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov)[0] < eps:
        return cov + eps * np.eye(len(cov)), True
    return cov, False


def _kmeans_labels(X, n_components, rng, max_iter=100):
    # Seeds are the centroids of equally populated time bins (column 0), so
    # components start spread along the trajectory instead of piling up.
    std = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(std > 0.0, std, 1.0)
    order = np.argsort(Z[:, 0], kind="stable")
    centroids = np.array([Z[chunk].mean(axis=0) for chunk in np.array_split(order, n_components)])
    labels = None
    for _ in range(max_iter):
        dist = ((Z[:, np.newaxis, :] - centroids[np.newaxis]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(n_components):
            members = Z[labels == k]
            if len(members):
                centroids[k] = members.mean(axis=0)
            else:
                centroids[k] = Z[rng.integers(len(Z))]
    return labels


def fit_em(data, n_components=6, seed=0, max_iter=500, tol=1e-8, reg=1e-8):
    """Fit a Gaussian mixture model with expectation maximization.

    Parameters
    ----------
    data : array, shape (n_samples, D)
        Datapoints; column 0 is time and drives the k-means seeding.
    n_components : int
        Number of Gaussians ``H``.
    seed : int
        Seed of the generator used to reseed empty k-means clusters.
    max_iter : int
        Maximum number of EM iterations.
    tol : float
        Stop when the mean per-sample log-likelihood improves by less.
    reg : float
        Covariance floor relative to the mean per-dimension data variance.

    Returns
    -------
    model : GmmModel

    Raises
    ------
    DegenerateDataError
        If a component keeps less than one datapoint of support for three
        consecutive iterations.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValidationError("data must be a 2-D array")
    n, dim = X.shape
    if n_components < 1 or n <= n_components:
        raise ValidationError(f"need more samples ({n}) than components ({n_components})")
    if not np.all(np.isfinite(X)):
        raise ValidationError("data contains non-finite values")
    rng = np.random.default_rng(seed)
    scale = float(np.mean(X.var(axis=0)))
    eps = reg * (scale if scale > 0.0 else 1.0)

    labels = _kmeans_labels(X, n_components, rng)
    global_cov = np.cov(X.T, bias=True).reshape(dim, dim)
    priors = np.empty(n_components)
    means = np.empty((n_components, dim))
    covs = np.empty((n_components, dim, dim))
    for k in range(n_components):
        members = X[labels == k]
        priors[k] = max(len(members), 1) / n
        if len(members) > 1:
            means[k] = members.mean(axis=0)
            covs[k] = _floor(np.cov(members.T, bias=True).reshape(dim, dim), eps)[0]
        else:
            means[k] = members[0] if len(members) else X[rng.integers(n)]
            covs[k] = _floor(global_cov, eps)[0]
    priors /= priors.sum()

    history = []
    starved = 0
    for it in range(max_iter + 1):
        log_p = np.column_stack([
            np.log(priors[k]) + _log_gaussian(X, means[k], covs[k]) for k in range(n_components)])
        log_norm = logsumexp(log_p, axis=1)
        history.append(float(np.mean(log_norm)))
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break
        if it == max_iter:
            break
        resp = np.exp(log_p - log_norm[:, np.newaxis])
        nk = resp.sum(axis=0)
        starved = starved + 1 if np.any(nk < 1.0) else 0
        if starved >= 3:
            raise DegenerateDataError(
                f"mixture component collapsed (support {nk.min():.3g} samples); reduce H")
        nk = np.maximum(nk, np.finfo(float).tiny)
        priors = nk / n
        means = (resp.T @ X) / nk[:, np.newaxis]
        for k in range(n_components):
            diff = X - means[k]
            covs[k] = _floor((resp[:, k, np.newaxis] * diff).T @ diff / nk[k], eps)[0]
    logger.debug("EM finished after %d iterations, mean log-likelihood %.6g", len(history) - 1, history[-1])
    return GmmModel(priors, means, covs, seed=seed, log_likelihood=history)


def responsibilities(model, data):
    """Posterior component probabilities of each datapoint, shape (n, H)."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    log_p = np.column_stack([
        np.log(model.priors[k]) + _log_gaussian(X, model.means[k], model.covariances[k])
        for k in range(model.n_components)])
    return np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))


def gmr_condition(model, t, in_dims=(0,)):
    """Gaussian mixture regression of the remaining dimensions on ``in_dims``.

    Parameters
    ----------
    model : GmmModel
    t : float or array, shape (n,) or (n, len(in_dims))
        Query inputs.
    in_dims : tuple of int
        Input dimensions of the joint model; all others are outputs.

    Returns
    -------
    mean : array, shape (n, D_out)
        Conditional mean (1-D if ``t`` was a scalar).
    variance : array, shape (n, D_out)
        Diagonal of the conditional covariance.
    """
    scalar = np.ndim(t) == 0
    in_dims = list(in_dims)
    out_dims = [d for d in range(model.n_dims) if d not in in_dims]
    T = np.asarray(t, dtype=float).reshape(-1, len(in_dims))
    H = model.n_components

    log_w = np.empty((len(T), H))
    cond_means = np.empty((H, len(T), len(out_dims)))
    cond_vars = np.empty((H, len(out_dims)))
    for k in range(H):
        mu, cov = model.means[k], model.covariances[k]
        s_ii = cov[np.ix_(in_dims, in_dims)]
        s_oi = cov[np.ix_(out_dims, in_dims)]
        s_oo = cov[np.ix_(out_dims, out_dims)]
        cf = cho_factor(s_ii, lower=True)
        gain = cho_solve(cf, s_oi.T).T
        log_w[:, k] = np.log(model.priors[k]) + _log_gaussian(T, mu[in_dims], s_ii)
        cond_means[k] = mu[out_dims] + (T - mu[in_dims]) @ gain.T
        cond_vars[k] = np.diag(s_oo - gain @ s_oi.T)
    h = np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))
    mean = np.einsum("nk,knd->nd", h, cond_means)
    second = np.einsum("nk,knd->nd", h, cond_vars[:, np.newaxis, :] + cond_means ** 2)
    variance = np.maximum(second - mean ** 2, 0.0)
    if scalar:
        return mean[0], variance[0]
    return mean, variance


@dataclass
class TrajectoryDistribution:
    """Mean pose trajectory with per-axis spread on a time grid.

    Attributes
    ----------
    grid : array, shape (M,)
    positions : array, shape (M, 3)
        Mean positions in meters.
    tangents : array, shape (M, 3)
        Mean tangent vectors.
    quaternions : array, shape (M, 4)
        ``quat_exp`` of the mean tangents.
    stddev : array, shape (M, 6)
        Translational (m) then rotational (rad) standard deviations.
    variance_source : str
        ``"empirical"`` (across demonstrations) or ``"gmr"`` (conditional).
    """
    grid: np.ndarray
    positions: np.ndarray
    tangents: np.ndarray
    quaternions: np.ndarray
    stddev: np.ndarray
    variance_source: str = "empirical"

    def to_dict(self):
        return {
            "variance_source": self.variance_source,
            "grid": self.grid.tolist(),
            "positions": self.positions.tolist(),
            "tangents": self.tangents.tolist(),
            "stddev": self.stddev.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        tangents = np.asarray(d["tangents"], dtype=float)
        return cls(np.asarray(d["grid"], dtype=float), np.asarray(d["positions"], dtype=float),
                   tangents, quat_exp(tangents), np.asarray(d["stddev"], dtype=float),
                   d.get("variance_source", "empirical"))


def fit_trajectory_models(dataset, n_components=6, seed=0, joint=True, **em_kwargs):
    """Fit GMMs on the pooled ``(t, p, u)`` datapoints of an aligned dataset.

    With ``joint=True`` a single 7-D model is fitted. Otherwise two 4-D models
    ``(t, p)`` and ``(t, u)`` are fitted, whose GMR outputs are concatenated.
    """
    data = dataset.pooled()
    if joint:
        return [fit_em(data, n_components, seed=seed, **em_kwargs)]
    return [fit_em(data[:, [0, 1, 2, 3]], n_components, seed=seed, **em_kwargs),
            fit_em(data[:, [0, 4, 5, 6]], n_components, seed=seed, **em_kwargs)]


def empirical_stddev(dataset):
    """Sample standard deviation across demonstrations at every grid point, shape (M, 6)."""
    stacked = np.concatenate([dataset.positions, dataset.tangents], axis=2)
    ddof = 1 if dataset.n_demos > 1 else 0
    return stacked.std(axis=0, ddof=ddof)


def build_distribution(models, grid, dataset=None, variance_source="empirical"):
    """Regress the mean trajectory and its spread over ``grid``.

    Parameters
    ----------
    models : GmmModel or list of GmmModel
        Output of :func:`fit_trajectory_models`; outputs are concatenated in
        order and must total 6 dimensions.
    grid : array, shape (M,)
    dataset : AlignedDataset, optional
        Required for ``variance_source="empirical"``; must share ``grid``.
    variance_source : {"empirical", "gmr"}
    """
    if isinstance(models, GmmModel):
        models = [models]
    if variance_source not in VARIANCE_SOURCES:
        raise ValidationError(f"variance_source must be one of {VARIANCE_SOURCES}")
    grid = np.asarray(grid, dtype=float)
    means, variances = zip(*(gmr_condition(m, grid) for m in models))
    mean = np.concatenate(means, axis=1)
    variance = np.concatenate(variances, axis=1)
    if mean.shape[1] != 6:
        raise ValidationError("models must regress exactly 6 pose dimensions")
    if variance_source == "gmr":
        stddev = np.sqrt(variance)
    else:
        if dataset is None:
            raise ValidationError("empirical variance source needs the aligned dataset")
        if len(dataset.grid) != len(grid) or not np.allclose(dataset.grid, grid):
            raise ValidationError("dataset grid differs from the regression grid")
        stddev = empirical_stddev(dataset)
    tangents = mean[:, 3:]
    return TrajectoryDistribution(grid, mean[:, :3], tangents, quat_exp(tangents), stddev,
                                  variance_source)

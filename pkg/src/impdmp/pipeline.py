"""End-to-end skill learning and the serialized skill bundle."""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dmp as dmp_mod
from .errors import ParseError, ValidationError
from .gmm import GmmModel, TrajectoryDistribution, build_distribution, fit_trajectory_models
from .preprocess import time_align
from .stiffness import StiffnessBounds, StiffnessProfile, build_profiles

logger = logging.getLogger(__name__)

BUNDLE_FORMAT = "impdmp-skill/1"


@dataclass
class LearnConfig:
    """Settings of the learning pipeline; defaults mirror the pouring experiment."""
    T: float = 11.0
    M: int = 500
    H: int = 6
    S: int = 30
    seed: int = 0
    k_min_t: float = 200.0
    k_max_t: float = 550.0
    k_min_r: float = 10.0
    k_max_r: float = 20.0
    variance_source: str = "empirical"
    joint: bool = True
    smoothing: int = 11
    alpha: float = 48.0
    alpha_x: float = 6.0
    tau: float = None
    overlap: float = 0.5
    regression: str = "ls"
    max_iter: int = 500
    tol: float = 1e-8

    @property
    def bounds(self):
        return StiffnessBounds.from_groups(self.k_min_t, self.k_max_t, self.k_min_r, self.k_max_r)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class SkillBundle:
    """Everything learned from one set of demonstrations."""
    config: LearnConfig
    models: list
    distribution: TrajectoryDistribution
    profile: StiffnessProfile
    dmp: dmp_mod.DmpModel
    summary: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "format": BUNDLE_FORMAT,
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "gmm": [m.to_dict() for m in self.models],
            "distribution": self.distribution.to_dict(),
            "stiffness": self.profile.to_dict(),
            "dmp": self.dmp.to_dict(),
            "summary": self.summary,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_json())

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != BUNDLE_FORMAT:
            raise ValidationError(f"not a skill bundle (format {d.get('format')!r})")
        config = LearnConfig(**d["config"])
        if d.get("config_hash") != config.digest():
            raise ValidationError("bundle config hash mismatch")
        return cls(config, [GmmModel.from_dict(m) for m in d["gmm"]],
                   TrajectoryDistribution.from_dict(d["distribution"]),
                   StiffnessProfile.from_dict(d["stiffness"]), dmp_mod.DmpModel.from_dict(d["dmp"]),
                   d.get("summary", {}))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, path, exc.lineno) from None
        try:
            return cls.from_dict(data)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ParseError(f"malformed skill bundle ({exc!r})", path) from None


def _jsonable(a):
    return np.asarray(a, dtype=float).tolist()


def learn(demos, config=None, evaluate=True):
    """Run alignment, GMM-GMR, stiffness estimation and DMP fitting.

    Parameters
    ----------
    demos : list of Demonstration
        At least two, since stiffness comes from the spread between them.
    config : LearnConfig, optional
    evaluate : bool
        Roll the fitted DMP out once and store reproduction errors in the
        bundle summary.

    Returns
    -------
    bundle : SkillBundle
    """
    config = config or LearnConfig()
    if len(demos) < 2:
        raise ValidationError("need >= 2 demonstrations for variance estimation")
    dataset = time_align(demos, config.T, config.M)
    models = fit_trajectory_models(dataset, config.H, seed=config.seed, joint=config.joint,
                                   max_iter=config.max_iter, tol=config.tol)
    dist = build_distribution(models, dataset.grid, dataset, config.variance_source)
    profile = build_profiles(dist, config.bounds, smoothing=config.smoothing)
    gains = dmp_mod.DmpGains(config.alpha, config.alpha, config.alpha)
    model = dmp_mod.fit(dist, profile, n_basis=config.S, gains=gains, alpha_x=config.alpha_x,
                        tau=config.tau, overlap=config.overlap,
                        regression=config.regression)
    summary = {
        "n_demos": len(demos),
        "d_min": _jsonable(dist.stddev.min(axis=0)),
        "d_max": _jsonable(dist.stddev.max(axis=0)),
        "degenerate_axes": list(profile.degenerate_axes),
        "em_iterations": [len(m.log_likelihood) - 1 for m in models],
    }
    if evaluate:
        errors = dmp_mod.reproduction_errors(model, dist, profile)
        summary["rmse_position"] = errors["position"]
        summary["rmse_orientation"] = errors["orientation"]
        summary["rmse_stiffness"] = _jsonable(errors["stiffness"])
    return SkillBundle(config, models, dist, profile, model, summary)

"""Gaussian KDE in 2D, HDR thresholds, and containment novelty scores.

The alpha-HDR of a density p is the level set {z : p(z) >= t_p(alpha)}
holding probability mass alpha. The threshold is estimated by sampling
from the density and taking the (1-alpha) empirical quantile of the
sampled log-densities (linear-interpolation quantile). Directional
containment is the probability, under one density, of landing inside the
other's HDR, normalized by alpha and capped at 1; the symmetric score is
the maximum over the two directions. A discovered cluster's best match
over the known classes yields the novelty statistic: below the threshold
(default 0.3) the cluster is flagged novel.

Monte Carlo draws are content-addressed: every density model derives one
cached draw per (size, report seed) from a sub-seed of its own content
digest, and that draw backs both the model's HDR threshold and its samples
whenever it is the "from" side of a directional containment. Distinct
models therefore use independent streams, while a model compared against
itself scores exactly 1 (its own draw straddles its own threshold at mass
alpha), which keeps self-containment deterministic.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from bdisc import kernels
from bdisc.errors import ValidationError
from bdisc.seeds import derive_seed

MIN_KDE_POINTS = 5
SMALL_KDE_WARNING = 30
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class DensityConfig:
    alpha: float = 0.95            # HDR boundary mass
    mc_samples: int = 2000
    novelty_threshold: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must be in (0, 1)")
        if self.mc_samples < 1:
            raise ValidationError("mc_samples must be >= 1")


class DensityModel:
    """Base for 2D densities supporting logpdf, sampling, and HDR thresholds."""

    def logpdf(self, points) -> np.ndarray:
        raise NotImplementedError

    def sample(self, m: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def _digest_parts(self):
        raise NotImplementedError

    def digest(self) -> str:
        """Content hash; identical densities share Monte Carlo streams."""
        h = hashlib.sha256()
        for part in self._digest_parts():
            h.update(np.ascontiguousarray(part, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]

    def __post_init_cache__(self):
        self._draws: dict = {}
        self._thresholds: dict = {}

    def mc_draw(self, m: int, seed: int) -> np.ndarray:
        key = (m, seed)
        if key not in self._draws:
            self._draws[key] = self.sample(m, seed)
        return self._draws[key]

    def hdr_threshold(self, alpha: float, m: int, seed: int) -> float:
        """Log-density threshold of the alpha-HDR (cached per draw)."""
        key = (alpha, m, seed)
        if key not in self._thresholds:
            logdens = self.logpdf(self.mc_draw(m, seed))
            self._thresholds[key] = float(np.quantile(logdens, 1.0 - alpha))
        return self._thresholds[key]


def _chol_inverse(chol):
    a00 = 1.0 / chol[0, 0]
    a11 = 1.0 / chol[1, 1]
    a10 = -chol[1, 0] * a00 * a11
    return a00, a10, a11


class KdeModel(DensityModel):
    """Equal-weight Gaussian mixture over support points with shared 2x2
    bandwidth matrix H. Use :func:`fit_kde` for the Silverman bandwidth; the
    constructor accepts any explicit H (no minimum point count there)."""

    def __init__(self, points, bandwidth):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 1:
            raise ValidationError("KDE support must be an (M, 2) array")
        bandwidth = np.asarray(bandwidth, dtype=np.float64)
        if bandwidth.shape != (2, 2):
            raise ValidationError("bandwidth matrix must be 2x2")
        try:
            chol = np.linalg.cholesky(bandwidth)
        except np.linalg.LinAlgError:
            raise ValidationError("bandwidth matrix must be positive definite") from None
        self.points = points
        self.bandwidth = bandwidth
        self.chol = chol
        self._inv_chol = _chol_inverse(chol)
        self._log_norm = -np.log(len(points)) - _LOG_2PI - np.log(chol[0, 0] * chol[1, 1])
        self.__post_init_cache__()
        if not np.all(np.isfinite(self.logpdf(points))):
            raise ValidationError("KDE log-density non-finite at a support point")

    def _digest_parts(self):
        return (self.points, self.bandwidth)

    def logpdf(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        a00, a10, a11 = self._inv_chol
        return kernels.mixture_logpdf(points, self.points, a00, a10, a11, self._log_norm)

    def sample(self, m: int, seed: int) -> np.ndarray:
        """Pick a support point uniformly, add noise with covariance H."""
        rng = np.random.default_rng(seed)
        if m == 0:
            return np.zeros((0, 2))
        idx = rng.integers(0, len(self.points), size=m)
        noise = rng.standard_normal((m, 2)) @ self.chol.T
        return self.points[idx] + noise


class GaussianModel(DensityModel):
    """Analytic bivariate normal; reference density for calibration tests."""

    def __init__(self, mean, cov):
        mean = np.asarray(mean, dtype=np.float64).reshape(2)
        cov = np.asarray(cov, dtype=np.float64).reshape(2, 2)
        self.mean = mean
        self.cov = cov
        self.chol = np.linalg.cholesky(cov)
        self._inv_chol = _chol_inverse(self.chol)
        self._log_norm = -_LOG_2PI - np.log(self.chol[0, 0] * self.chol[1, 1])
        self.__post_init_cache__()

    def _digest_parts(self):
        return (self.mean, self.cov)

    def logpdf(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        a00, a10, a11 = self._inv_chol
        return kernels.mixture_logpdf(points, self.mean[None, :], a00, a10, a11, self._log_norm)

    def sample(self, m: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.mean + rng.standard_normal((m, 2)) @ self.chol.T


def silverman_factor(m: int, d: int = 2) -> float:
    """Silverman bandwidth factor ((4/(d+2))^(1/(d+4))) * m^(-1/(d+4))."""
    return (4.0 / (d + 2)) ** (1.0 / (d + 4)) * m ** (-1.0 / (d + 4))


def fit_kde(points) -> KdeModel:
    """Fit a Gaussian KDE with Silverman's rule: H = f^2 * sample covariance.

    Requires at least 5 points (a warning is issued below 30, where the
    bandwidth and MC thresholds get unstable). A singular covariance is
    regularized by adding 1e-9 * trace/2 * I, with a warning.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValidationError("expected an (M, 2) point array")
    m = len(points)
    if m < MIN_KDE_POINTS:
        raise ValidationError(f"insufficient points for KDE ({m} < {MIN_KDE_POINTS})")
    if m < SMALL_KDE_WARNING:
        warnings.warn(f"KDE on only {m} points; threshold estimates may be unstable")
    cov = np.cov(points, rowvar=False)
    factor = silverman_factor(m)
    bandwidth = factor**2 * cov
    try:
        np.linalg.cholesky(bandwidth)
    except np.linalg.LinAlgError:
        warnings.warn("singular covariance; regularizing KDE bandwidth")
        cov = cov + 1e-9 * (np.trace(cov) / 2.0) * np.eye(2)
        bandwidth = factor**2 * cov
    return KdeModel(points, bandwidth)


def kde_logpdf(model: DensityModel, point) -> float:
    """Log-density at one 2D point."""
    return float(model.logpdf(np.asarray(point, dtype=np.float64).reshape(1, 2))[0])


def kde_sample(model: DensityModel, m: int, seed: int) -> np.ndarray:
    return model.sample(m, seed)


def hdr_threshold(model: DensityModel, alpha: float = 0.95, m: int = 2000, seed: int = 0) -> float:
    """Estimate the alpha-HDR log-density threshold by Monte Carlo."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must be in (0, 1)")
    return model.hdr_threshold(alpha, m, derive_seed(seed, "kde-mc", model.digest()))


def directional_containment(from_model: DensityModel, to_model: DensityModel,
                            alpha: float = 0.95, m: int = 2000, seed: int = 0):
    """(P, C): P is the mass of ``from_model`` inside ``to_model``'s alpha-HDR
    (Monte Carlo estimate); C = min(1, P / alpha)."""
    s_from = derive_seed(seed, "kde-mc", from_model.digest())
    s_to = derive_seed(seed, "kde-mc", to_model.digest())
    draws = from_model.mc_draw(m, s_from)
    threshold = to_model.hdr_threshold(alpha, m, s_to)
    p = float(np.mean(to_model.logpdf(draws) >= threshold))
    return p, min(1.0, p / alpha)


def contain(c: DensityModel, k: DensityModel, alpha: float = 0.95,
            m: int = 2000, seed: int = 0) -> float:
    """Symmetric containment: max of the two directional scores, in [0, 1]."""
    _, c_ck = directional_containment(c, k, alpha, m, seed)
    _, c_kc = directional_containment(k, c, alpha, m, seed)
    return max(c_ck, c_kc)


@dataclass
class ContainmentRow:
    """Containment of one discovered cluster against every known class."""

    cluster: int
    scores: dict[int, float | None]
    best_match_class: int | None
    containment_score: float | None
    novel: bool

    def as_dict(self):
        return {
            "cluster": self.cluster,
            "scores": {str(k): v for k, v in sorted(self.scores.items())},
            "best_match_class": self.best_match_class,
            "containment_score": self.containment_score,
            "novel": self.novel,
        }


@dataclass
class ContainmentReport:
    rows: list[ContainmentRow]
    alpha: float
    mc_samples: int
    novelty_threshold: float
    seed: int
    skipped_classes: list[int] = field(default_factory=list)

    def row_for(self, cluster: int) -> ContainmentRow:
        for row in self.rows:
            if row.cluster == cluster:
                return row
        raise KeyError(cluster)


def best_match(cluster_model: DensityModel, class_models: dict,
               alpha: float = 0.95, m: int = 2000, seed: int = 0,
               threshold: float = 0.3, cluster: int = -1) -> ContainmentRow:
    """Best-match containment of one cluster over the known classes.

    ``class_models`` maps class index -> fitted model, or None for classes
    with too few points; those are skipped with a warning and excluded from
    the max (error if every class is skipped). Ties break toward the lowest
    class index.
    """
    scores: dict[int, float | None] = {}
    best_cls, best = None, -1.0
    for cls in sorted(class_models):
        model = class_models[cls]
        if model is None:
            warnings.warn(f"class {cls}: too few points for KDE; excluded from best match")
            scores[cls] = None
            continue
        value = contain(cluster_model, model, alpha, m, seed)
        scores[cls] = value
        if value > best:
            best_cls, best = cls, value
    if best_cls is None:
        raise ValidationError("no known class had enough points for KDE")
    return ContainmentRow(
        cluster=cluster,
        scores=scores,
        best_match_class=best_cls,
        containment_score=best,
        novel=best < threshold,
    )


def build_report(cluster_models: dict, class_models: dict, cfg: DensityConfig,
                 seed: int) -> ContainmentReport:
    """Full cluster x class containment report.

    ``cluster_models`` maps cluster index -> model or None (too few points);
    a None cluster yields a row with null scores and ``novel=False`` - no
    novelty claim is made from a near-empty cluster.
    """
    rows = []
    skipped = sorted(cls for cls, mdl in class_models.items() if mdl is None)
    for cluster in sorted(cluster_models):
        model = cluster_models[cluster]
        if model is None:
            rows.append(ContainmentRow(
                cluster=cluster,
                scores={cls: None for cls in sorted(class_models)},
                best_match_class=None,
                containment_score=None,
                novel=False,
            ))
            continue
        rows.append(best_match(
            model, class_models, cfg.alpha, cfg.mc_samples, seed,
            cfg.novelty_threshold, cluster=cluster,
        ))
    return ContainmentReport(
        rows=rows,
        alpha=cfg.alpha,
        mc_samples=cfg.mc_samples,
        novelty_threshold=cfg.novelty_threshold,
        seed=seed,
        skipped_classes=skipped,
    )

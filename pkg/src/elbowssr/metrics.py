"""Landmark error metrics, joint-space length, limit of detection, fold aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, InvalidConfigurationError, InvalidInputError

MM_PER_PIXEL = 0.0567
JOINT_SPACE = (1, 2)  # 1-based landmark indices bounding the joint space
PATHOLOGICAL_WIDENING_MM = 1.2


@dataclass(frozen=True)
class ScaleConfig:
    mm_per_pixel: float = MM_PER_PIXEL

    def __post_init__(self):
        if not (self.mm_per_pixel > 0 and math.isfinite(self.mm_per_pixel)):
            raise InvalidConfigurationError(f"mm_per_pixel must be > 0, got {self.mm_per_pixel}")


@dataclass(frozen=True)
class LandmarkSet:
    image_id: str
    points: np.ndarray  # (K, 2) image px
    valid: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidInputError(f"{self.image_id}: points must be (K, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError(f"{self.image_id}: non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.valid is not None:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != (len(pts),):
                raise InvalidInputError(f"{self.image_id}: one validity flag per point required")
            valid.setflags(write=False)
            object.__setattr__(self, "valid", valid)

    @property
    def K(self) -> int:
        return len(self.points)

    def is_valid(self, k: int) -> bool:
        return True if self.valid is None else bool(self.valid[k])


def _align(preds, gts):
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise AlignmentError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise AlignmentError("no samples")
    by_id = {g.image_id: g for g in gts}
    if len(by_id) != len(gts):
        raise AlignmentError("duplicate image ids in ground truth")
    pairs = []
    for p in preds:
        g = by_id.get(p.image_id)
        if g is None:
            raise AlignmentError(f"no ground truth for image {p.image_id!r}")
        if p.K != g.K:
            raise AlignmentError(f"{p.image_id}: {p.K} predicted vs {g.K} true landmarks")
        pairs.append((p, g))
    return pairs


def _index(k, n):
    # public API uses the 1-based landmark numbering of the annotation protocol
    if not 1 <= k <= n:
        raise InvalidInputError(f"landmark index {k} outside 1..{n}")
    return k - 1


def landmark_errors(preds, gts, k: int, scale: ScaleConfig = ScaleConfig()) -> np.ndarray:
    """Per-sample Euclidean error (mm) of landmark ``k`` (1-based); samples
    where either side flags the landmark invalid are dropped."""
    pairs = _align(preds, gts)
    i = _index(k, pairs[0][0].K)
    errs = [np.hypot(*(p.points[i] - g.points[i])) for p, g in pairs
            if p.is_valid(i) and g.is_valid(i)]
    return np.asarray(errs, dtype=np.float64) * scale.mm_per_pixel


def mae_per_landmark(preds, gts, k: int, scale: ScaleConfig = ScaleConfig()) -> float:
    errs = landmark_errors(preds, gts, k, scale)
    if len(errs) == 0:
        raise InvalidInputError(f"landmark {k} has no valid samples")
    return float(errs.mean())


def joint_space_length(points, i1: int = JOINT_SPACE[0], i2: int = JOINT_SPACE[1]) -> float:
    """Distance in px between two 1-based landmarks of one (K, 2) point array."""
    pts = np.asarray(points, dtype=np.float64)
    a, b = _index(i1, len(pts)), _index(i2, len(pts))
    return float(np.hypot(*(pts[a] - pts[b])))


def length_errors(preds, gts, i1: int = JOINT_SPACE[0], i2: int = JOINT_SPACE[1],
                  scale: ScaleConfig = ScaleConfig()) -> np.ndarray:
    if i1 == i2:
        raise InvalidInputError("joint space needs two distinct landmarks")
    pairs = _align(preds, gts)
    a, b = _index(i1, pairs[0][0].K), _index(i2, pairs[0][0].K)
    errs = [abs(joint_space_length(p.points, i1, i2) - joint_space_length(g.points, i1, i2))
            for p, g in pairs
            if all(s.is_valid(a) and s.is_valid(b) for s in (p, g))]
    return np.asarray(errs, dtype=np.float64) * scale.mm_per_pixel


def ede(preds, gts, i1: int = JOINT_SPACE[0], i2: int = JOINT_SPACE[1],
        scale: ScaleConfig = ScaleConfig()) -> float:
    """Mean absolute error of the predicted inter-landmark distance, in mm."""
    errs = length_errors(preds, gts, i1, i2, scale)
    if len(errs) == 0:
        raise InvalidInputError("no valid samples for the joint-space length")
    return float(errs.mean())


def limit_of_detection(sigma: float, threshold_mm: float = PATHOLOGICAL_WIDENING_MM,
                       resolution: float = 5e-4):
    """``3 * sqrt(2) * sigma`` and whether a ``threshold_mm`` change is detectable.

    The comparison ``sigma <= threshold / (3 sqrt 2)`` allows ``resolution``
    slack so a boundary sigma quoted to three decimals (0.283 mm) counts
    as detectable.
    """
    if not sigma >= 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    factor = 3.0 * math.sqrt(2.0)
    return factor * sigma, bool(sigma <= threshold_mm / factor + resolution)


@dataclass(frozen=True)
class FoldStats:
    """Per-fold mean and spread of one error measure, folds weighted equally."""

    means: tuple
    stds: tuple
    counts: tuple
    ddof: int = 0

    @property
    def grand_mean(self) -> float:
        return float(np.mean(self.means))

    @property
    def grand_std(self) -> float:
        return float(np.mean(self.stds))

    def as_dict(self) -> dict:
        return {
            "fold_means": list(self.means),
            "fold_stds": list(self.stds),
            "fold_counts": list(self.counts),
            "mean": self.grand_mean,
            "std": self.grand_std,
        }


def fold_report(per_fold_errors, ddof: int = 0) -> FoldStats:
    """Mean and standard deviation per fold (population std by default)."""
    means, stds, counts = [], [], []
    for i, errs in enumerate(per_fold_errors):
        e = np.asarray(errs, dtype=np.float64)
        if e.size == 0:
            raise InvalidInputError(f"fold {i} is empty")
        if e.size <= ddof:
            raise InvalidInputError(f"fold {i} has too few samples for ddof={ddof}")
        means.append(float(e.mean()))
        stds.append(float(e.std(ddof=ddof)))
        counts.append(int(e.size))
    if not means:
        raise InvalidInputError("no folds")
    return FoldStats(tuple(means), tuple(stds), tuple(counts), ddof)


@dataclass(frozen=True)
class MeasurementReport:
    fold_ids: tuple
    landmark_mae: dict  # 1-based landmark index -> FoldStats
    length_ede: FoldStats | None
    lengths_mm: dict = field(default_factory=dict)  # image id -> (predicted, true)
    mm_per_pixel: float = MM_PER_PIXEL

    @property
    def n_samples(self) -> int:
        any_stats = next(iter(self.landmark_mae.values()))
        return sum(any_stats.counts)

    @property
    def ave2(self) -> float | None:
        """Arithmetic mean of the landmark 1 and 2 MAEs."""
        if 1 in self.landmark_mae and 2 in self.landmark_mae:
            return 0.5 * (self.landmark_mae[1].grand_mean + self.landmark_mae[2].grand_mean)
        return None

    def lod(self):
        """Per-fold limit of detection from the spread of the length error."""
        if self.length_ede is None:
            return []
        return [limit_of_detection(s) for s in self.length_ede.stds]

    def as_dict(self) -> dict:
        return {
            "folds": list(self.fold_ids),
            "n_samples": self.n_samples,
            "mm_per_pixel": self.mm_per_pixel,
            "landmark_mae": {str(k): v.as_dict() for k, v in sorted(self.landmark_mae.items())},
            "ave2": self.ave2,
            "length_ede": None if self.length_ede is None else self.length_ede.as_dict(),
            "lod": [{"lod_mm": l, "detectable": d} for l, d in self.lod()],
            "lengths_mm": {k: list(v) for k, v in sorted(self.lengths_mm.items())},
        }

    def rows(self):
        """(fold, metric, mean, std) rows; fold "all" holds the equal-weight averages."""
        out = []
        named = [(f"mae_lm{k}", v) for k, v in sorted(self.landmark_mae.items())]
        if self.length_ede is not None:
            named.append(("length_ede", self.length_ede))
        for name, stats in named:
            for fid, m, s in zip(self.fold_ids, stats.means, stats.stds):
                out.append((str(fid), name, m, s))
            out.append(("all", name, stats.grand_mean, stats.grand_std))
        return out


def evaluate_folds(preds, gts, folds, scale: ScaleConfig = ScaleConfig(), ddof: int = 0,
                   joint_space=JOINT_SPACE) -> MeasurementReport:
    """Build a report from aligned predictions and ground truth.

    ``folds`` maps fold id to the image ids of its test split.
    """
    pred_by_id = {p.image_id: p for p in preds}
    gt_by_id = {g.image_id: g for g in gts}
    if set(pred_by_id) != set(gt_by_id):
        missing = sorted(set(pred_by_id) ^ set(gt_by_id))
        raise AlignmentError(f"image ids differ between predictions and ground truth: {missing[:5]}")
    fold_ids = list(folds)
    per_fold = []
    for fid in fold_ids:
        ids = sorted(folds[fid])
        unknown = [i for i in ids if i not in pred_by_id]
        if unknown:
            raise AlignmentError(f"fold {fid}: unknown image ids {unknown[:5]}")
        per_fold.append(([pred_by_id[i] for i in ids], [gt_by_id[i] for i in ids]))
    k = next(iter(pred_by_id.values())).K
    mae = {lm: fold_report([landmark_errors(p, g, lm, scale) for p, g in per_fold], ddof)
           for lm in range(1, k + 1)}
    length = None
    lengths = {}
    if k >= max(joint_space):
        length = fold_report([length_errors(p, g, *joint_space, scale=scale) for p, g in per_fold], ddof)
        for i in sorted(pred_by_id):
            lengths[i] = (joint_space_length(pred_by_id[i].points, *joint_space) * scale.mm_per_pixel,
                          joint_space_length(gt_by_id[i].points, *joint_space) * scale.mm_per_pixel)
    return MeasurementReport(tuple(fold_ids), mae, length, lengths, scale.mm_per_pixel)

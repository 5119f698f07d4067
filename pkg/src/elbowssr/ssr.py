"""Shape Subspace Refinement.

When a heatmap has several plausible peaks, every combination of per-landmark
candidates is scored by its mean subspace similarity to a bank of training
shapes and the best-scoring combination is kept. The selected integer peaks
then go through the ordinary sub-pixel refinement and coordinate mapping.
"""
from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    BudgetExceededError,
    DegenerateShapeError,
    DimensionMismatchError,
    InvalidConfigurationError,
    RefinementFailedError,
)
from .heatmap import (
    CandidateSet,
    DecodeConfig,
    HeatmapStack,
    argmax_decode,
    extract_candidates,
    heatmap_to_image,
    subpixel_refine,
)
from .subspace import DEFAULT_RANK_TOL, ShapeMatrix, SubspaceBasis, shape_subspace_basis

DEFAULT_FRACTION = 0.033
DEFAULT_BUDGET = 100_000
# scores within this of the best count as equal; similarities lie in [0, 1]
# and affine-equivalent combinations tie exactly up to rounding
TIE_TOLERANCE = 1e-9


class DegenerateTrainingShapeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ReferenceBank:
    """Immutable set of training-shape subspaces.

    ``mean_projection`` is the average of the bases' projection matrices; the
    mean similarity of any subspace to the bank is ``trace(P P_mean) / N``.
    """

    bases: tuple
    sampling_fraction: float = 1.0
    rng_seed: int | None = None
    indices: tuple = ()
    rank_tolerance: float = DEFAULT_RANK_TOL
    mean_projection: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bases = tuple(self.bases)
        if not bases:
            raise InvalidConfigurationError("reference bank is empty")
        k, n = bases[0].K, bases[0].effective_dim
        for b in bases:
            if (b.K, b.effective_dim) != (k, n):
                raise DimensionMismatchError(
                    f"bank mixes (K, N) = ({k}, {n}) and ({b.K}, {b.effective_dim})"
                )
        proj = sum(b.projection() for b in bases) / len(bases)
        proj.setflags(write=False)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "indices", tuple(self.indices))
        object.__setattr__(self, "mean_projection", proj)

    @property
    def M(self) -> int:
        return len(self.bases)

    @property
    def K(self) -> int:
        return self.bases[0].K

    @property
    def effective_dim(self) -> int:
        return self.bases[0].effective_dim


def _points_of(sample):
    return np.asarray(getattr(sample, "points", sample), dtype=np.float64)


def bank_size(count: int, fraction: float) -> int:
    # guard against ceil(0.1 * 30) == 4 style float noise
    return max(1, math.ceil(fraction * count - 1e-9))


def build_reference_bank(training_landmarks, fraction=DEFAULT_FRACTION, seed=0,
                         rank_tolerance=DEFAULT_RANK_TOL) -> ReferenceBank:
    """Sample ``ceil(fraction * n)`` training shapes without replacement and
    precompute their planar (z = 0) subspace bases.

    Shapes whose points all coincide, or whose rank falls below the rest of
    the sample, are skipped with a warning.
    """
    training = list(training_landmarks)
    if not training:
        raise InvalidConfigurationError("training set is empty")
    if not 0 < fraction <= 1:
        raise InvalidConfigurationError(f"fraction must lie in (0, 1], got {fraction}")
    m = bank_size(len(training), fraction)
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(training), size=m, replace=False))
    bases, used = [], []
    for i in picked:
        try:
            basis = shape_subspace_basis(ShapeMatrix.from_points(_points_of(training[i])), rank_tolerance)
        except DegenerateShapeError:
            warnings.warn(f"training sample {i} is degenerate; skipped",
                          DegenerateTrainingShapeWarning, stacklevel=2)
            continue
        bases.append(basis)
        used.append(int(i))
    if not bases:
        raise InvalidConfigurationError("no usable training shapes in the sampled bank")
    dim = max(b.effective_dim for b in bases)
    keep = [j for j, b in enumerate(bases) if b.effective_dim == dim]
    if len(keep) < len(bases):
        warnings.warn(f"{len(bases) - len(keep)} rank-deficient training samples skipped",
                      DegenerateTrainingShapeWarning, stacklevel=2)
    return ReferenceBank(
        bases=tuple(bases[j] for j in keep),
        sampling_fraction=fraction,
        rng_seed=seed,
        indices=tuple(used[j] for j in keep),
        rank_tolerance=rank_tolerance,
    )


def per_image_bank_factory(training_landmarks, fraction=DEFAULT_FRACTION, seed=0,
                           rank_tolerance=DEFAULT_RANK_TOL):
    """Callable ``image_id -> ReferenceBank`` drawing a fresh bank per image.

    The stream for each image is derived from ``(seed, crc32(image_id))`` so
    results do not depend on processing order.
    """
    training = list(training_landmarks)

    def factory(image_id):
        sub = np.random.SeedSequence([seed, zlib.crc32(str(image_id).encode("utf-8"))])
        return build_reference_bank(training, fraction, sub, rank_tolerance)

    return factory


@dataclass(frozen=True)
class Combination:
    index: int
    choice: tuple  # candidate index per landmark
    points: np.ndarray  # (K, 2) integer heatmap coordinates, float dtype


def combination_count(cands: CandidateSet) -> int:
    return math.prod(int(c) for c in cands.counts)


def _check_budget(cands, budget):
    n = combination_count(cands)
    if n > budget:
        raise BudgetExceededError(n, budget)
    return n


def combination_at(cands: CandidateSet, index: int) -> Combination:
    choice = tuple(int(i) for i in np.unravel_index(index, tuple(cands.counts)))
    pts = np.array([cands[k][c, :2] for k, c in enumerate(choice)])
    return Combination(index, choice, pts)


def enumerate_combinations(cands: CandidateSet, budget=DEFAULT_BUDGET) -> list:
    """Cartesian product of candidates, lexicographic in candidate indices."""
    n = _check_budget(cands, budget)
    return [combination_at(cands, j) for j in range(n)]


def score_combinations(cands: CandidateSet, bank: ReferenceBank, budget=DEFAULT_BUDGET,
                       backend=None) -> np.ndarray:
    """Mean bank similarity of every combination, -inf for degenerate ones."""
    if len(cands) != bank.K:
        raise DimensionMismatchError(f"{len(cands)} landmarks vs bank K = {bank.K}")
    _check_budget(cands, budget)
    kern = backend or kernels
    return kern.score_combinations(cands.padded_xy(), cands.counts, bank.mean_projection,
                                   bank.effective_dim, bank.rank_tolerance)


def ssr_select(cands: CandidateSet, bank: ReferenceBank | None, budget=DEFAULT_BUDGET,
               backend=None) -> Combination:
    """Combination with the highest mean similarity to the bank.

    Scores within ``TIE_TOLERANCE`` of the maximum are ties and go to the
    lowest combination index. A single-candidate input is returned without
    scoring.
    """
    if combination_count(cands) == 1:
        return combination_at(cands, 0)
    if bank is None:
        raise InvalidConfigurationError("multiple candidates need a reference bank")
    scores = score_combinations(cands, bank, budget, backend)
    top = scores.max()
    if top == -np.inf:
        raise RefinementFailedError("every candidate combination is degenerate")
    best = int(np.argmax(scores >= top - TIE_TOLERANCE))
    return combination_at(cands, best)


@dataclass(frozen=True)
class RefineResult:
    points: np.ndarray  # (K, 2) image coordinates
    selected: np.ndarray  # (K, 2) integer heatmap peaks fed to sub-pixel refinement
    candidates: CandidateSet | None
    border: np.ndarray  # per-landmark flag: peak on border, left unrefined

    @property
    def multi_peak(self) -> np.ndarray:
        if self.candidates is None:
            return np.zeros(len(self.points), dtype=bool)
        return self.candidates.counts > 1


def _finish(h, peaks, image_size, cfg, candidates):
    refined, border = subpixel_refine(h, peaks)
    pts = heatmap_to_image(refined, h.size, image_size, cfg.scale_convention)
    return RefineResult(pts, np.asarray(peaks), candidates, border)


def decode_landmarks(h: HeatmapStack, image_size, cfg: DecodeConfig = DecodeConfig()) -> RefineResult:
    """Plain pipeline: argmax, sub-pixel refinement, map to image coordinates."""
    peaks, _ = argmax_decode(h)
    return _finish(h, peaks, image_size, cfg, None)


def refine_landmarks(h: HeatmapStack, cfg: DecodeConfig, bank: ReferenceBank | None, image_size,
                     budget=DEFAULT_BUDGET, backend=None) -> RefineResult:
    """Candidates, SSR selection, sub-pixel refinement, image mapping.

    Fewer than three landmarks cannot form a planar subspace, so those fall
    back to the top-valued candidate per landmark.
    """
    cands = extract_candidates(h, cfg)
    if h.channels < 3:
        peaks = np.array([c[0, :2] for c in cands.candidates])
    else:
        peaks = ssr_select(cands, bank, budget, backend).points
    return _finish(h, peaks.astype(np.int64), image_size, cfg, cands)


def refine_batch(stacks, cfg: DecodeConfig, image_size, bank=None, bank_factory=None,
                 budget=DEFAULT_BUDGET, use_ssr=True):
    """Refine a mapping ``image_id -> HeatmapStack``.

    Returns ``(results, failures)``, both keyed by image id in sorted order;
    one image failing never stops the others.
    """
    results, failures = {}, {}
    for image_id in sorted(stacks):
        h = stacks[image_id]
        try:
            if not use_ssr:
                results[image_id] = decode_landmarks(h, image_size, cfg)
                continue
            b = bank_factory(image_id) if bank_factory is not None else bank
            results[image_id] = refine_landmarks(h, cfg, b, image_size, budget)
        except (ValueError, ArithmeticError) as exc:
            failures[image_id] = exc
    return results, failures

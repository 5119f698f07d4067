"""Point prompts for point-based humerus/ulna segmentation from eight landmarks."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

POSITIVE_LANDMARKS = (3, 4, 5, 6, 7, 8)
NEGATIVE_FORMULAS = (
    "(x4, y3)",
    "(x4, y3)",
    "(x5, y4)",
    "(x5, 2*y5 - y4)",
    "(x8, 2*y5 - y4)",
    "((x1 + x2)/2, (y1 + y2)/2)",
)
DUPLICATE_NEGATIVE = "negatives 1 and 2 share the formula (x4, y3)"


class DuplicatePromptWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PromptSet:
    positives: tuple  # ((x, y), landmark index)
    negatives: tuple  # ((x, y), formula)
    warnings: tuple = ()

    def to_payload(self) -> dict:
        return {
            "positives": [list(p) for p, _ in self.positives],
            "negatives": [list(p) for p, _ in self.negatives],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload())


def generate_prompts(points) -> PromptSet:
    """Six positive prompts (landmarks 3-8) and six negative prompts.

    The negative list keeps the repeated ``(x4, y3)`` entry verbatim and
    records a ``DuplicatePromptWarning``.
    """
    pts = np.asarray(getattr(points, "points", points), dtype=np.float64)
    if pts.shape != (8, 2):
        raise InvalidInputError(f"prompts need exactly 8 landmarks, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("landmarks must be finite")
    x = {i + 1: float(v) for i, v in enumerate(pts[:, 0])}
    y = {i + 1: float(v) for i, v in enumerate(pts[:, 1])}
    negatives = (
        (x[4], y[3]),
        (x[4], y[3]),
        (x[5], y[4]),
        (x[5], 2 * y[5] - y[4]),
        (x[8], 2 * y[5] - y[4]),
        ((x[1] + x[2]) / 2, (y[1] + y[2]) / 2),
    )
    warnings.warn(DUPLICATE_NEGATIVE, DuplicatePromptWarning, stacklevel=2)
    return PromptSet(
        positives=tuple(((x[i], y[i]), i) for i in POSITIVE_LANDMARKS),
        negatives=tuple(zip(negatives, NEGATIVE_FORMULAS)),
        warnings=("duplicate-negative",),
    )

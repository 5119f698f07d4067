"""Landmark refinement by shape subspaces and medial-elbow joint-space measurement."""

__version__ = "0.1.0"

from .errors import ElbowSSRError
from .heatmap import (
    CandidateSet,
    DecodeConfig,
    HeatmapStack,
    argmax_decode,
    extract_candidates,
    heatmap_to_image,
    image_to_heatmap,
    subpixel_refine,
)
from .kernels import BACKEND
from .metrics import (
    LandmarkSet,
    MeasurementReport,
    ScaleConfig,
    ede,
    evaluate_folds,
    fold_report,
    limit_of_detection,
    mae_per_landmark,
)
from .prompts import PromptSet, generate_prompts
from .ssr import (
    Combination,
    ReferenceBank,
    build_reference_bank,
    decode_landmarks,
    enumerate_combinations,
    refine_landmarks,
    ssr_select,
)
from .subspace import (
    ShapeMatrix,
    SubspaceBasis,
    center_shape_matrix,
    mean_similarity,
    shape_subspace_basis,
    subspace_similarity,
)

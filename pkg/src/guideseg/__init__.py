"""Weakly supervised guide-label generation.

Turns per-class seed heatmaps, class-agnostic saliency and image-level labels
into pixel-wise guide masks (strategies G0, G1, G2), refines them with a
fully connected CRF and evaluates them with mIoU / precision-recall metrics.
"""

from .errors import (
    DataError,
    FormatError,
    GuideSegError,
    ResourceError,
    UndefinedResultError,
    UsageError,
)
from .maskcore import (
    BACKGROUND,
    IGNORE,
    VOC_CLASSES,
    ClassRegistry,
    binarize_saliency,
    normalize_scores,
)
from .seeder import SeederConfig, extract_seeds, seeds_at_thresholds
from .regions import (
    ComponentSet,
    IntersectionTable,
    filter_by_area,
    intersect,
    label_components,
    label_seed_components,
)
from .densecrf import PRESETS, CrfParams, crf_postproc, crf_seed, mean_field, region_crf
from .guides import GuideResult, guide_g0, guide_g1, guide_g2
from .metrics import (
    ConfusionMatrix,
    PrCurve,
    confusion,
    guide_quality,
    miou,
    mp,
    pr_sweep,
    precision_at_recall,
)
from .estimators import DenseCRF, GuideLabeller, SaliencyBinarizer, SeedExtractor

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "IGNORE",
    "VOC_CLASSES",
    "ClassRegistry",
    "ComponentSet",
    "ConfusionMatrix",
    "CrfParams",
    "DataError",
    "DenseCRF",
    "FormatError",
    "GuideLabeller",
    "GuideResult",
    "GuideSegError",
    "IntersectionTable",
    "PRESETS",
    "PrCurve",
    "ResourceError",
    "SaliencyBinarizer",
    "SeedExtractor",
    "SeederConfig",
    "UndefinedResultError",
    "UsageError",
    "binarize_saliency",
    "confusion",
    "crf_postproc",
    "crf_seed",
    "extract_seeds",
    "filter_by_area",
    "guide_g0",
    "guide_g1",
    "guide_g2",
    "guide_quality",
    "intersect",
    "label_components",
    "label_seed_components",
    "mean_field",
    "miou",
    "mp",
    "normalize_scores",
    "pr_sweep",
    "precision_at_recall",
    "region_crf",
    "seeds_at_thresholds",
]

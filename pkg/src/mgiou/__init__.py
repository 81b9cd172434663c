"""Marginalized generalized IoU losses for convex shapes, with exact oracles,
hand-written gradients, a small fitting harness and a CLI."""

from .errors import (
    DegenerateEdge,
    DimensionMismatch,
    DivergenceDetected,
    EllipseHasNoVertices,
    EmptyBatch,
    InvalidShape,
    KinkDetected,
    MGIoUError,
    ModeShapeMismatch,
    NotPlanar,
    ShapeMismatch,
    TooFewVertices,
    ZeroAreaInput,
)
from .fit import FitConfig, FitTrace, fit_separation, fit_separations, fit_shape, fit_shapes
from .giou1d import Giou1dBreakdown, Interval, giou1d_definition, giou1d_simplified
from .grad import LossValue, check_grad, loss_with_grad
from .losses import Mode, MgiouConfig, MgiouResult, batch_mgiou, convexity_loss, mgiou, mgiou_plus
from .oracle import ExactOverlap, MonteCarloIoU, collides, exact_giou_2d, mc_iou_3d
from .overlap import OverlapReport, TrajectoryBatch, mgiou_minus, pair_penalty
from .shapes import (
    Cuboid,
    Ellipse,
    NormalSet,
    Polygon,
    RotatedRect,
    from_dict,
    project,
    unique_normals,
    vertices,
)

__version__ = "0.1.0"

__all__ = [
    "Cuboid",
    "DegenerateEdge",
    "DimensionMismatch",
    "DivergenceDetected",
    "Ellipse",
    "EllipseHasNoVertices",
    "EmptyBatch",
    "ExactOverlap",
    "FitConfig",
    "FitTrace",
    "Giou1dBreakdown",
    "Interval",
    "InvalidShape",
    "KinkDetected",
    "LossValue",
    "MGIoUError",
    "MgiouConfig",
    "MgiouResult",
    "Mode",
    "ModeShapeMismatch",
    "MonteCarloIoU",
    "NormalSet",
    "NotPlanar",
    "OverlapReport",
    "Polygon",
    "RotatedRect",
    "ShapeMismatch",
    "TooFewVertices",
    "TrajectoryBatch",
    "ZeroAreaInput",
    "batch_mgiou",
    "check_grad",
    "collides",
    "convexity_loss",
    "exact_giou_2d",
    "fit_separation",
    "fit_separations",
    "fit_shape",
    "fit_shapes",
    "from_dict",
    "giou1d_definition",
    "giou1d_simplified",
    "loss_with_grad",
    "mc_iou_3d",
    "mgiou",
    "mgiou_minus",
    "mgiou_plus",
    "pair_penalty",
    "project",
    "unique_normals",
    "vertices",
]

"""canon-engine: test-time image canonicalization by energy ranking.

Given an image, a parameterized transform space, and an energy function
scored by a vision backend, the engine searches the space for the
transform whose output the backend finds most typical, returning that
canonical image for downstream use. Ships with synthetic fixtures, a
file-backed local model, an HTTP bridge to a model server, and a
benchmark harness.
"""

from .energy import (
    EnergyBackend,
    EnergySpec,
    Logits,
    NoiseSchedule,
    classifier_energy,
    combined_energy,
    diffusion_energy,
    make_linear_schedule,
)
from .imgcore import Image, LabeledImage, load_png, resize_bilinear, save_png
from .optimize import BoConfig, OptTrace, bo_minimize, grid_minimize
from .pipeline import (
    CanonResult,
    CostCounter,
    canonicalize,
    gate_upright,
    invariance_check,
    predict,
    predicted_cost,
)
from .transforms import (
    ColorLogChroma,
    Composite,
    GammaLog,
    RotationDeg,
    Synthetic,
    TransformDomain,
    TransformKind,
    TransformPoint,
    apply_color,
    apply_gamma,
    apply_point,
    enumerate_cn,
    illuminant_from_chroma,
    rotate,
)

__version__ = "0.1.0"

__all__ = [
    "Image",
    "LabeledImage",
    "load_png",
    "save_png",
    "resize_bilinear",
    "TransformKind",
    "TransformPoint",
    "TransformDomain",
    "RotationDeg",
    "ColorLogChroma",
    "GammaLog",
    "Composite",
    "Synthetic",
    "rotate",
    "apply_color",
    "apply_gamma",
    "apply_point",
    "illuminant_from_chroma",
    "enumerate_cn",
    "Logits",
    "EnergySpec",
    "NoiseSchedule",
    "EnergyBackend",
    "classifier_energy",
    "diffusion_energy",
    "combined_energy",
    "make_linear_schedule",
    "BoConfig",
    "OptTrace",
    "grid_minimize",
    "bo_minimize",
    "CanonResult",
    "CostCounter",
    "canonicalize",
    "predict",
    "invariance_check",
    "gate_upright",
    "predicted_cost",
    "__version__",
]

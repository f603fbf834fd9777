"""Triplane portrait toolkit: triplane fields, a tiled volume renderer,
shoulder and colour augmentation, visibility triplanes, visibility-gated
fusion and a multi-view score-matrix evaluation harness."""

from .augment import ColorAugment, ShoulderWarp, color_augment, render_with_shoulder
from .camera import Camera, generate_rays, look_at, read_camera, write_camera
from .errors import (DegenerateVarianceError, EmptyDataError, FormatError, NumericalError,
                     ParameterError, StructuralError, TriportraitError)
from .evaluation import (ScoreTensor, build_score_tensor, input_view_variation,
                         novel_view_variation, nvs_quality, overall_quality, summarize)
from .fields import AnalyticBlobField, Blob, ConstantSlab, EmptyField, TriplaneField
from .fusion import (FlowField, LossWeights, fuse_triplanes, loss_fusion, loss_total,
                     loss_undist, loss_vis, warp_triplane)
from .render import RenderConfig, RenderedImage, render, render_depth
from .synth import CameraRig, generate_dataset, make_rig, make_scene
from .triplane import (MlpWeights, Triplane, decode_mlp, procedural_triplane, random_mlp,
                       read_mlp, read_triplane, sample_triplane, write_mlp, write_triplane)
from .visibility import OcclusionMask, VisibilityTriplane, occlusion_mask, rasterize_visibility

__version__ = "0.1.0"

__all__ = [
    "AnalyticBlobField", "Blob", "Camera", "CameraRig", "ColorAugment", "ConstantSlab",
    "DegenerateVarianceError", "EmptyDataError", "EmptyField", "FlowField", "FormatError",
    "LossWeights", "MlpWeights", "NumericalError", "OcclusionMask", "ParameterError",
    "RenderConfig", "RenderedImage", "ScoreTensor", "ShoulderWarp", "StructuralError",
    "Triplane", "TriplaneField", "TriportraitError", "VisibilityTriplane",
    "build_score_tensor", "color_augment", "decode_mlp", "fuse_triplanes",
    "generate_dataset", "generate_rays", "input_view_variation", "look_at", "loss_fusion",
    "loss_total", "loss_undist", "loss_vis", "make_rig", "make_scene",
    "novel_view_variation", "nvs_quality", "occlusion_mask", "overall_quality",
    "procedural_triplane", "random_mlp", "rasterize_visibility", "read_camera", "read_mlp",
    "read_triplane", "render", "render_depth", "render_with_shoulder", "sample_triplane",
    "summarize", "warp_triplane", "write_camera", "write_mlp", "write_triplane",
]

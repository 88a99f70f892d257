"""Differentiable frame synthesis: vector, kernel and spatially-displaced convolution warps."""

from .core import (FlowField, Frame, FrameFormatError, SyntheticScene, load_frame, make_translating_square,
                   make_translating_texture, make_texture, read_flo, save_frame, write_flo)
from .flow import estimate_flow
from .losses import (FeatureExtractor, FeatureMap, LossWeights, extract_features, loss_finetune,
                     loss_kernel_init, loss_l1, loss_l2, loss_perceptual, loss_style, metric_psnr,
                     metric_ssim)
from .optimize import (AdamState, FitPhase, FitReport, FitSchedule, adam_step, default_schedule,
                       fit_transform)
from .pipeline import (Config, PredictionRun, SequenceInput, compare_methods, memory_estimate,
                       predict_multi, predict_next)
from .resample import (KernelField2D, MotionField, SeparableKernelField, TransformGradients,
                       TransformParams, bilinear_sample, expand_separable, sdc_backward, warp_kernel,
                       warp_sdc, warp_vector)

__version__ = "0.1.0"

__all__ = [
    "adam_step",
    "AdamState",
    "bilinear_sample",
    "compare_methods",
    "Config",
    "default_schedule",
    "estimate_flow",
    "expand_separable",
    "extract_features",
    "FeatureExtractor",
    "FeatureMap",
    "fit_transform",
    "FitPhase",
    "FitReport",
    "FitSchedule",
    "FlowField",
    "Frame",
    "FrameFormatError",
    "KernelField2D",
    "load_frame",
    "loss_finetune",
    "loss_kernel_init",
    "loss_l1",
    "loss_l2",
    "loss_perceptual",
    "loss_style",
    "LossWeights",
    "make_texture",
    "make_translating_square",
    "make_translating_texture",
    "memory_estimate",
    "metric_psnr",
    "metric_ssim",
    "MotionField",
    "predict_multi",
    "predict_next",
    "PredictionRun",
    "read_flo",
    "save_frame",
    "sdc_backward",
    "SeparableKernelField",
    "SequenceInput",
    "SyntheticScene",
    "TransformGradients",
    "TransformParams",
    "warp_kernel",
    "warp_sdc",
    "warp_vector",
    "write_flo",
]

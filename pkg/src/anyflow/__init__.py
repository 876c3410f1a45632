"""Arbitrary-scale optical flow: implicit convex upsampling, multi-scale warping and dynamic
correlation lookup, on a small numpy reverse-mode autodiff engine."""

from .correlation import LookupConfig, build_corr_pyramid, lookup, lookup_dynamic, lookup_fixed, lookup_region_encoded
from .flowio import read_flo, write_flo
from .interp import resize_flow_interp
from .metrics import colorize, epe, f1_all
from .model import AnyFlow, InferenceResult, ModelConfig, run_inference
from .upsampler import ImplicitUpsampler, upsample_flow

__version__ = "0.1.0"

__all__ = [
    "AnyFlow", "ModelConfig", "InferenceResult", "run_inference", "LookupConfig", "build_corr_pyramid", "lookup",
    "lookup_fixed", "lookup_dynamic", "lookup_region_encoded", "ImplicitUpsampler", "upsample_flow", "read_flo",
    "write_flo", "resize_flow_interp", "colorize", "epe", "f1_all",
]

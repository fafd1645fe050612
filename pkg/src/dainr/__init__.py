"""Deformation-aware implicit neural representations for dynamic radial MRI."""
from .estimators import DAINRReconstructor, HashINRReconstructor, ZeroFilledReconstructor
from .interpolation import train_interpolation
from .metrics import evaluate_sequence, psnr, ssim
from .mri import NDFT, NUFFT, CoilForwardModel, golden_angle_trajectory
from .phantom import Acquisition, generate_coil_maps, generate_phantom, retrospective_undersample

__version__ = "0.1.0"

__all__ = [
    "Acquisition", "CoilForwardModel", "DAINRReconstructor", "HashINRReconstructor", "NDFT", "NUFFT",
    "ZeroFilledReconstructor", "evaluate_sequence", "generate_coil_maps", "generate_phantom",
    "golden_angle_trajectory", "psnr", "retrospective_undersample", "ssim", "train_interpolation",
]

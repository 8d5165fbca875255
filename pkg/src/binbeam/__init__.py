"""Binaural MVDR/LCMV beamformers with partial noise estimation."""

from .beamformers import (
    Algorithm,
    BeamformerPair,
    adjusted_delta,
    blcmv,
    blcmv_n,
    bmvdr,
    bmvdr_n,
    common_filters,
    decompose_sub_blcmv,
    design,
    gammas,
)
from .errors import BinbeamError, NumericalError, PreconditionError
from .estimation import cw_rtf, estimate_cov
from .stft import StftConfig, analyze, synthesize

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "BeamformerPair",
    "BinbeamError",
    "NumericalError",
    "PreconditionError",
    "StftConfig",
    "adjusted_delta",
    "analyze",
    "blcmv",
    "blcmv_n",
    "bmvdr",
    "bmvdr_n",
    "common_filters",
    "cw_rtf",
    "decompose_sub_blcmv",
    "design",
    "estimate_cov",
    "gammas",
    "synthesize",
]

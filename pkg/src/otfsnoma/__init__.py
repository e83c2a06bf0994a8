"""Robust beamforming for OTFS-NOMA downlinks.

Modules
-------
otfs_core   ISFFT/SFFT and block-circulant channel diagonalization
channel     sparse delay-Doppler channels, effective vectors, CSI errors
rates       SINR/SNR, rate thresholds, minimum NOMA rate
robust      closed-form worst-case power and SIC feasibility checks
conic       small conic programs solved with Clarabel
optimize    SCA, SDR with Gaussian randomization, random baseline
experiment  Monte-Carlo sweeps; ``cli`` wraps them
"""
from .channel import ChannelConfig, EffectiveChannel, apply_csi_error, effective_channels, sample_taps
from .exceptions import OtfsNomaError
from .optimize import random_beamformer, sca_solve, sdr_single_user, sdr_solve
from .rates import ProblemParams, min_rate
from .robust import check_sic_constraints, worst_case_power

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig", "EffectiveChannel", "OtfsNomaError", "ProblemParams",
    "apply_csi_error", "check_sic_constraints", "effective_channels", "min_rate",
    "random_beamformer", "sample_taps", "sca_solve", "sdr_single_user", "sdr_solve",
    "worst_case_power",
]

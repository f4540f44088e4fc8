"""Linear sketches for turnstile streams: L_p and L_0 sampling, count-sketch,
norm estimation, exact sparse recovery and duplicate finding."""

__version__ = "0.1.0"

from .countsketch import CountSketch
from .dupfinder import (
    CapacityError,
    find_duplicate_full,
    find_duplicate_long,
    find_duplicate_short,
    find_positive_coordinate,
)
from .hashing import KWiseHash, ScalingFactors
from .l0sampler import L0Sampler
from .lpsampler import LpSampler, SamplerConfig
from .normest import NormEstimator
from .oracle import DenseReference, err2m, exact_lp_distribution, tv_distance
from .results import DupVerdict, SampleResult, Verdict
from .sparserecovery import SparseRecovery
from .universal import Transcript, URResult, ur_one_round, ur_symmetrize, ur_two_round

__all__ = [
    "CapacityError",
    "CountSketch",
    "DenseReference",
    "DupVerdict",
    "KWiseHash",
    "L0Sampler",
    "LpSampler",
    "NormEstimator",
    "SampleResult",
    "SamplerConfig",
    "ScalingFactors",
    "SparseRecovery",
    "Transcript",
    "URResult",
    "Verdict",
    "err2m",
    "exact_lp_distribution",
    "find_duplicate_full",
    "find_duplicate_long",
    "find_duplicate_short",
    "find_positive_coordinate",
    "tv_distance",
    "ur_one_round",
    "ur_symmetrize",
    "ur_two_round",
]

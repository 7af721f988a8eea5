"""Simulation of pilot-aware attack identification for multi-antenna OFDM uplinks.

Bob's pilot phase is encoded as a constant-weight subcarrier activation
pattern; the base station separates superposed patterns, estimates both
channels on shared subcarriers and decides who is legitimate from the
spatial covariance.
"""

from .airlink import AttackerConfig, ReceivedGrid, transmit
from .channel import OneRingParams, eigendecompose, one_ring_covariance, sample_cir
from .code import Codebook, Codeword, generate_codebook, superpose, theoretical_iep, verify_icc
from .config import ExperimentConfig, SystemConfig, load_config, parse_config
from .experiments import ResultTable, run_experiment
from .receiver import (
    DetectorConfig,
    asymptotic_delta_f,
    delta_f,
    detect_sap,
    identify,
    lmmse_estimate,
    process_grid,
    separate_codewords,
)

__all__ = [
    "AttackerConfig", "ReceivedGrid", "transmit",
    "OneRingParams", "eigendecompose", "one_ring_covariance", "sample_cir",
    "Codebook", "Codeword", "generate_codebook", "superpose", "theoretical_iep", "verify_icc",
    "ExperimentConfig", "SystemConfig", "load_config", "parse_config",
    "ResultTable", "run_experiment",
    "DetectorConfig", "asymptotic_delta_f", "delta_f", "detect_sap", "identify",
    "lmmse_estimate", "process_grid", "separate_codewords",
]

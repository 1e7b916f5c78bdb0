"""Passive beamforming for reconfigurable intelligent surfaces.

Channel simulation, the received-power objective, closed-form and SDR
baselines, and an unsupervised phase-prediction network, plus an
experiment harness and a command-line front end.
"""

from .baselines import closed_form_gain, closed_form_single_antenna, random_phase
from .channel import (ChannelRealization, Dataset, ScenarioConfig, generate_dataset,
                      load_dataset, sample_channels, save_dataset)
from .features import Standardizer, extract_features, fit_standardizer
from .nn import (ArchitectureSpec, NetworkParams, TrainConfig, TrainHistory, init_network,
                 load_model, predict, save_model, train)
from .objective import DegenerateChannelError, beamform, channel_gain, rate
from .sdr import SolverOptions, sdr_beamform, solve_sdr

__version__ = "0.1.0"

__all__ = [
    "closed_form_gain", "closed_form_single_antenna", "random_phase",
    "ChannelRealization", "Dataset", "ScenarioConfig", "generate_dataset", "load_dataset",
    "sample_channels", "save_dataset",
    "Standardizer", "extract_features", "fit_standardizer",
    "ArchitectureSpec", "NetworkParams", "TrainConfig", "TrainHistory", "init_network",
    "load_model", "predict", "save_model", "train",
    "DegenerateChannelError", "beamform", "channel_gain", "rate",
    "SolverOptions", "sdr_beamform", "solve_sdr",
]

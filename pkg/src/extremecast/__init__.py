"""Simulation of a parametrically driven nonlinear oscillator with extreme
events, plus from-scratch neural forecasters (MLP, 1-D CNN, LSTM) for its
chaotic time series."""

__version__ = "0.1.0"

from .dynamics import SystemParams, State, Trajectory, PeakStatistics
from .dataset import MinMaxScaler, SupervisedDataset
from .models import ModelSpec
from .forecast import TrainConfig, ForecastReport

__all__ = [
    "SystemParams",
    "State",
    "Trajectory",
    "PeakStatistics",
    "MinMaxScaler",
    "SupervisedDataset",
    "ModelSpec",
    "TrainConfig",
    "ForecastReport",
]

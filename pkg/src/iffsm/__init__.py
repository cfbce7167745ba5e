"""Blind multiuser detection with an infinite factorial finite state machine."""

from .model import Constellation, GlobalParams, Hyperparams
from .simulator import ScenarioConfig, simulate

__version__ = "0.1.0"

__all__ = ["Constellation", "GlobalParams", "Hyperparams", "ScenarioConfig", "simulate"]

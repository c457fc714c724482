"""A small numpy implementation of proximal policy optimization."""

from invrl.ppo.config import PRESETS, PpoConfig, preset
from invrl.ppo.losses import TrainingDivergence
from invrl.ppo.network import Architecture, Network
from invrl.ppo.trainer import (ActionMap, PolicyController, TrainResult, load_checkpoint,
                               save_checkpoint, train_agents, train_single)

__all__ = ["PRESETS", "PpoConfig", "preset", "TrainingDivergence", "Architecture", "Network",
           "ActionMap", "PolicyController", "TrainResult", "load_checkpoint", "save_checkpoint",
           "train_agents", "train_single"]

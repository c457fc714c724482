"""Inventory control with stochastic demand and lead times: simulator, classic
reorder baselines and a numpy PPO learner."""

__version__ = "0.1.0"

"""Agent-based limit order book simulation with tabular Q-learning, task
similarity metrics and probabilistic policy reuse."""

__version__ = "0.1.0"

"""Renewable-energy demand forecasting.

A stacked peephole LSTM feeds a Transformer encoder and a small prediction
head; training runs mini-batch gradient descent, and particle swarm
optimization searches the hyperparameter space as an outer loop. Everything
is seeded and deterministic end to end.
"""

__version__ = "0.1.0"

from .rng import SeededRng

__all__ = ["SeededRng", "__version__"]

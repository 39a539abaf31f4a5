"""Spiking flight-control networks."""

from ._core import (
    ContractViolation,
    Network,
    evaluate_expert,
    gen_data,
    huber,
    surrogate_grad,
    train,
)

__all__ = [
    "ContractViolation",
    "Network",
    "evaluate_expert",
    "gen_data",
    "huber",
    "surrogate_grad",
    "train",
]

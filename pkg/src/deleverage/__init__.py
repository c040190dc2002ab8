"""Globally optimal portfolio deleveraging under cross-asset price impact."""

from .model import (
    MarketModel,
    equity,
    leverage_gap,
    liability,
    load_instance,
    objective,
    save_instance,
    validate,
)
from .reform import DcReform, reformulate

__version__ = "0.1.0"

__all__ = [
    "MarketModel",
    "DcReform",
    "equity",
    "leverage_gap",
    "liability",
    "load_instance",
    "objective",
    "reformulate",
    "save_instance",
    "validate",
]

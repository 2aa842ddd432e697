"""Deterministic discrete-event simulator for cluster-based, traffic-aware
duty-cycle energy conservation in wireless multi-hop networks."""

__version__ = "0.1.0"

from ecsim.core import EnergyAccount, EnergyModelParams, RadioMode, consume, fraction_remaining

__all__ = [
    "EnergyAccount",
    "EnergyModelParams",
    "RadioMode",
    "consume",
    "fraction_remaining",
    "__version__",
]

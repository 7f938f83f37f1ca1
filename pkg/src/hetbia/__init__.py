"""Blind interference alignment in a macrocell/femtocell network.

Simulation library and CLI for a heterogeneous downlink where one
macrocell (K users, N antennas each) coexists with K femtocells (one
user each, N-1 antennas). Structured time/antenna switching lets every
receiver null all interference with zero transmitter channel knowledge;
the package verifies the nulling numerically, accounts the degrees of
freedom against TDMA, and estimates rates/BER by Monte Carlo.
"""

__version__ = "0.1.0"

from .network import ChannelSet, NetworkConfig, derive, sample_channels
from .beamforming import (
    SlotPlan,
    default_slot_plan,
    femto_beamformer,
    macro_beamformer,
)
from .receiver import build_projector, interference_leakage
from .analysis import dof, optimize_c

__all__ = [
    "ChannelSet",
    "NetworkConfig",
    "SlotPlan",
    "build_projector",
    "default_slot_plan",
    "derive",
    "dof",
    "femto_beamformer",
    "interference_leakage",
    "macro_beamformer",
    "optimize_c",
    "sample_channels",
    "__version__",
]

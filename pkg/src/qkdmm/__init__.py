"""Certified key rates for BB84 receivers with detection-efficiency mismatch."""

from .channel import ChannelParams, ObservedStats, simulate
from .detectors import (
    PovmSet,
    ReceiverSpec,
    build_alice_povm,
    build_bob_povm,
    mismatch_model,
    uniform_receiver,
)
from .keyrate import KeyRateProblem, KeyRateResult, build_problem, key_rate, leak_ec, solve
from .photon_bounds import PhotonBounds, bounds_active, bounds_passive, sector_minima
from .squasher import squash_povm, squash_state

__all__ = [
    "ChannelParams",
    "KeyRateProblem",
    "KeyRateResult",
    "ObservedStats",
    "PhotonBounds",
    "PovmSet",
    "ReceiverSpec",
    "bounds_active",
    "bounds_passive",
    "build_alice_povm",
    "build_bob_povm",
    "build_problem",
    "key_rate",
    "leak_ec",
    "mismatch_model",
    "sector_minima",
    "simulate",
    "solve",
    "squash_povm",
    "squash_state",
    "uniform_receiver",
]

__version__ = "0.1.0"

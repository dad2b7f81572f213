"""Executable model of chained-BFT consensus safety with an adversarial simulator."""

from ._accel import BACKEND
from .core import QC, STRONG, Block, Genesis, HashMode, Vote, Weak, make_block
from .quorum import EpochConfig, HonestyMap, QuorumModel, check_bft_assumption, is_quorum

__all__ = [
    "BACKEND",
    "QC",
    "STRONG",
    "Block",
    "EpochConfig",
    "Genesis",
    "HashMode",
    "HonestyMap",
    "QuorumModel",
    "Vote",
    "Weak",
    "check_bft_assumption",
    "is_quorum",
    "make_block",
]

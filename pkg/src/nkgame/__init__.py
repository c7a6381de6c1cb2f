"""Simulation and exact analysis of the (n, k) opinion game on the complete graph."""

from nkgame.model import (
    CONSENTOR,
    MAJORITY_FOLLOWER,
    MINORITY_FOLLOWER,
    NEUTRALIST,
    RANDOM_FOLLOWER,
    REJECTOR,
    GameConfig,
    Mode,
    OpinionState,
    Population,
    Role,
    RoleKind,
    parse_population,
)
from nkgame.montecarlo import estimate, run_trial
from nkgame.exact import absorption, build_chain

__version__ = "0.1.0"

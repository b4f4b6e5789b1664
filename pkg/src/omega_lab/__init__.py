"""Recurrent-network recognition of omega-regular languages over ultimately periodic words."""

__version__ = "0.1.0"

from omega_lab.automaton import DBA, Alphabet, classify_sinks, fixtures, get_fixture, run_prefix, step
from omega_lab.acceptance import (
    UpWord,
    accept_up,
    accept_up_bruteforce,
    accept_up_matexp,
    suffix_profile,
)

__all__ = [
    "DBA",
    "Alphabet",
    "UpWord",
    "accept_up",
    "accept_up_bruteforce",
    "accept_up_matexp",
    "classify_sinks",
    "fixtures",
    "get_fixture",
    "run_prefix",
    "step",
    "suffix_profile",
]

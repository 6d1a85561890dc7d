"""Numerical toolkit for stratified Lie groups, quasi-Riesz transforms and their symbols."""

from .group import (
    AlgebraError,
    GroupData,
    StratifiedAlgebra,
    abelian,
    bch_multiply,
    check_algebra,
    engel,
    estimate_A0,
    free_step_two,
    heisenberg,
    validate_algebra,
)
from .fields import derive_left_invariant_fields
from .io import load_atlas, load_group, parse_group_file

__version__ = "0.1.0"

__all__ = [
    "AlgebraError",
    "GroupData",
    "StratifiedAlgebra",
    "abelian",
    "bch_multiply",
    "check_algebra",
    "derive_left_invariant_fields",
    "engel",
    "estimate_A0",
    "free_step_two",
    "heisenberg",
    "load_atlas",
    "load_group",
    "parse_group_file",
    "validate_algebra",
]

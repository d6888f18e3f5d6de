"""Molecular graphs, SMILES parsing/writing and canonicalization."""

from .elements import (
    AROMATIC_ORGANIC,
    ATOMIC_NUMBER,
    ATOMIC_WEIGHT,
    MONOISOTOPIC_MASS,
    ORGANIC_SUBSET,
    OUTER_ELECTRONS,
    SUPPORTED_ELEMENTS,
)
from .mol import (
    ANTICLOCKWISE,
    AROMATIC,
    CLOCKWISE,
    DOUBLE,
    SINGLE,
    STEREO_DOWN,
    STEREO_UP,
    TRIPLE,
    Atom,
    Bond,
    Molecule,
    SmilesError,
    SmilesParseError,
    ValenceError,
    bond_order_sum,
    implicit_hydrogens,
    smallest_valence,
)
from .parser import parse_smiles
from .writer import (
    canonical_ranks,
    canonical_smiles,
    enumerate_smiles,
    random_smiles,
    same_molecule,
    write_smiles,
)

__all__ = [
    "ANTICLOCKWISE",
    "AROMATIC",
    "AROMATIC_ORGANIC",
    "ATOMIC_NUMBER",
    "ATOMIC_WEIGHT",
    "CLOCKWISE",
    "DOUBLE",
    "MONOISOTOPIC_MASS",
    "ORGANIC_SUBSET",
    "OUTER_ELECTRONS",
    "SINGLE",
    "STEREO_DOWN",
    "STEREO_UP",
    "SUPPORTED_ELEMENTS",
    "TRIPLE",
    "Atom",
    "Bond",
    "Molecule",
    "SmilesError",
    "SmilesParseError",
    "ValenceError",
    "bond_order_sum",
    "canonical_ranks",
    "canonical_smiles",
    "enumerate_smiles",
    "implicit_hydrogens",
    "parse_smiles",
    "random_smiles",
    "same_molecule",
    "smallest_valence",
    "write_smiles",
]

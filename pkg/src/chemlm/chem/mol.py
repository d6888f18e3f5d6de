"""Molecular graph types: atoms, bonds, and the Molecule container."""

from __future__ import annotations

from dataclasses import dataclass, field

from .elements import (
    AROMATIC_ELEMENTS,
    DEFAULT_VALENCES,
    ORGANIC_SUBSET,
    SUPPORTED_ELEMENTS,
)

SINGLE = "single"
DOUBLE = "double"
TRIPLE = "triple"
AROMATIC = "aromatic"

BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)

STEREO_UP = "up"
STEREO_DOWN = "down"

CLOCKWISE = "clockwise"          # written as @@
ANTICLOCKWISE = "anticlockwise"  # written as @

# Bond order contributions doubled so aromatic (1.5) stays integral.
_DOUBLED_ORDER = {SINGLE: 2, DOUBLE: 4, TRIPLE: 6, AROMATIC: 3}

# Aromatic bonds at two-valent chalcogens contribute a plain single bond;
# their ring participation is via a lone pair (furan O, thiophene S).
_LONE_PAIR_AROMATICS = frozenset({"O", "S", "Se", "Te"})


class SmilesError(ValueError):
    """Base class for SMILES parsing and molecule construction errors."""


class SmilesParseError(SmilesError):
    """Syntax or grammar error, annotated with the offending position."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)
        self.position = position


class ValenceError(SmilesError):
    """Implicit hydrogen computation produced a negative count."""


@dataclass(frozen=True, slots=True)
class Atom:
    """A single atom. ``explicit_h`` is None exactly for organic-subset
    atoms whose hydrogen count is implied by the valence rules."""

    element: str
    aromatic: bool = False
    formal_charge: int = 0
    isotope: int | None = None
    explicit_h: int | None = None
    chirality: str | None = None

    @property
    def bracketed(self) -> bool:
        return self.explicit_h is not None


@dataclass(frozen=True, slots=True)
class Bond:
    a: int
    b: int
    order: str = SINGLE
    stereo: str | None = None

    def other(self, idx: int) -> int:
        return self.b if idx == self.a else self.a


@dataclass(frozen=True)
class Molecule:
    """Attributed molecular graph. Treated as immutable after construction;
    adjacency is derived once and shared."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    # adjacency[i] -> list of (neighbor index, bond index)
    adjacency: tuple[tuple[tuple[int, int], ...], ...] = field(init=False, repr=False)

    def __init__(self, atoms, bonds):
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "bonds", tuple(bonds))
        object.__setattr__(self, "adjacency", _build_adjacency(self.atoms, self.bonds))
        _validate(self)

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> tuple[tuple[int, int], ...]:
        return self.adjacency[idx]

    def degree(self, idx: int) -> int:
        return len(self.adjacency[idx])

    def total_hydrogens(self, idx: int) -> int:
        return implicit_hydrogens(self, idx)

    def fragments(self) -> list[list[int]]:
        """Connected components as sorted atom index lists, in order of
        their smallest member."""
        seen = [False] * len(self.atoms)
        out = []
        for start in range(len(self.atoms)):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for u, _ in self.adjacency[v]:
                    if not seen[u]:
                        seen[u] = True
                        stack.append(u)
            out.append(sorted(comp))
        return out


def _build_adjacency(atoms, bonds):
    adj = [[] for _ in atoms]
    for bi, bond in enumerate(bonds):
        adj[bond.a].append((bond.b, bi))
        adj[bond.b].append((bond.a, bi))
    return tuple(tuple(entries) for entries in adj)


def _validate(mol: Molecule) -> None:
    n = len(mol.atoms)
    seen_pairs = set()
    for bond in mol.bonds:
        if not (0 <= bond.a < n and 0 <= bond.b < n):
            raise SmilesError(f"bond ({bond.a},{bond.b}) references a missing atom")
        if bond.a == bond.b:
            raise SmilesError(f"atom {bond.a} bonded to itself")
        pair = (min(bond.a, bond.b), max(bond.a, bond.b))
        if pair in seen_pairs:
            raise SmilesError(f"duplicate bond between atoms {pair[0]} and {pair[1]}")
        seen_pairs.add(pair)
        if bond.order not in BOND_ORDERS:
            raise SmilesError(f"unknown bond order {bond.order!r}")
        if bond.order == AROMATIC:
            if not (mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic):
                raise SmilesError(
                    f"aromatic bond between non-aromatic atoms {bond.a} and {bond.b}"
                )
    for idx, atom in enumerate(mol.atoms):
        if atom.element not in SUPPORTED_ELEMENTS:
            raise SmilesError(f"unsupported element {atom.element!r} at atom {idx}")
        if atom.aromatic and atom.element not in AROMATIC_ELEMENTS:
            raise SmilesError(f"element {atom.element!r} cannot be aromatic (atom {idx})")
        if not atom.bracketed and atom.element not in ORGANIC_SUBSET:
            raise SmilesError(
                f"element {atom.element!r} requires bracket notation (atom {idx})"
            )
        implicit_hydrogens(mol, idx)  # raises ValenceError when negative


def bond_order_sum(mol: Molecule, idx: int) -> int:
    """Integral bond order sum used by the valence rules: aromatic bonds
    count 1.5 (1.0 at O/S/Se/Te), the total is rounded down."""
    element = mol.atoms[idx].element
    doubled = 0
    for _, bi in mol.adjacency[idx]:
        order = mol.bonds[bi].order
        if order == AROMATIC and element in _LONE_PAIR_AROMATICS:
            doubled += 2
        else:
            doubled += _DOUBLED_ORDER[order]
    return doubled // 2


def smallest_valence(element: str, order_sum: int) -> int | None:
    valences = DEFAULT_VALENCES.get(element)
    if valences is None:
        return None
    for v in valences:
        if v >= order_sum:
            return v
    return None


def implicit_hydrogens(mol: Molecule, idx: int) -> int:
    """Hydrogen count of an atom: the bracket-specified count when present,
    otherwise default valence minus the bond order sum."""
    atom = mol.atoms[idx]
    if atom.explicit_h is not None:
        return atom.explicit_h
    order_sum = bond_order_sum(mol, idx)
    valence = smallest_valence(atom.element, order_sum)
    if valence is None:
        raise ValenceError(
            f"atom {idx} ({atom.element}) has bond order sum {order_sum}, "
            f"exceeding its allowed valences"
        )
    return valence - order_sum

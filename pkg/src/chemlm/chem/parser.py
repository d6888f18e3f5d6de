"""SMILES parser producing :class:`~chemlm.chem.mol.Molecule` graphs.

Grammar coverage: organic-subset atoms, bracket atoms with isotope, charge,
hydrogen count and chirality tags, the bond symbols ``- = # : / \\``,
parenthesised branches, single-digit and ``%nn`` ring closures, and ``.``
fragment separators. Aromaticity is taken as written; no perception or
kekulization is attempted.
"""

from __future__ import annotations

from .elements import SUPPORTED_ELEMENTS
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
    SmilesParseError,
    ValenceError,
    implicit_hydrogens,
)

DEFAULT_MAX_LENGTH = 500

_BOND_SYMBOLS = {
    "-": (SINGLE, None),
    "=": (DOUBLE, None),
    "#": (TRIPLE, None),
    ":": (AROMATIC, None),
    "/": (SINGLE, STEREO_UP),
    "\\": (SINGLE, STEREO_DOWN),
}

# Two-letter element symbols writable without brackets.
_TWO_LETTER_ORGANIC = ("Cl", "Br")
_AROMATIC_BRACKET_TWO_LETTER = ("se", "as")


def parse_smiles(text: str, max_length: int = DEFAULT_MAX_LENGTH) -> Molecule:
    """Parse a SMILES string into a molecular graph.

    Raises :class:`SmilesParseError` on grammar errors (position annotated)
    and :class:`ValenceError` when an organic-subset atom would need a
    negative implicit hydrogen count.
    """
    text = text.strip()
    if not text:
        raise SmilesParseError("empty SMILES string")
    if len(text) > max_length:
        raise SmilesParseError(
            f"SMILES length {len(text)} exceeds the maximum of {max_length}"
        )
    return _Parser(text).run()


class _PendingBond:
    __slots__ = ("order", "stereo", "position")

    def __init__(self, order, stereo, position):
        self.order = order
        self.stereo = stereo
        self.position = position


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[Atom] = []
        self.atom_positions: list[int] = []
        self.bonds: list[Bond] = []
        self.bond_pairs: set[tuple[int, int]] = set()
        self.prev: int | None = None
        self.branch_stack: list[tuple[int | None, int]] = []
        # ring digit -> (atom index, pending bond or None, open position)
        self.open_rings: dict[int, tuple[int, _PendingBond | None, int]] = {}
        self.pending: _PendingBond | None = None

    def error(self, message: str, position: int | None = None) -> SmilesParseError:
        return SmilesParseError(message, self.pos if position is None else position)

    def run(self) -> Molecule:
        text = self.text
        n = len(text)
        while self.pos < n:
            ch = text[self.pos]
            if ch == "(":
                if self.prev is None:
                    raise self.error("branch cannot open before any atom")
                if self.pending is not None:
                    raise self.error("bond symbol before '('")
                self.branch_stack.append((self.prev, len(self.atoms)))
                self.pos += 1
            elif ch == ")":
                if not self.branch_stack:
                    raise self.error("unmatched ')'")
                if self.pending is not None:
                    raise self.error("dangling bond symbol before ')'")
                origin, count = self.branch_stack.pop()
                if len(self.atoms) == count:
                    raise self.error("empty branch")
                self.prev = origin
                self.pos += 1
            elif ch in _BOND_SYMBOLS:
                if self.pending is not None:
                    raise self.error("two consecutive bond symbols")
                if self.prev is None:
                    raise self.error("bond symbol before any atom")
                order, stereo = _BOND_SYMBOLS[ch]
                self.pending = _PendingBond(order, stereo, self.pos)
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                self.ring_closure()
            elif ch == "[":
                self.bracket_atom()
            elif ch == ".":
                if self.branch_stack:
                    raise self.error("'.' inside a branch")
                if self.pending is not None:
                    raise self.error("bond symbol before '.'")
                if self.prev is None:
                    raise self.error("'.' before any atom")
                self.prev = None
                self.pos += 1
            else:
                self.plain_atom(ch)
        if self.pending is not None:
            raise self.error("dangling bond symbol at end", self.pending.position)
        if self.branch_stack:
            raise self.error("unmatched '('", len(text))
        if self.open_rings:
            digit, (_, _, opened) = next(iter(self.open_rings.items()))
            raise self.error(f"unmatched ring closure {digit}", opened)
        if not self.atoms:
            raise self.error("no atoms in SMILES")
        mol = Molecule(self.atoms, self.bonds)
        self.check_valences(mol)
        return mol

    def check_valences(self, mol: Molecule) -> None:
        for idx in range(len(mol.atoms)):
            try:
                implicit_hydrogens(mol, idx)
            except ValenceError as exc:
                raise SmilesParseError(str(exc), self.atom_positions[idx]) from exc

    # -- atom handling -------------------------------------------------

    def add_atom(self, atom: Atom, position: int) -> None:
        idx = len(self.atoms)
        self.atoms.append(atom)
        self.atom_positions.append(position)
        if self.prev is not None:
            self.add_bond(self.prev, idx, self.pending)
        self.pending = None
        self.prev = idx

    def add_bond(self, a: int, b: int, pending: _PendingBond | None) -> None:
        pair = (min(a, b), max(a, b))
        if pair in self.bond_pairs:
            raise self.error(f"duplicate bond between atoms {a} and {b}")
        if pending is None:
            both_aromatic = self.atoms[a].aromatic and self.atoms[b].aromatic
            order, stereo = (AROMATIC, None) if both_aromatic else (SINGLE, None)
        else:
            order, stereo = pending.order, pending.stereo
            if order == AROMATIC and not (
                self.atoms[a].aromatic and self.atoms[b].aromatic
            ):
                raise self.error(
                    "':' bond requires aromatic atoms on both ends", pending.position
                )
        self.bond_pairs.add(pair)
        self.bonds.append(Bond(a, b, order, stereo))

    def plain_atom(self, ch: str) -> None:
        start = self.pos
        text = self.text
        if ch.isupper():
            symbol = None
            for two in _TWO_LETTER_ORGANIC:
                if text.startswith(two, start):
                    symbol = two
                    break
            if symbol is None:
                symbol = ch
            if symbol not in ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"):
                raise self.error(
                    f"element {symbol!r} is not in the organic subset; bracket it"
                )
            self.pos = start + len(symbol)
            self.add_atom(Atom(symbol), start)
        elif ch.islower():
            if ch not in "bcnops":
                raise self.error(f"unexpected character {ch!r}")
            self.pos = start + 1
            self.add_atom(Atom(ch.upper(), aromatic=True), start)
        else:
            raise self.error(f"unexpected character {ch!r}")

    def bracket_atom(self) -> None:
        start = self.pos
        text = self.text
        end = text.find("]", start + 1)
        if end < 0:
            raise self.error("unclosed bracket atom", start)
        i = start + 1
        if i == end:
            raise self.error("empty bracket atom", start)

        isotope = None
        if text[i].isdigit():
            j = i
            while j < end and text[j].isdigit():
                j += 1
            isotope = int(text[i:j])
            if isotope <= 0:
                raise self.error("isotope must be positive", i)
            i = j

        aromatic = False
        element = None
        if i < end:
            for two in _AROMATIC_BRACKET_TWO_LETTER:
                if text.startswith(two, i):
                    element, aromatic = two.capitalize(), True
                    i += 2
                    break
        if element is None and i < end:
            ch = text[i]
            if ch.isupper():
                if (
                    i + 1 < end
                    and text[i + 1].islower()
                    and text[i : i + 2] in SUPPORTED_ELEMENTS
                ):
                    element = text[i : i + 2]
                    i += 2
                else:
                    element = ch
                    i += 1
            elif ch in "bcnops":
                element, aromatic = ch.upper(), True
                i += 1
        if element is None:
            raise self.error("missing element symbol in bracket atom", i)
        if element not in SUPPORTED_ELEMENTS:
            raise self.error(f"unsupported element {element!r}", start)

        chirality = None
        if i < end and text[i] == "@":
            if i + 1 < end and text[i + 1] == "@":
                chirality = CLOCKWISE
                i += 2
            else:
                chirality = ANTICLOCKWISE
                i += 1

        hcount = 0
        if i < end and text[i] == "H":
            i += 1
            j = i
            while j < end and text[j].isdigit():
                j += 1
            hcount = int(text[i:j]) if j > i else 1
            i = j

        charge = 0
        if i < end and text[i] in "+-":
            sign = 1 if text[i] == "+" else -1
            symbol = text[i]
            i += 1
            j = i
            while j < end and text[j].isdigit():
                j += 1
            if j > i:
                charge = sign * int(text[i:j])
                i = j
            else:
                charge = sign
                while i < end and text[i] == symbol:
                    charge += sign
                    i += 1

        if i != end:
            raise self.error(f"unexpected {text[i]!r} in bracket atom", i)
        if aromatic and element == "H":
            raise self.error("hydrogen cannot be aromatic", start)

        self.pos = end + 1
        self.add_atom(
            Atom(
                element,
                aromatic=aromatic,
                formal_charge=charge,
                isotope=isotope,
                explicit_h=hcount,
                chirality=chirality,
            ),
            start,
        )

    # -- ring closures --------------------------------------------------

    def ring_closure(self) -> None:
        start = self.pos
        text = self.text
        if self.prev is None:
            raise self.error("ring closure before any atom")
        if text[start] == "%":
            if start + 2 >= len(text) or not text[start + 1 : start + 3].isdigit():
                raise self.error("'%' must be followed by two digits")
            digit = int(text[start + 1 : start + 3])
            self.pos = start + 3
        else:
            digit = int(text[start])
            self.pos = start + 1

        pending = self.pending
        self.pending = None
        if digit in self.open_rings:
            other, open_pending, opened_at = self.open_rings.pop(digit)
            if other == self.prev:
                raise self.error(f"ring closure {digit} bonds an atom to itself", start)
            spec = self.merge_ring_bonds(open_pending, pending, digit, start)
            self.add_bond(other, self.prev, spec)
        else:
            self.open_rings[digit] = (self.prev, pending, start)

    def merge_ring_bonds(self, a, b, digit, position):
        # The up/down symbols describe the same bond from two reference
        # frames, so only the order has to agree; the opening tag wins.
        if a is not None and b is not None:
            if a.order != b.order:
                raise self.error(
                    f"conflicting bond symbols on ring closure {digit}", position
                )
            return a
        return a if a is not None else b

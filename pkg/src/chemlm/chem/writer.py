"""SMILES writing: plain, canonical and randomly enumerated forms.

Canonical form uses iterative neighborhood refinement of atom invariants
(a Morgan-style partition) with deterministic tie breaking, writes each
connected fragment from its lowest-ranked atom, and joins the sorted
fragment strings with ``.``. Stereo annotations are dropped from the
canonical form so that stereoisomers compare equal; the plain and random
writers keep them as written.
"""

from __future__ import annotations

import random
from collections import Counter

from .elements import AROMATIC_ORGANIC, ORGANIC_SUBSET
from .mol import (
    AROMATIC,
    CLOCKWISE,
    DOUBLE,
    SINGLE,
    STEREO_DOWN,
    STEREO_UP,
    TRIPLE,
    Molecule,
    SmilesError,
    bond_order_sum,
    smallest_valence,
)
from .parser import parse_smiles

_BOND_RANK_KEY = {SINGLE: 0, DOUBLE: 1, TRIPLE: 2, AROMATIC: 3}


# ---------------------------------------------------------------------------
# Canonical ranks


def _initial_invariants(mol: Molecule) -> list[tuple]:
    inv = []
    for idx, atom in enumerate(mol.atoms):
        inv.append(
            (
                atom.element,
                atom.aromatic,
                atom.formal_charge,
                atom.isotope or 0,
                mol.total_hydrogens(idx),
                mol.degree(idx),
            )
        )
    return inv


def _dense_ranks(keys: list) -> list[int]:
    order = {key: rank for rank, key in enumerate(sorted(set(keys)))}
    return [order[key] for key in keys]


def _refine(mol: Molecule, ranks: list[int]) -> list[int]:
    """Propagate neighborhood information until the partition stabilizes."""
    n = len(ranks)
    distinct = len(set(ranks))
    while True:
        keys = []
        for i in range(n):
            neigh = sorted(
                (_BOND_RANK_KEY[mol.bonds[bi].order], ranks[j])
                for j, bi in mol.adjacency[i]
            )
            keys.append((ranks[i], tuple(neigh)))
        ranks = _dense_ranks(keys)
        now = len(set(ranks))
        if now == distinct:
            return ranks
        distinct = now


def canonical_ranks(mol: Molecule) -> list[int]:
    """Total order over atoms, invariant under input atom numbering.

    Ties left after refinement are broken by doubling all ranks and
    demoting the lowest-index atom of the smallest tied class, then
    re-refining, until every atom holds a distinct rank.
    """
    n = len(mol)
    ranks = _refine(mol, _dense_ranks(_initial_invariants(mol)))
    while len(set(ranks)) < n:
        counts = Counter(ranks)
        smallest_tied = min(r for r, c in counts.items() if c > 1)
        chosen = ranks.index(smallest_tied)
        ranks = [2 * r for r in ranks]
        ranks[chosen] -= 1
        ranks = _refine(mol, _dense_ranks(ranks))
    return ranks


# ---------------------------------------------------------------------------
# Token rendering


def _plain_symbol_ok(atom) -> bool:
    if atom.aromatic:
        return atom.element in AROMATIC_ORGANIC
    return atom.element in ORGANIC_SUBSET


def _charge_token(charge: int) -> str:
    sign = "+" if charge > 0 else "-"
    return sign if abs(charge) == 1 else f"{sign}{abs(charge)}"


def _atom_token(mol: Molecule, idx: int, keep_stereo: bool) -> str:
    atom = mol.atoms[idx]
    total_h = mol.total_hydrogens(idx)
    chirality = atom.chirality if keep_stereo else None
    symbol = atom.element.lower() if atom.aromatic else atom.element

    bracket = (
        atom.isotope is not None
        or atom.formal_charge != 0
        or chirality is not None
        or not _plain_symbol_ok(atom)
    )
    if not bracket:
        valence = smallest_valence(atom.element, bond_order_sum(mol, idx))
        bracket = valence is None or valence - bond_order_sum(mol, idx) != total_h
    if not bracket:
        return symbol

    parts = ["["]
    if atom.isotope is not None:
        parts.append(str(atom.isotope))
    parts.append(symbol)
    if chirality is not None:
        parts.append("@@" if chirality == CLOCKWISE else "@")
    if total_h == 1:
        parts.append("H")
    elif total_h > 1:
        parts.append(f"H{total_h}")
    if atom.formal_charge:
        parts.append(_charge_token(atom.formal_charge))
    parts.append("]")
    return "".join(parts)


def _bond_token(mol: Molecule, bond_idx: int, keep_stereo: bool) -> str:
    bond = mol.bonds[bond_idx]
    if bond.order == SINGLE:
        if keep_stereo and bond.stereo == STEREO_UP:
            return "/"
        if keep_stereo and bond.stereo == STEREO_DOWN:
            return "\\"
        both_aromatic = mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic
        return "-" if both_aromatic else ""
    if bond.order == DOUBLE:
        return "="
    if bond.order == TRIPLE:
        return "#"
    return ""  # aromatic bonds are the default between aromatic atoms


# ---------------------------------------------------------------------------
# Graph traversal and assembly


def _dfs_tree(mol: Molecule, start: int, priority: list[int]):
    """Depth-first spanning tree with children visited by ascending priority.

    Returns the preorder position of each reached atom, the ordered tree
    children per atom and the list of non-tree (ring closure) bond indices.
    """
    pos = {start: 0}
    children: dict[int, list[tuple[int, int]]] = {start: []}
    ring: list[int] = []
    seen_bonds: set[int] = set()

    def ordered(idx):
        return iter(sorted(mol.adjacency[idx], key=lambda nb: priority[nb[0]]))

    stack = [(start, ordered(start))]
    while stack:
        node, it = stack[-1]
        for nbr, bi in it:
            if bi in seen_bonds:
                continue
            seen_bonds.add(bi)
            if nbr in pos:
                ring.append(bi)
            else:
                pos[nbr] = len(pos)
                children[nbr] = []
                children[node].append((bi, nbr))
                stack.append((nbr, ordered(nbr)))
                break
        else:
            stack.pop()
    return pos, children, ring


def _ring_digit_token(digit: int) -> str:
    if digit < 10:
        return str(digit)
    if digit < 100:
        return f"%{digit:02d}"
    raise SmilesError("more than 99 rings open at once")


def _write_fragment(
    mol: Molecule, start: int, priority: list[int], keep_stereo: bool
) -> str:
    pos, children, ring = _dfs_tree(mol, start, priority)

    # Ring closures indexed by the site that opens (earlier) and closes them.
    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    for bi in ring:
        bond = mol.bonds[bi]
        first, second = sorted((bond.a, bond.b), key=pos.__getitem__)
        opens.setdefault(first, []).append(bi)
        closes.setdefault(second, []).append(bi)
    for site, items in opens.items():
        items.sort(key=lambda bi: pos[mol.bonds[bi].other(site)])
    for site, items in closes.items():
        items.sort(key=lambda bi: pos[mol.bonds[bi].other(site)])

    digits: dict[int, int] = {}
    in_use: set[int] = set()
    tokens: list[str] = []

    def emit_atom(node: int) -> None:
        tokens.append(_atom_token(mol, node, keep_stereo))
        for bi in closes.get(node, ()):
            digit = digits.pop(bi)
            in_use.discard(digit)
            tokens.append(_ring_digit_token(digit))
        for bi in opens.get(node, ()):
            digit = 1
            while digit in in_use:
                digit += 1
            in_use.add(digit)
            digits[bi] = digit
            tokens.append(_bond_token(mol, bi, keep_stereo))
            tokens.append(_ring_digit_token(digit))

    # Work items: ("atom", bond_idx or None, atom) and literal parens.
    work: list = [(None, start)]
    while work:
        item = work.pop()
        if isinstance(item, str):
            tokens.append(item)
            continue
        via, node = item
        if via is not None:
            tokens.append(_bond_token(mol, via, keep_stereo))
        emit_atom(node)
        kids = children[node]
        trailing: list = []
        for bi, child in kids[:-1]:
            trailing.extend(["(", (bi, child), ")"])
        if kids:
            trailing.append(kids[-1])
        work.extend(reversed(trailing))
    return "".join(tokens)


def _fragment_molecule(mol: Molecule, atom_ids: list[int]) -> Molecule:
    remap = {old: new for new, old in enumerate(atom_ids)}
    atoms = [mol.atoms[i] for i in atom_ids]
    bonds = [
        type(b)(remap[b.a], remap[b.b], b.order, b.stereo)
        for b in mol.bonds
        if b.a in remap
    ]
    return Molecule(atoms, bonds)


def write_smiles(mol: Molecule) -> str:
    """Plain SMILES in input atom order, stereo annotations preserved."""
    priority = list(range(len(mol)))
    parts = []
    for atom_ids in mol.fragments():
        parts.append(_write_fragment(mol, min(atom_ids), priority, keep_stereo=True))
    return ".".join(parts)


def canonical_smiles(mol: Molecule) -> str:
    """Canonical SMILES: numbering-invariant, stereo stripped, sorted fragments."""
    parts = []
    for atom_ids in mol.fragments():
        frag = _fragment_molecule(mol, atom_ids)
        ranks = canonical_ranks(frag)
        start = ranks.index(min(ranks))
        parts.append(_write_fragment(frag, start, ranks, keep_stereo=False))
    return ".".join(sorted(parts))


def random_smiles(mol: Molecule, rng: random.Random) -> str:
    """One random-order SMILES for ``mol`` (stereo annotations preserved)."""
    priority = list(range(len(mol)))
    rng.shuffle(priority)
    frags = mol.fragments()
    if len(frags) > 1:
        rng.shuffle(frags)
    parts = []
    for atom_ids in frags:
        start = min(atom_ids, key=lambda i: priority[i])
        parts.append(_write_fragment(mol, start, priority, keep_stereo=True))
    return ".".join(parts)


def enumerate_smiles(mol: Molecule, count: int, rng) -> list[str]:
    """``count`` independently randomized SMILES strings for ``mol``.

    ``rng`` may be a ``random.Random`` instance or an integer seed.
    Duplicates are possible for small or highly symmetric molecules.
    """
    if isinstance(rng, int):
        rng = random.Random(rng)
    return [random_smiles(mol, rng) for _ in range(count)]


def same_molecule(a, b) -> bool:
    """Whether two molecules (or SMILES strings) share a canonical form."""
    if isinstance(a, str):
        a = parse_smiles(a)
    if isinstance(b, str):
        b = parse_smiles(b)
    return canonical_smiles(a) == canonical_smiles(b)

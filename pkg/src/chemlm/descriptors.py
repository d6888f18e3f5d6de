"""Physicochemical descriptors and CDF normalization of regression targets.

Sixteen 2D-graph descriptors with simplified but deterministic
definitions (documented per function). Normalization maps each raw value
through the empirical CDF of a training sample with linear interpolation,
so every target lands in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chem.elements import ATOMIC_WEIGHT, MONOISOTOPIC_MASS, OUTER_ELECTRONS
from .chem.mol import AROMATIC, DOUBLE, SINGLE, Molecule

RESERVOIR_CAPACITY = 10_000


class DescriptorError(ValueError):
    """Unknown descriptor id or misaligned vector/normalizer."""


def _heavy(mol: Molecule) -> list[int]:
    return [i for i, a in enumerate(mol.atoms) if a.element != "H"]


def _hydrogens_at(mol: Molecule, idx: int) -> int:
    explicit = sum(1 for j, _ in mol.adjacency[idx] if mol.atoms[j].element == "H")
    return mol.total_hydrogens(idx) + explicit


def _heavy_degree(mol: Molecule, idx: int) -> int:
    return sum(1 for j, _ in mol.adjacency[idx] if mol.atoms[j].element != "H")


def mol_wt(mol: Molecule) -> float:
    """Average molecular weight including implicit hydrogens."""
    total = 0.0
    for i, atom in enumerate(mol.atoms):
        total += ATOMIC_WEIGHT[atom.element]
        total += mol.total_hydrogens(i) * ATOMIC_WEIGHT["H"]
    return total


def exact_mol_wt(mol: Molecule) -> float:
    """Monoisotopic weight; a specified isotope contributes its mass number."""
    total = 0.0
    for i, atom in enumerate(mol.atoms):
        if atom.isotope is not None:
            total += float(atom.isotope)
        else:
            total += MONOISOTOPIC_MASS[atom.element]
        total += mol.total_hydrogens(i) * MONOISOTOPIC_MASS["H"]
    return total


def heavy_atom_count(mol: Molecule) -> float:
    return float(len(_heavy(mol)))


def heavy_atom_mol_wt(mol: Molecule) -> float:
    """Average weight of the hydrogen-free skeleton."""
    return float(sum(ATOMIC_WEIGHT[mol.atoms[i].element] for i in _heavy(mol)))


def _cyclomatic(n_atoms: int, n_bonds: int, n_components: int) -> int:
    return n_bonds - n_atoms + n_components


def ring_count(mol: Molecule) -> float:
    return float(_cyclomatic(len(mol.atoms), len(mol.bonds), len(mol.fragments())))


def _aromatic_components(mol: Molecule) -> tuple[int, int, int]:
    """(atoms, bonds, components) of the subgraph of aromatic bonds."""
    arom_bonds = [b for b in mol.bonds if b.order == AROMATIC]
    nodes = sorted({b.a for b in arom_bonds} | {b.b for b in arom_bonds})
    adj: dict[int, list[int]] = {v: [] for v in nodes}
    for b in arom_bonds:
        adj[b.a].append(b.b)
        adj[b.b].append(b.a)
    seen: set[int] = set()
    comps = 0
    for v in nodes:
        if v in seen:
            continue
        comps += 1
        stack = [v]
        seen.add(v)
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
    return len(nodes), len(arom_bonds), comps


def num_aromatic_rings(mol: Molecule) -> float:
    atoms, bonds, comps = _aromatic_components(mol)
    return float(_cyclomatic(atoms, bonds, comps))


def num_aliphatic_rings(mol: Molecule) -> float:
    return ring_count(mol) - num_aromatic_rings(mol)


def num_h_acceptors(mol: Molecule) -> float:
    """Simplified Lipinski acceptor count: every N or O atom."""
    return float(sum(1 for a in mol.atoms if a.element in ("N", "O")))


def num_h_donors(mol: Molecule) -> float:
    """N or O atoms carrying at least one hydrogen."""
    return float(
        sum(
            1
            for i, a in enumerate(mol.atoms)
            if a.element in ("N", "O") and _hydrogens_at(mol, i) >= 1
        )
    )


def _bridges(mol: Molecule) -> set[int]:
    """Bond indices not on any cycle (iterative lowpoint search)."""
    n = len(mol.atoms)
    disc = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        while stack:
            v, parent_bond, ptr = stack.pop()
            if ptr == 0:
                disc[v] = low[v] = timer
                timer += 1
            if ptr < len(mol.adjacency[v]):
                stack.append((v, parent_bond, ptr + 1))
                w, bi = mol.adjacency[v][ptr]
                if bi == parent_bond:
                    continue
                if disc[w] == -1:
                    stack.append((w, bi, 0))
                else:
                    low[v] = min(low[v], disc[w])
            elif parent_bond != -1:
                bond = mol.bonds[parent_bond]
                p = bond.other(v)
                low[p] = min(low[p], low[v])
                if low[v] > disc[p]:
                    bridges.add(parent_bond)
    return bridges


def _is_amide_cn(mol: Molecule, bond) -> bool:
    for c, n in ((bond.a, bond.b), (bond.b, bond.a)):
        if mol.atoms[c].element == "C" and mol.atoms[n].element == "N":
            for _, bi in mol.adjacency[c]:
                other = mol.bonds[bi]
                j = other.other(c)
                if other.order == DOUBLE and mol.atoms[j].element == "O":
                    return True
    return False


def num_rotatable_bonds(mol: Molecule) -> float:
    """Single non-ring bonds whose heavy endpoints each have another
    heavy neighbor; amide C-N bonds are excluded."""
    bridges = _bridges(mol)
    count = 0
    for bi, bond in enumerate(mol.bonds):
        if bond.order != SINGLE or bi not in bridges:
            continue
        if mol.atoms[bond.a].element == "H" or mol.atoms[bond.b].element == "H":
            continue
        if _heavy_degree(mol, bond.a) < 2 or _heavy_degree(mol, bond.b) < 2:
            continue
        if _is_amide_cn(mol, bond):
            continue
        count += 1
    return float(count)


def num_heteroatoms(mol: Molecule) -> float:
    return float(sum(1 for a in mol.atoms if a.element not in ("C", "H")))


def nhoh_count(mol: Molecule) -> float:
    """Total hydrogens attached to N or O atoms."""
    return float(
        sum(
            _hydrogens_at(mol, i)
            for i, a in enumerate(mol.atoms)
            if a.element in ("N", "O")
        )
    )


def no_count(mol: Molecule) -> float:
    return float(sum(1 for a in mol.atoms if a.element in ("N", "O")))


def fraction_csp3(mol: Molecule) -> float:
    """Share of carbons that are non-aromatic with only single bonds."""
    carbons = [i for i, a in enumerate(mol.atoms) if a.element == "C"]
    if not carbons:
        return 0.0
    sp3 = 0
    for i in carbons:
        if mol.atoms[i].aromatic:
            continue
        if all(mol.bonds[bi].order == SINGLE for _, bi in mol.adjacency[i]):
            sp3 += 1
    return sp3 / len(carbons)


def num_valence_electrons(mol: Molecule) -> float:
    total = 0
    for i, atom in enumerate(mol.atoms):
        total += OUTER_ELECTRONS[atom.element] - atom.formal_charge
        total += mol.total_hydrogens(i)
    return float(total)


def chi0(mol: Molecule) -> float:
    """Simple connectivity index: sum of heavy-degree^(-1/2)."""
    total = 0.0
    for i in _heavy(mol):
        d = _heavy_degree(mol, i)
        if d > 0:
            total += d ** -0.5
    return total


REGISTRY: dict[str, object] = {
    "MolWt": mol_wt,
    "ExactMolWt": exact_mol_wt,
    "HeavyAtomCount": heavy_atom_count,
    "HeavyAtomMolWt": heavy_atom_mol_wt,
    "RingCount": ring_count,
    "NumAromaticRings": num_aromatic_rings,
    "NumAliphaticRings": num_aliphatic_rings,
    "NumHAcceptors": num_h_acceptors,
    "NumHDonors": num_h_donors,
    "NumRotatableBonds": num_rotatable_bonds,
    "NumHeteroatoms": num_heteroatoms,
    "NHOHCount": nhoh_count,
    "NOCount": no_count,
    "FractionCSP3": fraction_csp3,
    "NumValenceElectrons": num_valence_electrons,
    "Chi0": chi0,
}

_NAMED_MEMBERS = {
    "ALL_IMPLEMENTED": tuple(REGISTRY),
    "SIMPLE": (
        "MolWt",
        "NumHAcceptors",
        "NumHDonors",
        "NumRotatableBonds",
        "FractionCSP3",
    ),
    "GRAPH": ("Chi0",),
    "FRAGMENT_COUNTS": (
        "RingCount",
        "NumAromaticRings",
        "NumAliphaticRings",
        "NumHAcceptors",
        "NumHDonors",
        "NumRotatableBonds",
        "NumHeteroatoms",
        "NHOHCount",
        "NOCount",
    ),
    "DRUGLIKENESS_CORE": (
        "MolWt",
        "ExactMolWt",
        "HeavyAtomCount",
        "RingCount",
        "NumAromaticRings",
        "NumAliphaticRings",
        "NumHAcceptors",
        "NumHDonors",
        "NumRotatableBonds",
        "NumHeteroatoms",
        "NHOHCount",
        "NOCount",
        "FractionCSP3",
    ),
}


@dataclass(frozen=True)
class DescriptorSet:
    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise DescriptorError("duplicate descriptor ids")
        for m in self.members:
            if m not in REGISTRY:
                raise DescriptorError(f"unregistered descriptor id {m!r}")

    def __len__(self) -> int:
        return len(self.members)


def named_set(name: str) -> DescriptorSet:
    try:
        return DescriptorSet(name, _NAMED_MEMBERS[name])
    except KeyError:
        raise DescriptorError(
            f"unknown descriptor set {name!r}; choose from {sorted(_NAMED_MEMBERS)}"
        ) from None


@dataclass(frozen=True, eq=False)
class DescriptorVector:
    members: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.members),):
            raise DescriptorError("value/member length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise DescriptorError("non-finite descriptor value")


def compute_descriptors(mol: Molecule, dset: DescriptorSet) -> DescriptorVector:
    values = np.array([REGISTRY[m](mol) for m in dset.members], dtype=np.float64)
    return DescriptorVector(dset.members, values)


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-descriptor sorted value samples defining empirical CDFs."""

    members: tuple[str, ...]
    samples: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.samples) != len(self.members):
            raise DescriptorError("sample/member length mismatch")
        for s in self.samples:
            if s.size == 0:
                raise DescriptorError("empty normalizer sample")


def fit_normalizer(
    vectors, capacity: int = RESERVOIR_CAPACITY, seed: int = 0
) -> Normalizer:
    """Retain (up to ``capacity``) values per descriptor by uniform
    reservoir sampling, then sort each sample."""
    rng = np.random.Generator(np.random.PCG64(seed))
    reservoirs: list[list[float]] | None = None
    members: tuple[str, ...] | None = None
    seen = 0
    for vec in vectors:
        if reservoirs is None:
            members = vec.members
            reservoirs = [[] for _ in members]
        elif vec.members != members:
            raise DescriptorError("descriptor vectors are not aligned")
        seen += 1
        if len(reservoirs[0]) < capacity:
            for r, v in zip(reservoirs, vec.values):
                r.append(float(v))
        else:
            j = int(rng.integers(0, seen))
            if j < capacity:
                for r, v in zip(reservoirs, vec.values):
                    r[j] = float(v)
    if reservoirs is None or seen < 2:
        raise DescriptorError("need at least two molecules to fit a normalizer")
    samples = tuple(np.sort(np.asarray(r, dtype=np.float64)) for r in reservoirs)
    return Normalizer(members, samples)


def normalize(vec: DescriptorVector, norm: Normalizer) -> np.ndarray:
    """Empirical-CDF value of each descriptor, clamped to [0, 1]."""
    if vec.members != norm.members:
        raise DescriptorError("vector and normalizer are not aligned")
    out = np.empty(len(vec.members), dtype=np.float64)
    for i, (v, sample) in enumerate(zip(vec.values, norm.samples)):
        if sample[0] == sample[-1]:
            out[i] = 0.5
        else:
            out[i] = np.interp(v, sample, np.linspace(0.0, 1.0, sample.size))
    return out

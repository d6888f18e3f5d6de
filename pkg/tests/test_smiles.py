"""Parser, writer, and canonicalization checks.

Graph identity is verified against networkx VF2 isomorphism as an
independent oracle; canonical-form stability is checked across seeded
enumerations.
"""
import random

import networkx as nx
import pytest

from chemlm.chem import (
    SmilesParseError,
    ValenceError,
    canonical_smiles,
    enumerate_smiles,
    parse_smiles,
    random_smiles,
    same_molecule,
    write_smiles,
)
from molgen import generate

HAND_SET = [
    "C",
    "CCO",
    "c1ccccc1",
    "Cc1ccc(C)cc1",
    "CC(=O)Oc1ccccc1C(=O)O",  # aspirin
    "CN1C=NC2=C1C(=O)N(C)C(=O)N2C",  # caffeine, uppercase ring form
    "C1CC2CCC1C2",
    "C%12CCCCC%12",
    "[13CH4]",
    "[O-]C(=O)C",
    "[NH4+]",
    "N[C@@H](C)C(=O)O",
    "F/C=C/F",
    "CCO.OCC",
    "c1cc[nH]c1",
    "O=S(=O)(O)O",
    "C[Si](C)(C)C",
]


def as_graph(mol):
    g = nx.Graph()
    for i, atom in enumerate(mol.atoms):
        g.add_node(
            i,
            element=atom.element,
            charge=atom.formal_charge,
            aromatic=atom.aromatic,
            hs=mol.total_hydrogens(i),
        )
    for bond in mol.bonds:
        g.add_edge(bond.a, bond.b, order=bond.order)
    return g


def isomorphic(m1, m2):
    return nx.is_isomorphic(
        as_graph(m1),
        as_graph(m2),
        node_match=lambda a, b: all(a[k] == b[k] for k in ("element", "charge", "aromatic", "hs")),
        edge_match=lambda a, b: a["order"] == b["order"],
    )


@pytest.mark.parametrize("smiles", HAND_SET)
def test_round_trip_is_isomorphic(smiles):
    mol = parse_smiles(smiles)
    again = parse_smiles(write_smiles(mol))
    assert isomorphic(mol, again)


@pytest.mark.parametrize("smiles", HAND_SET)
def test_canonical_round_trip_fixed_point(smiles):
    can = canonical_smiles(parse_smiles(smiles))
    assert canonical_smiles(parse_smiles(can)) == can


def test_round_trip_generated_corpus():
    for smiles in generate(120, seed=17):
        mol = parse_smiles(smiles)
        assert isomorphic(mol, parse_smiles(write_smiles(mol)))


def test_canonical_invariant_under_enumeration():
    rng = random.Random(5)
    for smiles in generate(40, seed=23) + HAND_SET:
        mol = parse_smiles(smiles)
        want = canonical_smiles(mol)
        for _ in range(8):
            variant = random_smiles(mol, rng)
            assert canonical_smiles(parse_smiles(variant)) == want, (smiles, variant)


def test_enumerate_smiles_all_parse_back():
    mol = parse_smiles("CC(C)c1ccccc1O")
    forms = enumerate_smiles(mol, 12, random.Random(0))
    assert len(forms) == 12
    want = canonical_smiles(mol)
    assert all(canonical_smiles(parse_smiles(f)) == want for f in forms)


def test_same_molecule():
    assert same_molecule(parse_smiles("OCC"), parse_smiles("CCO"))
    assert same_molecule(parse_smiles("c1ccccc1"), parse_smiles("c1ccccc1"))
    assert not same_molecule(parse_smiles("CCO"), parse_smiles("CCN"))
    assert not same_molecule(parse_smiles("CCO"), parse_smiles("CCCO"))


def test_percent_ring_closure_matches_digit_form():
    a = canonical_smiles(parse_smiles("C%10CCCCC%10"))
    b = canonical_smiles(parse_smiles("C1CCCCC1"))
    assert a == b


def test_hydrogen_counts():
    mol = parse_smiles("CCO")
    assert [mol.total_hydrogens(i) for i in range(3)] == [3, 2, 1]
    benzene = parse_smiles("c1ccccc1")
    assert [benzene.total_hydrogens(i) for i in range(6)] == [1] * 6
    pyrrole = parse_smiles("c1cc[nH]c1")
    n_idx = next(i for i, a in enumerate(pyrrole.atoms) if a.element == "N")
    assert pyrrole.total_hydrogens(n_idx) == 1
    assert pyrrole.atoms[n_idx].bracketed


def test_charge_and_isotope_survive_round_trip():
    mol = parse_smiles("[O-]C(=O)C[13CH3]")
    out = parse_smiles(write_smiles(mol))
    assert sorted(a.formal_charge for a in out.atoms) == [-1, 0, 0, 0, 0]
    assert sorted(a.isotope for a in out.atoms if a.isotope) == [13]


def test_stereo_kept_by_writer_dropped_by_canonical():
    mol = parse_smiles("N[C@@H](C)C(=O)O")
    assert "@@" in write_smiles(mol)
    assert "@" not in canonical_smiles(mol)
    ene = parse_smiles("F/C=C/F")
    assert "/" in write_smiles(ene)
    assert "/" not in canonical_smiles(ene)


def test_dot_separated_fragments():
    mol = parse_smiles("[Na+].[Cl-]")
    assert len(mol.fragments()) == 2
    assert canonical_smiles(mol) == canonical_smiles(parse_smiles("[Cl-].[Na+]"))


def test_aromatic_flags_as_written():
    aromatic = parse_smiles("c1ccccc1")
    assert all(a.aromatic for a in aromatic.atoms)
    kekule = parse_smiles("C1=CC=CC=C1")
    assert not any(a.aromatic for a in kekule.atoms)


@pytest.mark.parametrize(
    "bad",
    [
        "",
        "C1CC",          # unclosed ring bond
        "C(C",           # unclosed branch
        "CC)C",          # stray branch close
        "[Zz]",          # unknown element
        "C=#C",          # conflicting bond symbols
        "C%1CC%1",       # % needs two digits
        "[C",            # unterminated bracket
        "1CC1",          # ring digit before any atom
    ],
)
def test_parse_errors(bad):
    with pytest.raises(SmilesParseError):
        parse_smiles(bad)


def test_valence_error():
    with pytest.raises(ValenceError):
        parse_smiles("C(C)(C)(C)(C)C")
    with pytest.raises(ValenceError):
        parse_smiles("O=C=O=C")


def test_errors_are_value_errors():
    assert issubclass(SmilesParseError, ValueError)
    assert issubclass(ValenceError, ValueError)

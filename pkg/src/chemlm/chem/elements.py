"""Element tables used by the SMILES machinery and the descriptor registry.

The supported set covers the organic subset plus the elements that show up
in drug-like molecules and their common counterions. Anything else is
rejected at parse time.
"""

from __future__ import annotations

# Elements that may be written without brackets.
ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})

# Elements that may carry the lowercase aromatic flag. Se and As are only
# legal inside brackets.
AROMATIC_ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S", "Se", "As"})
AROMATIC_ORGANIC = frozenset({"B", "C", "N", "O", "P", "S"})

# Allowed valences for implicit-hydrogen computation (neutral, unbracketed
# atoms only). Multi-valent elements use the smallest valence that covers
# the bond order sum.
DEFAULT_VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

# symbol -> (atomic number, standard atomic weight, monoisotopic mass,
#            outer-shell electron count)
_ELEMENT_ROWS: dict[str, tuple[int, float, float, int]] = {
    "H": (1, 1.008, 1.00782503207, 1),
    "Li": (3, 6.94, 7.01600455, 1),
    "Be": (4, 9.0121831, 9.0121822, 2),
    "B": (5, 10.81, 11.0093054, 3),
    "C": (6, 12.011, 12.0, 4),
    "N": (7, 14.007, 14.0030740048, 5),
    "O": (8, 15.999, 15.9949146196, 6),
    "F": (9, 18.998403163, 18.99840322, 7),
    "Na": (11, 22.98976928, 22.9897692809, 1),
    "Mg": (12, 24.305, 23.9850417, 2),
    "Al": (13, 26.9815385, 26.98153863, 3),
    "Si": (14, 28.085, 27.9769265325, 4),
    "P": (15, 30.973761998, 30.97376163, 5),
    "S": (16, 32.06, 31.972071, 6),
    "Cl": (17, 35.45, 34.96885268, 7),
    "K": (19, 39.0983, 38.96370668, 1),
    "Ca": (20, 40.078, 39.96259098, 2),
    "Cr": (24, 51.9961, 51.9405075, 6),
    "Mn": (25, 54.938044, 54.9380451, 7),
    "Fe": (26, 55.845, 55.9349375, 8),
    "Co": (27, 58.933194, 58.933195, 9),
    "Ni": (28, 58.6934, 57.9353429, 10),
    "Cu": (29, 63.546, 62.9295975, 11),
    "Zn": (30, 65.38, 63.9291422, 12),
    "Ga": (31, 69.723, 68.9255736, 3),
    "Ge": (32, 72.63, 73.9211778, 4),
    "As": (33, 74.921595, 74.9215965, 5),
    "Se": (34, 78.971, 79.9165213, 6),
    "Br": (35, 79.904, 78.9183371, 7),
    "Rb": (37, 85.4678, 84.911789738, 1),
    "Sr": (38, 87.62, 87.9056121, 2),
    "Ag": (47, 107.8682, 106.905097, 11),
    "Cd": (48, 112.414, 113.9033585, 12),
    "Sn": (50, 118.71, 119.9021947, 4),
    "Sb": (51, 121.76, 120.9038157, 5),
    "Te": (52, 127.6, 129.9062244, 6),
    "I": (53, 126.90447, 126.904473, 7),
    "Cs": (55, 132.90545196, 132.905451933, 1),
    "Ba": (56, 137.327, 137.9052472, 2),
    "Pt": (78, 195.084, 194.9647911, 10),
    "Au": (79, 196.966569, 196.9665687, 11),
    "Hg": (80, 200.592, 201.970643, 12),
    "Pb": (82, 207.2, 207.9766521, 4),
    "Bi": (83, 208.9804, 208.9803987, 5),
}

SUPPORTED_ELEMENTS = frozenset(_ELEMENT_ROWS)

ATOMIC_NUMBER = {sym: row[0] for sym, row in _ELEMENT_ROWS.items()}
ATOMIC_WEIGHT = {sym: row[1] for sym, row in _ELEMENT_ROWS.items()}
MONOISOTOPIC_MASS = {sym: row[2] for sym, row in _ELEMENT_ROWS.items()}
OUTER_ELECTRONS = {sym: row[3] for sym, row in _ELEMENT_ROWS.items()}

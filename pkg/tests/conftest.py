import pytest

# Fifty small molecules built for fast memorization, used by the overfit
# acceptance gate. Design rules, enforced programmatically when the list
# was generated:
#   - each structural family (twin-heteroatom chain, gem pattern, ring,
#     plain chain, ...) appears at a single size, or at sizes spaced by a
#     large ratio, so no fine within-family size discrimination is needed;
#   - across all enumerated spellings of all molecules, any two token
#     strings of equal length differ in >= 2 positions, so one masked or
#     corrupted token never maps one molecule's view onto another's;
#   - no molecule has two of its own spellings at Hamming distance 1
#     (masked-token labels stay unambiguous);
#   - spellings are few (153 total) and short (mean 5.8 tokens).
CORPUS50 = [
    "C", "CC", "C1CC1", "C1CCCC1", "C1CCCCCCC1",
    "BrCBr", "ClCCl", "FCF", "ICI", "NCN",
    "OCO", "SCS", "CC(C)C", "ClC(Cl)Cl", "FC(F)F",
    "NC(N)N", "OC(O)O", "SC(S)S", "CC(C)(C)C", "ClC(Cl)(Cl)Cl",
    "FC(F)(F)F", "NC(N)(N)N", "OC(O)(O)O", "SC(S)(S)S", "BrCCBr",
    "CCCC", "ClCCCl", "FCCF", "ICCI", "NCCN",
    "OCCO", "SCCS", "C1CNCCN1", "C1COCCO1", "C1CSCCS1",
    "CCNCC", "BrCCCCBr", "CNCCNC", "COCCOC", "CSCCSC",
    "ClCCCCCl", "FCCCCF", "ICCCCI", "NCCCCN", "OCCCCO",
    "SCCCCS", "CC(C)C(C)C", "CCCCCCC", "NCCOCCN", "OCCNCCO",
]


@pytest.fixture(scope="session")
def corpus50():
    return list(CORPUS50)


@pytest.fixture(scope="session")
def vocab():
    from chemlm.tokenizer import Vocabulary

    return Vocabulary()


@pytest.fixture(scope="session")
def descriptor_set():
    from chemlm.descriptors import named_set

    return named_set("ALL_IMPLEMENTED")

"""chemlm: a small multi-task molecular language model toolkit.

Pure-numpy transformer pretraining over SMILES with auxiliary
physicochemical targets, plus ranking/virtual-screening and QSAR
evaluation utilities.
"""

__version__ = "0.1.0"

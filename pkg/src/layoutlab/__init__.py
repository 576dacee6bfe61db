"""UI layout graphs, relation matrices, contrastive graph encoding and
relation-constrained layout synthesis."""

__version__ = "0.1.0"

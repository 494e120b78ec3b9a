"""Contrastive document representation learning in Wasserstein space for rubric scoring."""

__version__ = "0.1.0"

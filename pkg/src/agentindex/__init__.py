"""Agent registry simulator: hierarchical resolver caches, a peer-to-peer index and boundary-aware resolution."""

__version__ = "0.1.0"

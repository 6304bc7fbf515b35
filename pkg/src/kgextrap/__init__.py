"""Meta-learned knowledge extrapolation for knowledge graphs."""
from .kernels import BACKEND
from .kg import KnowledgeGraph, SeenMask, Vocab, build_seen_mask, load_graph

__version__ = "0.1.0"
__all__ = ["BACKEND", "KnowledgeGraph", "SeenMask", "Vocab", "build_seen_mask", "load_graph", "__version__"]

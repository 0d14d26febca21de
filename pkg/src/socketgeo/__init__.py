"""socketgeo: indoor geolocation evidence from electrical sockets.

Three-stage pipeline: detect sockets in room imagery, classify them into 12
region-standardized plug types (plus NOISE), and map the types to candidate
countries through a versioned knowledge base.
"""

from .kb import ClfClass, DetClass, KnowledgeBase, PlugType, default_kb, load_kb

__version__ = "0.1.0"

__all__ = [
    "ClfClass",
    "DetClass",
    "KnowledgeBase",
    "PlugType",
    "default_kb",
    "load_kb",
    "__version__",
]

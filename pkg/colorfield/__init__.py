"""colorfield: the colored purity potential of multipartite entanglement
as a classical statistical-mechanics system."""
__all__ = ["main"]
__version__ = "0.1.0"

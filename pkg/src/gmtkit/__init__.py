"""gmtkit: multiscale geometric measure theory toolkit."""
__version__ = "0.1.0"

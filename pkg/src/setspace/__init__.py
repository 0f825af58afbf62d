"""setspace: space bounds for m-obstruction-free k-set agreement, simulated and checked."""

__version__ = "1.0.0"

"""Peak age-of-information analysis, simulation and scheduling for D2D networks."""

__version__ = "0.1.0"

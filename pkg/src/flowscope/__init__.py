"""Order-flow exclusivity and builder-market analytics over PBS block data."""

__version__ = "0.1.0"

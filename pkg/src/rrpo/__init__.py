"""Tabular robust constrained RL: duality-gap counterexample and RRPO."""

__version__ = "0.1.0"

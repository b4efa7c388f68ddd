"""Monte Carlo probes of convergence rates in the weak invariance principle for expanding maps and their suspension flows."""

__version__ = "0.1.0"

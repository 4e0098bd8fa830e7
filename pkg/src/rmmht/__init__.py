"""Randomized multiple-model multiple hypothesis tracking (RMM-MHT).

LP-relaxed N-scan data association, a random-coefficient-matrices Kalman
filter for the resulting stacked system, IMM/IMM-MHT baselines, a clutter
scenario simulator and OSPA-based Monte Carlo evaluation.
"""

__version__ = "0.1.0"


class InvalidArgument(ValueError):
    """Raised when an input violates an operation's precondition."""

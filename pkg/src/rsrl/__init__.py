"""Risk-sensitive reinforcement learning with shortfall valuations."""

__version__ = "0.1.0"

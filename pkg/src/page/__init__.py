"""Position-aware graph model for conversational causal emotion entailment."""

__version__ = "0.1.0"

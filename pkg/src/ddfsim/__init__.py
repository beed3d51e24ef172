"""Link-level Monte Carlo simulator for dynamic decode-and-forward relaying."""

__version__ = "0.1.0"

"""Portfolio construction and backtesting over LLM-voted stock universes."""

__version__ = "0.1.0"

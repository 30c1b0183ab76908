"""shallowfish: a depth-limited chess engine with a learned static evaluation."""

__version__ = "0.1.0"

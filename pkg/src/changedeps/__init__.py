"""Mining, studying and predicting cross-change dependencies in code review."""

__version__ = "0.1.0"

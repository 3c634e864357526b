"""Subject-level speech sound disorder screening from multi-word child speech."""

__version__ = "0.1.0"

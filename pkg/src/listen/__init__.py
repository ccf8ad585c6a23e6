"""LLM-guided selection of a preferred item from a large multi-attribute candidate set."""

__version__ = "0.1.0"

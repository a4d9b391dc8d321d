"""llmsink: discover, classify, and temporarily sinkhole LLM chat domains."""

__version__ = "0.1.0"

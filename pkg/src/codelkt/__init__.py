"""CodeLKT: text-encoder knowledge tracing for programming exercises."""

__version__ = "0.1.0"

"""Socket/stdio server exposing a stub token predictor and sentiment
scorer over a length-prefixed JSON protocol."""

__version__ = "0.1.0"

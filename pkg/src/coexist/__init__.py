"""Fixed point index certificates for two-component operators on conical shells."""

__version__ = "0.1.0"

"""Root tracking for rate-distortion problems via implicit derivatives of the BA operator."""

__version__ = "0.1.0"

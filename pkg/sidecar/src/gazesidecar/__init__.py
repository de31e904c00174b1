"""gazesidecar: model-backed exports for the streetgaze pipeline."""

__version__ = "0.1.0"

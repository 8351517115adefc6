"""Shared exception types mapped to CLI exit codes."""


class ParameterError(ValueError):
    """An argument or spec field is outside its allowed range."""


class ValidationError(ValueError):
    """Input data violates a structural contract (manifest, split, metrics)."""


class GenerationError(RuntimeError):
    """Synthetic data generation could not satisfy its constraints."""


class TrainingError(RuntimeError):
    """Embedder optimization failed (non-finite loss or leaked data)."""

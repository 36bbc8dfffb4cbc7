"""Weight-penalized robust classification: tensors, weight geometry, attacks, harness."""

__version__ = "0.1.0"

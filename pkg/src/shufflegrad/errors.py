"""Shared exception types."""
from __future__ import annotations


class ConfigError(ValueError):
    """Invalid experiment or schedule configuration."""


class DivergenceError(RuntimeError):
    """Iterates left the finite range; carries position and partial results."""

    def __init__(self, epoch: int, inner_index: int | None = None, partial=None):
        self.epoch = epoch
        self.inner_index = inner_index
        self.partial = partial
        where = f"epoch {epoch}"
        if inner_index is not None:
            where += f", inner step {inner_index}"
        super().__init__(f"non-finite iterate at {where}")

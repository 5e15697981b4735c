"""Ingestion of precomputed clip embeddings (VGGish / PANNs) from AUCAP-EMB files."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .. import embfile
from ..errors import EmbeddingFormatError

# Per-variant feature width: log-Mel frames, per-second VGGish rows,
# single whole-clip PANNs vector.
VARIANT_DIMS = {"logmel": 64, "vggish": 128, "panns": 2048}


@dataclass(frozen=True)
class ClipEmbedding:
    values: np.ndarray  # (rows, dim): rows > 1 only for per-second sources

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def rows(self) -> int:
        return self.values.shape[0]


def load_embedding_file(path: str | os.PathLike, expected_dim: int) -> ClipEmbedding:
    """Load one clip's embedding matrix, enforcing the declared dimension."""
    values = embfile.read_matrix(path, expected_dim=expected_dim)
    if values.shape[0] == 0:
        raise EmbeddingFormatError(f"{path}: embedding file holds no rows")
    return ClipEmbedding(values=values)


def load_variant_features(path: str | os.PathLike, variant: str) -> np.ndarray:
    """Load a feature matrix for a clip under the rules of ``variant``.

    panns files must hold exactly one 2048-vector; vggish and logmel files
    hold one row per second / frame.
    """
    if variant not in VARIANT_DIMS:
        raise ValueError(f"unknown variant {variant!r}, want one of {sorted(VARIANT_DIMS)}")
    emb = load_embedding_file(path, VARIANT_DIMS[variant])
    if variant == "panns" and emb.rows != 1:
        raise EmbeddingFormatError(f"{path}: panns files hold exactly one row, got {emb.rows}")
    return emb.values

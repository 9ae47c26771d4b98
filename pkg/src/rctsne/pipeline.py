"""End-to-end embedding: validate, build affinities, optimize."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

from .affinity import AffinityDiagnostics, build_affinities_with_diagnostics
from .core import EmbedConfig, Embedding, SparseAffinity, validate_inputs
from .knn import NeighborSets
from .optimizer import run_embedding


@dataclass(frozen=True)
class EmbedResult:
    embedding: Embedding
    affinity: SparseAffinity
    diagnostics: AffinityDiagnostics
    seconds: float


def embed(data, labels, cfg: EmbedConfig, neighbors: Optional[NeighborSets] = None) -> EmbedResult:
    start = time.perf_counter()
    bundle = validate_inputs(data, labels, cfg)
    aff, diag = build_affinities_with_diagnostics(bundle.data, bundle.labels, cfg, neighbors)
    emb = run_embedding(aff, bundle.labels, cfg)
    return EmbedResult(emb, aff, diag, time.perf_counter() - start)

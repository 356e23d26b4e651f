"""
TQx: análisis cuantitativo de histopatología basado en texto.

A partir de embeddings precalculados de imágenes y keywords, recupera un pool
refinado de palabras de interés, genera embeddings de texto ponderados por
softmax y los evalúa con clustering y clasificación.
"""

__version__ = "1.0.0"

from .errors import TqxError, ValidationError  # noqa: E402
from .tensor_core import EmbeddingMatrix, SimilarityMatrix, cosine_similarity, l2_normalize, softmax  # noqa: E402
from .woi import Keyword, WoiPool, build_pool, filter_by_semantic_type, pool_stats  # noqa: E402
from .retrieval import (  # noqa: E402
    RankMatrix,
    RefinedSelection,
    TextEmbeddingSet,
    aggregate_ranks,
    quantify,
    rank_keywords,
    select_top_m,
    text_based_embeddings,
)

__all__ = [
    "EmbeddingMatrix",
    "Keyword",
    "RankMatrix",
    "RefinedSelection",
    "SimilarityMatrix",
    "TextEmbeddingSet",
    "TqxError",
    "ValidationError",
    "WoiPool",
    "aggregate_ranks",
    "build_pool",
    "cosine_similarity",
    "filter_by_semantic_type",
    "l2_normalize",
    "pool_stats",
    "quantify",
    "rank_keywords",
    "select_top_m",
    "softmax",
    "text_based_embeddings",
]

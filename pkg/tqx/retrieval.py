"""
Núcleo TQx: ranking de keywords por imagen, agregación de rankings en el corpus,
refinamiento top-M, pesos softmax y embedding de texto por suma ponderada.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, PoolEmbeddingMismatchError, ValidationError
from .tensor_core import EmbeddingMatrix, SimilarityMatrix, cosine_similarity, l2_normalize, softmax

logger = logging.getLogger(__name__)

DEFAULT_M = 1000


@dataclass(frozen=True)
class RankMatrix:
    """ranks[i][j] en 1..N_w; N_w es la keyword más similar a la imagen i"""

    ranks: np.ndarray

    def __post_init__(self):
        ranks = np.asarray(self.ranks, dtype=np.int64)
        if ranks.ndim != 2:
            raise ValidationError("La matriz de rangos debe ser bidimensional")
        ranks.setflags(write=False)
        object.__setattr__(self, "ranks", ranks)

    @property
    def n_images(self):
        return self.ranks.shape[0]

    @property
    def n_keywords(self):
        return self.ranks.shape[1]


@dataclass(frozen=True)
class RefinedSelection:
    selected: tuple
    mean_ranks: np.ndarray
    m: int

    @property
    def size(self):
        return len(self.selected)

    def to_dict(self, pool=None):
        entries = []
        for index in self.selected:
            entry = {"index": int(index), "mean_rank": float(self.mean_ranks[index])}
            if pool is not None:
                keyword = pool.keywords[index]
                entry["cui"] = keyword.cui
                entry["text"] = keyword.text
            entries.append(entry)
        return {"m": self.size, "selected": entries}


@dataclass(frozen=True)
class TextEmbeddingSet:
    """Embeddings de texto f^T (N×D) y pesos α (N×M) de cada imagen"""

    ids: tuple
    embeddings: np.ndarray
    weights: np.ndarray
    selection: RefinedSelection
    ranks: RankMatrix = field(default=None, repr=False)

    def as_embedding_matrix(self):
        return EmbeddingMatrix(ids=self.ids, values=self.embeddings)

    def weights_matrix(self):
        return EmbeddingMatrix(ids=self.ids, values=self.weights)


def rank_keywords(s):
    """
    Rango por imagen: la similitud más alta recibe N_w; los empates se ordenan
    por posición de la keyword (la primera recibe el rango menor).

    Acepta una ``SimilarityMatrix`` o cualquier matriz de puntajes N×N_w.
    """
    scores = s.scores if isinstance(s, SimilarityMatrix) else np.asarray(s, dtype=np.float64)
    if scores.ndim != 2:
        raise ValidationError("Los puntajes deben formar una matriz bidimensional")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("Los puntajes contienen valores no finitos")
    order = np.argsort(scores, axis=1, kind="stable")
    ranks = np.empty_like(order)
    positions = np.broadcast_to(np.arange(1, scores.shape[1] + 1), order.shape)
    np.put_along_axis(ranks, order, positions, axis=1)
    return RankMatrix(ranks=ranks)


def aggregate_ranks(r, rows=None):
    """Rango medio de cada keyword sobre las imágenes (o sobre ``rows``)"""
    ranks = r.ranks if rows is None else r.ranks[np.asarray(rows, dtype=np.int64)]
    if ranks.shape[0] == 0:
        raise ValidationError("No hay imágenes para agregar rangos")
    return ranks.astype(np.float64).mean(axis=0)


def select_top_m(mean_ranks, m=DEFAULT_M):
    """Las min(m, N_w) keywords de mayor rango medio; empates por posición ascendente"""
    if m < 1:
        raise ValidationError("M debe ser al menos 1")
    mean_ranks = np.asarray(mean_ranks, dtype=np.float64)
    positions = np.arange(mean_ranks.size)
    order = np.lexsort((positions, -mean_ranks))
    selected = tuple(int(j) for j in order[: min(m, mean_ranks.size)])
    mean_ranks = mean_ranks.copy()
    mean_ranks.setflags(write=False)
    return RefinedSelection(selected=selected, mean_ranks=mean_ranks, m=int(m))


def text_based_embeddings(s, sel, keywords, temperature=1.0, renormalize=False):
    """
    Pesos = softmax de las similitudes crudas con las keywords seleccionadas;
    embedding = suma ponderada de sus embeddings de texto.
    """
    if keywords.n_rows != s.n_keywords:
        raise DimensionMismatchError(
            f"La similitud tiene {s.n_keywords} keywords y la matriz {keywords.n_rows}"
        )
    selected = np.asarray(sel.selected, dtype=np.int64)
    if selected.size == 0 or selected.min() < 0 or selected.max() >= s.n_keywords:
        raise ValidationError("Índices de selección fuera del pool")
    unit = keywords if keywords.normalized else l2_normalize(keywords)
    weights = softmax(s.scores[:, selected], temperature)
    basis = unit.values[selected].astype(np.float64)
    embeddings = weights @ basis
    if renormalize:
        embeddings = embeddings / np.linalg.norm(embeddings, axis=1, keepdims=True)
    ids = s.image_ids or tuple(f"row-{i}" for i in range(s.n_images))
    return TextEmbeddingSet(ids=ids, embeddings=embeddings, weights=weights, selection=sel)


def quantify(images, pool, keyword_embeddings, m=DEFAULT_M, temperature=1.0,
             selection_ids=None, renormalize=False):
    """
    Corrida completa: similitud → rangos → rango medio → top-M → embeddings de texto.

    ``selection_ids`` restringe el cálculo del rango medio a un subconjunto de imágenes
    (por defecto todo el corpus).
    """
    if len(pool) != keyword_embeddings.n_rows:
        raise PoolEmbeddingMismatchError(
            f"El pool tiene {len(pool)} keywords y hay {keyword_embeddings.n_rows} embeddings"
        )
    s = cosine_similarity(images, keyword_embeddings)
    r = rank_keywords(s)
    rows = None
    if selection_ids is not None:
        lookup = images.index_of()
        missing = [i for i in selection_ids if i not in lookup]
        if missing:
            raise ValidationError(f"Ids de selección inexistentes: {', '.join(missing[:10])}")
        rows = [lookup[i] for i in selection_ids]
    sel = select_top_m(aggregate_ranks(r, rows), m)
    logger.info("%s: %d keywords seleccionadas de %d", pool.level_name, sel.size, len(pool))
    text_set = text_based_embeddings(s, sel, keyword_embeddings, temperature, renormalize)
    return TextEmbeddingSet(
        ids=text_set.ids,
        embeddings=text_set.embeddings,
        weights=text_set.weights,
        selection=sel,
        ranks=r,
    )


def image_attribution(text_set, pool, row, top=5):
    """Keywords con mayor peso para la imagen ``row``: [(Keyword, peso), ...]"""
    weights = text_set.weights[row]
    order = np.lexsort((np.arange(weights.size), -weights))[:top]
    return [(pool.keywords[text_set.selection.selected[j]], float(weights[j])) for j in order]

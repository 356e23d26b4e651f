"""
Contenedor de matrices densas y numérica elemental: normalización L2,
similitud coseno y softmax.

Almacenamiento en float32, reducciones en float64.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError, ValidationError, ZeroRowError

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-12
UNIT_TOLERANCE = 1e-5


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Una fila por imagen o keyword, con su lista de identificadores"""

    ids: tuple
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32, order="C")
        if values.ndim != 2:
            raise ValidationError("La matriz de embeddings debe ser bidimensional")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != values.shape[0]:
            raise ValidationError(
                f"Se esperaban {values.shape[0]} ids y llegaron {len(ids)}"
            )
        if len(set(ids)) != len(ids):
            raise ValidationError("Los ids de la matriz no pueden repetirse")
        if values.shape[1] < 1:
            raise ValidationError("La dimensión debe ser positiva")
        if not np.all(np.isfinite(values)):
            bad = int(np.argwhere(~np.isfinite(values))[0, 0])
            raise ValidationError(f"La fila {bad} contiene valores no finitos")
        if self.normalized:
            norms = np.linalg.norm(values.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
                raise ValidationError("La matriz está marcada como normalizada pero no lo está")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def index_of(self):
        return {identifier: row for row, identifier in enumerate(self.ids)}

    def take(self, rows):
        """Submatriz con las filas indicadas, en ese orden"""
        rows = np.asarray(rows, dtype=np.int64)
        return EmbeddingMatrix(
            ids=[self.ids[r] for r in rows],
            values=self.values[rows],
            normalized=self.normalized,
        )

    def select_ids(self, ids):
        lookup = self.index_of()
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise ValidationError(f"Ids ausentes en la matriz: {', '.join(missing[:10])}")
        return self.take([lookup[i] for i in ids])

    def to_dict(self):
        return {"n_rows": self.n_rows, "dim": self.dim, "normalized": self.normalized}


@dataclass(frozen=True)
class SimilarityMatrix:
    """Similitudes coseno imagen × keyword"""

    scores: np.ndarray
    image_ids: tuple = field(default=())
    keyword_ids: tuple = field(default=())

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64, order="C")
        if scores.ndim != 2:
            raise ValidationError("La matriz de similitud debe ser bidimensional")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("La matriz de similitud contiene valores no finitos")
        if scores.size and (scores.min() < -1.0 or scores.max() > 1.0):
            raise ValidationError("Las similitudes coseno deben estar en [-1, 1]")
        object.__setattr__(self, "scores", _frozen(scores))
        object.__setattr__(self, "image_ids", tuple(self.image_ids))
        object.__setattr__(self, "keyword_ids", tuple(self.keyword_ids))

    @property
    def n_images(self):
        return self.scores.shape[0]

    @property
    def n_keywords(self):
        return self.scores.shape[1]


def l2_normalize(m):
    """Divide cada fila por su norma euclidiana"""
    values = m.values.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", values, values))
    zero = np.flatnonzero(norms < ZERO_NORM)
    if zero.size:
        raise ZeroRowError(int(zero[0]))
    return EmbeddingMatrix(ids=m.ids, values=values / norms[:, None], normalized=True)


def _unit_rows(m):
    return m if m.normalized else l2_normalize(m)


def cosine_similarity(images, keywords):
    """
    scores[i][j] = <imagen i, keyword j> sobre filas unitarias, recortado a [-1, 1].

    Si alguna matriz no está marcada como normalizada se normaliza aquí.
    """
    if images.dim != keywords.dim:
        raise DimensionMismatchError(
            f"Dimensión de imágenes ({images.dim}) distinta de la de keywords ({keywords.dim})"
        )
    a = _unit_rows(images).values.astype(np.float64)
    b = _unit_rows(keywords).values.astype(np.float64)
    scores = np.clip(a @ b.T, -1.0, 1.0)
    logger.debug("Similitud calculada: %d imágenes × %d keywords", *scores.shape)
    return SimilarityMatrix(scores=scores, image_ids=images.ids, keyword_ids=keywords.ids)


def softmax(scores, temperature=1.0):
    """
    Softmax estable sobre el último eje; acepta un vector o una matriz (fila a fila).
    """
    x = np.asarray(scores, dtype=np.float64)
    if x.size == 0 or x.shape[-1] == 0:
        raise EmptyInputError("softmax requiere al menos un valor")
    if not temperature > 0:
        raise ValidationError("La temperatura debe ser mayor a 0")
    if not np.all(np.isfinite(x)):
        raise ValidationError("softmax requiere valores finitos")
    z = x / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)

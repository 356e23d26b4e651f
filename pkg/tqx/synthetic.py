"""
Fixture sintético de escritorio: clusters de imágenes alrededor de direcciones
"ancla", keywords que incluyen las anclas más distractores ortogonales.

Con ruido de norma menor a margin/2, la keyword más similar a cada imagen es
siempre su propia ancla.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import InfeasibleMarginError, ValidationError
from .formats import write_tqxe
from .tensor_core import EmbeddingMatrix
from .woi import build_pool, save_pool

logger = logging.getLogger(__name__)

ANCHOR_TYPES = ("Neoplastic Process", "Disease or Syndrome")
DISTRACTOR_TYPES = ("Pathologic Function", "Disease or Syndrome", "Tissue")


@dataclass(frozen=True)
class SyntheticDataset:
    images: EmbeddingMatrix
    keywords: EmbeddingMatrix
    pool: object
    labels: tuple
    anchors: tuple

    @property
    def class_order(self):
        return tuple(sorted(set(self.labels)))


def _orthonormal(rng, dim, count):
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q.T[:count]


def generate_synthetic(n_clusters=3, images_per_cluster=50, n_keywords=12, dim=32,
                       margin=0.5, seed=0, noise=None):
    """
    Genera (imágenes, keywords, pool, etiquetas).

    Las anclas son ortonormales (coseno 0 < 1 - margin) y los distractores viven
    en el complemento ortogonal de las anclas.
    """
    if n_clusters < 1 or images_per_cluster < 1:
        raise ValidationError("Se requiere al menos un cluster con una imagen")
    if n_keywords < n_clusters:
        raise InfeasibleMarginError(
            f"Se necesitan al menos {n_clusters} keywords para {n_clusters} clusters"
        )
    if not 0 < margin < 1:
        raise InfeasibleMarginError("El margen debe estar en (0, 1) para anclas ortogonales")
    if dim <= n_clusters and n_keywords > n_clusters:
        raise InfeasibleMarginError(
            f"dim={dim} no deja espacio ortogonal para distractores con {n_clusters} anclas"
        )
    if dim < n_clusters:
        raise InfeasibleMarginError(f"dim={dim} no admite {n_clusters} anclas ortogonales")
    noise = margin / 4 if noise is None else noise
    if not 0 <= noise < margin / 2:
        raise InfeasibleMarginError("El ruido debe ser menor a margin/2")

    rng = np.random.default_rng(seed)
    basis = _orthonormal(rng, dim, dim)
    anchors = basis[:n_clusters]
    complement = basis[n_clusters:]
    n_distractors = n_keywords - n_clusters
    if n_distractors:
        mix = rng.standard_normal((n_distractors, complement.shape[0]))
        distractors = mix @ complement
        distractors /= np.linalg.norm(distractors, axis=1, keepdims=True)
        keyword_values = np.vstack([anchors, distractors])
    else:
        keyword_values = anchors

    rows, labels = [], []
    for c in range(n_clusters):
        for _ in range(images_per_cluster):
            direction = rng.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            magnitude = rng.uniform(0.0, noise)
            vector = anchors[c] + magnitude * direction
            rows.append(vector / np.linalg.norm(vector))
            labels.append(f"class-{c}")

    width = max(4, len(str(n_keywords)))
    cuis = [f"C{j + 1:0{width + 3}d}" for j in range(n_keywords)]
    records = []
    for j, cui in enumerate(cuis):
        if j < n_clusters:
            records.append({"cui": cui, "text": f"anchor term {j}", "semantic_types": list(ANCHOR_TYPES)})
        else:
            kind = DISTRACTOR_TYPES[(j - n_clusters) % len(DISTRACTOR_TYPES)]
            records.append({"cui": cui, "text": f"distractor term {j}", "semantic_types": [kind]})
    pool = build_pool(records)

    images = EmbeddingMatrix(
        ids=[f"img-{i:05d}" for i in range(len(rows))],
        values=np.array(rows),
    )
    keywords = EmbeddingMatrix(ids=cuis, values=keyword_values)
    logger.info(
        "Fixture sintético: %d imágenes, %d keywords, dim %d", images.n_rows, keywords.n_rows, dim
    )
    return SyntheticDataset(
        images=images,
        keywords=keywords,
        pool=pool,
        labels=tuple(labels),
        anchors=tuple(cuis[:n_clusters]),
    )


def write_synthetic(dataset, out_dir, run_output=None):
    """Escribe el fixture y un config.yaml listo para ``tqx run``"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tqxe(out_dir / "images.tqxe", dataset.images)
    write_tqxe(out_dir / "keywords.tqxe", dataset.keywords)
    save_pool(dataset.pool, out_dir / "pool.jsonl")
    pd.DataFrame({"id": list(dataset.images.ids), "label": list(dataset.labels)}).to_csv(
        out_dir / "labels.csv", index=False
    )
    config = {
        "paths": {
            "images": str(out_dir / "images.tqxe"),
            "keywords": str(out_dir / "keywords.tqxe"),
            "pool": str(out_dir / "pool.jsonl"),
            "labels": str(out_dir / "labels.csv"),
        },
        "dataset": {
            "name": "synthetic",
            "class_order": list(dataset.class_order),
            "cancer_classes": list(dataset.class_order[1:]),
        },
        "output_dir": str(run_output or out_dir / "run"),
    }
    with open(out_dir / "config.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(config, f, sort_keys=False)
    return out_dir / "config.yaml"

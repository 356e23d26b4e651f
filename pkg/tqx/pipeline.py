"""
Orquestación de una corrida completa:
quantify → lloyd → silueta → composición → keywords → clasificación multi-semilla.

Todas las entradas se validan antes de escribir nada; la corrida se escribe en
un directorio temporal hermano que se renombra al terminar.
"""

import logging
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .classifier import load_split, multi_seed_run, stratified_split
from .clustering import build_cluster_report, lloyd, relabel_to_ground_truth
from .config import MANIFEST_VERSION, load_id_list, load_labels, validate_paths
from .errors import ConfigError, StageError, TqxError, ValidationError
from .formats import file_sha256, load_embeddings
from .reports import EmbeddingRun, RunArtifacts, emit_reports
from .retrieval import quantify
from .woi import align_keyword_embeddings, build_level_pools, load_pool

logger = logging.getLogger(__name__)


@dataclass
class RunInputs:
    images: object
    keywords: object
    pool: object
    level_pools: dict
    level_keywords: dict
    labels: list = None
    class_order: tuple = ()
    split: object = None
    selection_ids: list = None
    k: int = None


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as e:
        logger.error("Falló la etapa %s: %s", name, e)
        raise StageError(name, e) from e


def _keywords_for_pool(pool, keywords):
    if set(pool.cuis) <= set(keywords.ids):
        return align_keyword_embeddings(pool, keywords)
    if len(pool) == keywords.n_rows:
        # ids no son CUIs: se asume el mismo orden que el pool
        return keywords
    return align_keyword_embeddings(pool, keywords)


def _level_pools(config, pool):
    if not config.levels:
        return {pool.level_name: pool}
    return build_level_pools(pool, config.levels)


def load_inputs(config, require_pool=True, require_k=True):
    """Carga y valida todas las entradas sin escribir nada"""
    required = ("images", "keywords", "pool") if require_pool else ("images",)
    validate_paths(config, required)
    paths = config.paths
    images = load_embeddings(paths.images)
    keywords = pool = None
    level_pools, level_keywords = {}, {}
    if require_pool:
        keywords = load_embeddings(paths.keywords)
        pool = load_pool(paths.pool)
        level_pools = _level_pools(config, pool)
        level_keywords = {name: _keywords_for_pool(p, keywords) for name, p in level_pools.items()}
        if keywords.dim != images.dim:
            raise ValidationError(
                f"Dimensión de imágenes ({images.dim}) distinta de la de keywords ({keywords.dim})"
            )

    labels = None
    class_order = tuple(config.dataset.class_order)
    split = None
    if paths.labels:
        table = load_labels(paths.labels, class_order)
        labels = table.for_ids(images.ids)
        if not class_order:
            class_order = tuple(table.classes())
        if paths.split:
            split = load_split(paths.split, images.ids)
        else:
            split = stratified_split(labels, config.dataset.test_fraction, config.dataset.split_seed)
    missing_cancer = sorted(set(config.dataset.cancer_classes) - set(class_order))
    if class_order and missing_cancer:
        raise ConfigError(f"Clases de cáncer fuera del orden de clases: {', '.join(missing_cancer)}")

    selection_ids = None
    if paths.selection_ids:
        selection_ids = load_id_list(paths.selection_ids)
    elif config.retrieval.selection_scope == "train":
        if split is None:
            raise ConfigError("selection_scope=train requiere etiquetas o un archivo de partición")
        selection_ids = [images.ids[i] for i in split.train]
    elif config.retrieval.selection_scope != "all":
        raise ConfigError("retrieval.selection_scope debe ser 'all' o 'train'")

    k = config.clustering.k if config.clustering.k is not None else (len(class_order) or None)
    if k is None and require_k:
        raise ConfigError("No se puede deducir k: configure clustering.k o las etiquetas")
    if k is not None and k > images.n_rows:
        raise ConfigError(f"k={k} supera la cantidad de imágenes ({images.n_rows})")
    return RunInputs(
        images=images,
        keywords=keywords,
        pool=pool,
        level_pools=level_pools,
        level_keywords=level_keywords,
        labels=labels,
        class_order=class_order,
        split=split,
        selection_ids=selection_ids,
        k=k,
    )


def quantify_levels(config, inputs):
    rows = []
    for name, pool in inputs.level_pools.items():
        text_set = _stage(
            f"quantify[{name}]",
            quantify,
            inputs.images,
            pool,
            inputs.level_keywords[name],
            m=config.retrieval.m,
            temperature=config.retrieval.temperature,
            selection_ids=inputs.selection_ids,
            renormalize=config.retrieval.renormalize,
        )
        rows.append(EmbeddingRun(
            name=f"Text - {name}", kind="text", ids=text_set.ids, text_set=text_set, pool=pool,
        ))
    return rows


def cluster_row(config, inputs, row, matrix):
    cfg = config.clustering
    result = _stage(f"cluster[{row.name}]", lloyd, matrix, inputs.k, seed=config.seed,
                    max_iter=cfg.max_iter, tol=cfg.tol, n_restarts=cfg.n_restarts)
    report = _stage(
        f"silhouette[{row.name}]",
        build_cluster_report,
        matrix,
        result,
        labels=inputs.labels,
        class_order=inputs.class_order or None,
        ranks=row.text_set.ranks if row.text_set is not None else None,
        pool=row.pool,
        top_k=cfg.top_keywords,
        metric=cfg.silhouette_metric,
    )
    row.clustering = result
    row.cluster_report = report
    row.labels = tuple(inputs.labels) if inputs.labels is not None else None
    if report.match is not None:
        row.ground_truth = relabel_to_ground_truth(result.assignments, report.match, report.class_order)
    return row


def classify_row(config, inputs, row, matrix):
    row.classification = _stage(
        f"classify[{row.name}]",
        multi_seed_run,
        matrix,
        inputs.labels,
        inputs.split,
        config.classifier,
        inputs.class_order,
        config.dataset.cancer_classes,
        n_seeds=config.n_seeds,
        workers=config.workers,
        progress=config.progress,
    )
    return row


def build_manifest(config, inputs):
    resolved = config.resolve()
    resolved["output_dir"] = None
    resolved.pop("progress", None)
    resolved["clustering"]["k"] = inputs.k
    resolved["dataset"]["class_order"] = list(inputs.class_order)
    files = {}
    for name in ("images", "keywords", "pool", "labels", "split", "selection_ids"):
        value = getattr(config.paths, name)
        if value:
            files[name] = {"path": str(value), "sha256": file_sha256(value)}
    return {
        "manifest_version": MANIFEST_VERSION,
        "tqx_version": __version__,
        "config": resolved,
        "inputs": files,
        "seeds": {
            "clustering": config.seed,
            "split": config.dataset.split_seed,
            "classifier": list(range(config.n_seeds)) if inputs.labels is not None and config.classify else [],
        },
    }


def execute(config, inputs):
    rows = []
    if config.evaluate_visual:
        rows.append(EmbeddingRun(name="Visual", kind="visual", ids=inputs.images.ids))
    rows.extend(quantify_levels(config, inputs))
    classify = config.classify and inputs.labels is not None and config.n_seeds > 0
    for row in rows:
        matrix = inputs.images if row.kind == "visual" else row.text_set.as_embedding_matrix()
        cluster_row(config, inputs, row, matrix)
        if classify:
            classify_row(config, inputs, row, matrix)
    return RunArtifacts(
        dataset_name=config.dataset.name,
        rows=rows,
        metrics=tuple(config.dataset.metrics),
        manifest=build_manifest(config, inputs),
    )


def write_atomically(output_dir, writer):
    """Escribe en un directorio temporal hermano y lo renombra al final"""
    output_dir = Path(output_dir)
    output_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{output_dir.name}-", dir=output_dir.parent))
    try:
        writer(staging)
        if output_dir.exists():
            shutil.rmtree(output_dir)
        os.replace(staging, output_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return output_dir


def run_pipeline(config, output_dir=None):
    """Ejecuta la corrida completa y devuelve el directorio con los reportes"""
    output_dir = output_dir or config.output_dir
    if not output_dir:
        raise ConfigError("Se requiere un directorio de salida")
    output_dir = Path(output_dir)
    try:
        inputs = load_inputs(config)
    except TqxError:
        raise
    except (OSError, ValueError) as e:
        raise ValidationError(str(e)) from e
    logger.info("Entradas validadas: %d imágenes, k=%d", inputs.images.n_rows, inputs.k)
    artifacts = execute(config, inputs)
    write_atomically(output_dir, lambda staging: _stage("reports", emit_reports, staging, artifacts))
    return output_dir

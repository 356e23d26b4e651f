"""
Interfaz de línea de comandos de TQx.

Subcomandos: pool, quantify, cluster, classify, run, synth, fetch.
Códigos de salida: 0 éxito, 2 error de validación, 1 error de ejecución.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config, parse_override, provider_token
from .errors import ConfigError, StageError
from .formats import save_embeddings
from .pipeline import (
    cluster_row,
    classify_row,
    load_inputs,
    quantify_levels,
    run_pipeline,
    write_atomically,
)
from .provider import fetch_remote_embeddings
from .reports import EmbeddingRun, ReportService, RunArtifacts, emit_reports
from .synthetic import generate_synthetic, write_synthetic
from .woi import build_level_pools, build_pool, filter_by_semantic_type, load_records, pool_stats, save_pool

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _add_common(parser):
    parser.add_argument("--config", help="Archivo YAML de configuración (o manifest.json)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="CLAVE=VALOR",
                        help="Sobrescribe una clave, p. ej. retrieval.m=50")
    parser.add_argument("--verbose", action="store_true", help="Logging detallado")


def build_parser():
    parser = argparse.ArgumentParser(prog="tqx", description="Análisis cuantitativo de histopatología basado en texto")
    parser.add_argument("--version", action="version", version=f"tqx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pool", help="Construye y filtra pools de palabras de interés")
    _add_common(p)
    p.add_argument("--records", required=True, help="JSON-lines con {text, cui, semantic_types}")
    p.add_argument("--output", required=True, help="Archivo de salida (o directorio con --all-levels)")
    p.add_argument("--types", action="append", default=[], help="Tipo semántico a conservar")
    p.add_argument("--level-name", default=None)
    p.add_argument("--all-levels", action="store_true", help="Escribe Level-0..3 en el directorio de salida")

    p = sub.add_parser("quantify", help="Genera los embeddings de texto")
    _add_common(p)
    p.add_argument("--images")
    p.add_argument("--keywords")
    p.add_argument("--pool")
    p.add_argument("--m", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--output", required=True)

    p = sub.add_parser("cluster", help="K-Means + silueta sobre una matriz de embeddings")
    _add_common(p)
    p.add_argument("--embeddings")
    p.add_argument("--labels")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True)

    p = sub.add_parser("classify", help="MLP multi-semilla sobre una matriz de embeddings")
    _add_common(p)
    p.add_argument("--embeddings")
    p.add_argument("--labels")
    p.add_argument("--split")
    p.add_argument("--n-seeds", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--output", required=True)

    p = sub.add_parser("run", help="Corrida completa")
    _add_common(p)
    p.add_argument("--output")
    p.add_argument("--progress", action="store_true", help="Barra de progreso por semilla")

    p = sub.add_parser("synth", help="Genera un fixture sintético")
    _add_common(p)
    p.add_argument("--output", required=True)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--images-per-cluster", type=int, default=50)
    p.add_argument("--keywords", type=int, default=12)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fetch", help="Obtiene embeddings del proveedor remoto")
    _add_common(p)
    p.add_argument("--endpoint")
    p.add_argument("--items", required=True, help="JSON-lines con {id, text} o {id, image}")
    p.add_argument("--output", required=True, help="Archivo .tqxe o .csv")
    p.add_argument("--cache-dir")
    return parser


def _config(args, flags):
    overrides = [parse_override(text) for text in args.overrides]
    for key, value in flags.items():
        if value is not None:
            overrides.append((key.split("."), value))
    return load_config(args.config, overrides)


def cmd_pool(args):
    records = load_records(args.records)
    pool = build_pool(records)
    if args.all_levels:
        pools = build_level_pools(pool)
        out = Path(args.output)
        for name, level in pools.items():
            save_pool(level, out / f"{name.lower()}.jsonl")
            print(f"✅ {name}: {len(level)} keywords")
        return EXIT_OK
    if args.types:
        pool = filter_by_semantic_type(pool, args.types, args.level_name or "filtered")
    save_pool(pool, args.output)
    stats = pool_stats(pool)
    print(f"✅ Pool {pool.level_name}: {stats.count} keywords, {stats.distinct_types} tipos semánticos")
    return EXIT_OK


def cmd_quantify(args):
    config = _config(args, {
        "paths.images": args.images,
        "paths.keywords": args.keywords,
        "paths.pool": args.pool,
        "retrieval.m": args.m,
        "retrieval.temperature": args.temperature,
    })
    inputs = load_inputs(config, require_k=False)
    rows = quantify_levels(config, inputs)

    def writer(staging):
        service = ReportService(staging)
        for row in rows:
            service.write_retrieval(row)

    write_atomically(args.output, writer)
    for row in rows:
        print(f"✅ {row.name}: {row.text_set.selection.size} keywords seleccionadas")
    return EXIT_OK


def _single_matrix_artifacts(config, inputs, classify):
    row = EmbeddingRun(name="Embeddings", kind="visual", ids=inputs.images.ids)
    if classify:
        classify_row(config, inputs, row, inputs.images)
    else:
        cluster_row(config, inputs, row, inputs.images)
    return RunArtifacts(dataset_name=config.dataset.name, rows=[row], metrics=tuple(config.dataset.metrics))


def cmd_cluster(args):
    config = _config(args, {
        "paths.images": args.embeddings,
        "paths.labels": args.labels,
        "clustering.k": args.k,
        "seed": args.seed,
    })
    inputs = load_inputs(config, require_pool=False)
    artifacts = _single_matrix_artifacts(config, inputs, classify=False)
    write_atomically(args.output, lambda staging: emit_reports(staging, artifacts))
    print(f"✅ Silueta media: {artifacts.rows[0].cluster_report.silhouette_mean:.4f}")
    return EXIT_OK


def cmd_classify(args):
    config = _config(args, {
        "paths.images": args.embeddings,
        "paths.labels": args.labels,
        "paths.split": args.split,
        "n_seeds": args.n_seeds,
        "classifier.epochs": args.epochs,
    })
    inputs = load_inputs(config, require_pool=False, require_k=False)
    if inputs.labels is None:
        raise ConfigError("classify requiere paths.labels")
    artifacts = _single_matrix_artifacts(config, inputs, classify=True)
    write_atomically(args.output, lambda staging: emit_reports(staging, artifacts))
    mean = artifacts.rows[0].classification.mean
    print(f"✅ Acc media: {mean['acc']:.2f}% en {config.n_seeds} semillas")
    return EXIT_OK


def cmd_run(args):
    config = _config(args, {"progress": True if args.progress else None})
    output = args.output or config.output_dir
    if not output:
        raise ConfigError("Indique el directorio de salida con --output")
    print("🚀 Iniciando corrida TQx...")
    run_dir = run_pipeline(config, output)
    print(f"✅ Reportes en {run_dir}")
    return EXIT_OK


def cmd_synth(args):
    dataset = generate_synthetic(
        n_clusters=args.clusters,
        images_per_cluster=args.images_per_cluster,
        n_keywords=args.keywords,
        dim=args.dim,
        margin=args.margin,
        seed=args.seed,
    )
    config_path = write_synthetic(dataset, args.output)
    print(f"✅ Fixture sintético en {args.output}")
    print(f"   tqx run --config {config_path}")
    return EXIT_OK


def cmd_fetch(args):
    config = _config(args, {"provider.endpoint": args.endpoint, "provider.cache_dir": args.cache_dir})
    provider = config.provider
    items = load_records(args.items)
    matrix = fetch_remote_embeddings(
        provider.endpoint,
        items,
        cache_dir=provider.cache_dir,
        token=provider_token(),
        max_workers=provider.max_workers,
        batch_size=provider.batch_size,
        retries=provider.retries,
        backoff=provider.backoff,
        timeout=provider.timeout,
    )
    save_embeddings(args.output, matrix)
    print(f"✅ {matrix.n_rows} embeddings de dimensión {matrix.dim} en {args.output}")
    return EXIT_OK


COMMANDS = {
    "pool": cmd_pool,
    "quantify": cmd_quantify,
    "cluster": cmd_cluster,
    "classify": cmd_classify,
    "run": cmd_run,
    "synth": cmd_synth,
    "fetch": cmd_fetch,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except StageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(e.cause, ValueError) else EXIT_RUNTIME
    except ValueError as e:
        print(f"❌ Error de validación: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:
        logger.exception("Error inesperado")
        print(f"❌ Error interno: {e}", file=sys.stderr)
        return EXIT_RUNTIME


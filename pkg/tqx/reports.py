"""
Emisión de reportes: JSON con precisión completa, CSV por muestra y tablas
markdown (siluetas por embedding y clasificación mean±std).

Redondeo half-even sobre la representación decimal del número, sólo al
renderizar.
"""

import json
import logging
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np
import pandas as pd

from .formats import write_tqxe

logger = logging.getLogger(__name__)

METRIC_LABELS = {
    "acc": ("Acc (%)", 1),
    "acc_c": ("Acc_c (%)", 1),
    "macro_f1": ("F1", 3),
    "kappa_quadratic": ("K_w", 3),
    "precision": ("Pre", 3),
    "recall": ("Rec", 3),
}
SILHOUETTE_DECIMALS = 2


@dataclass
class EmbeddingRun:
    """Resultados de una fila de las tablas (embedding visual o de texto de un nivel)"""

    name: str
    kind: str
    ids: tuple
    clustering: object = None
    cluster_report: object = None
    classification: object = None
    text_set: object = None
    pool: object = None
    labels: tuple = None
    ground_truth: np.ndarray = None

    @property
    def slug(self):
        return re.sub(r"[^a-z0-9]+", "-", self.name.lower()).strip("-")


@dataclass
class RunArtifacts:
    dataset_name: str
    rows: list = field(default_factory=list)
    metrics: tuple = ()
    manifest: dict = None


def format_fixed(value, decimals):
    if value is None:
        return "n/a"
    quantum = Decimal(1).scaleb(-decimals)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_EVEN))


def format_mean_std(mean, std, decimals):
    if mean is None:
        return "n/a"
    return f"{format_fixed(mean, decimals)}±{format_fixed(std, decimals)}"


def _dump_json(path, data):
    path.write_text(
        json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return path


def _markdown_table(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines)


class ReportService:
    """Servicio que escribe los artefactos de una corrida en un directorio"""

    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)

    def _row_dir(self, row):
        path = self.run_dir / row.slug
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_retrieval(self, row):
        path = self._row_dir(row)
        _dump_json(path / "selection.json", row.text_set.selection.to_dict(row.pool))
        write_tqxe(path / "text_embeddings.tqxe", row.text_set.as_embedding_matrix())
        write_tqxe(path / "weights.tqxe", row.text_set.weights_matrix())

    def write_clustering(self, row):
        path = self._row_dir(row)
        data = {"clustering": row.clustering.to_dict(), **row.cluster_report.to_dict()}
        _dump_json(path / "cluster_report.json", data)
        columns = {
            "id": list(row.ids),
            "assignment": row.clustering.assignments.tolist(),
            "silhouette": row.cluster_report.silhouette_per_sample,
        }
        if row.labels is not None:
            columns["label"] = list(row.labels)
        if row.ground_truth is not None:
            columns["ground_truth_cluster"] = row.ground_truth.tolist()
        pd.DataFrame(columns).to_csv(
            path / "cluster_samples.csv", index=False, float_format="%.17g", lineterminator="\n"
        )

    def write_classification(self, row, metrics):
        path = self._row_dir(row)
        aggregate = row.classification
        _dump_json(path / "classification.json", aggregate.to_dict())
        header = ["Seed"] + [METRIC_LABELS[m][0] for m in metrics]
        body = [
            [str(seed)] + [format_fixed(getattr(result, m), METRIC_LABELS[m][1]) for m in metrics]
            for seed, result in aggregate.per_seed
        ]
        body.append(
            ["mean±std"]
            + [format_mean_std(aggregate.mean[m], aggregate.std[m], METRIC_LABELS[m][1]) for m in metrics]
        )
        text = f"# Clasificación - {row.name}\n\n" + _markdown_table(header, body) + "\n"
        (path / "classification.md").write_text(text, encoding="utf-8")

    def silhouette_table(self, artifacts):
        header = ["Embedding", artifacts.dataset_name]
        rows = [
            [row.name, format_fixed(row.cluster_report.silhouette_mean, SILHOUETTE_DECIMALS)]
            for row in artifacts.rows
            if row.cluster_report is not None
        ]
        return _markdown_table(header, rows)

    def classification_table(self, artifacts):
        rows = [row for row in artifacts.rows if row.classification is not None]
        if not rows:
            return None
        metrics = list(artifacts.metrics)
        best = {}
        for m in metrics:
            values = [row.classification.mean[m] for row in rows if row.classification.mean[m] is not None]
            best[m] = max(values) if values else None
        header = ["Embedding"] + [METRIC_LABELS[m][0] for m in metrics]
        body = []
        for row in rows:
            cells = [row.name]
            for m in metrics:
                mean = row.classification.mean[m]
                cell = format_mean_std(mean, row.classification.std[m], METRIC_LABELS[m][1])
                if mean is not None and mean == best[m]:
                    cell = f"**{cell}**"
                cells.append(cell)
            body.append(cells)
        return _markdown_table(header, body)

    def write_summary(self, artifacts):
        parts = [f"# TQx - {artifacts.dataset_name}", "", "## Coeficientes de silueta", "",
                 self.silhouette_table(artifacts), ""]
        table = self.classification_table(artifacts)
        if table is not None:
            parts += ["## Clasificación", "", table, ""]
        for row in artifacts.rows:
            if row.cluster_report is None or not row.cluster_report.top_keywords:
                continue
            parts += [f"## Keywords por cluster - {row.name}", ""]
            report = row.cluster_report
            for cluster, pairs in sorted(report.top_keywords.items()):
                composition = ", ".join(
                    f"{y} {format_fixed(v, 1)}%"
                    for y, v in zip(report.class_order, report.composition[cluster])
                )
                terms = "; ".join(kw.text for kw, _ in pairs)
                parts.append(f"- Cluster {cluster + 1} ({composition}): {terms}")
            parts.append("")
        (self.run_dir / "summary.md").write_text("\n".join(parts), encoding="utf-8")

    def write_manifest(self, manifest):
        _dump_json(self.run_dir / "manifest.json", manifest)


def emit_reports(run_dir, artifacts):
    """Escribe todos los reportes de la corrida; devuelve la lista de archivos"""
    service = ReportService(run_dir)
    service.run_dir.mkdir(parents=True, exist_ok=True)
    for row in artifacts.rows:
        if row.text_set is not None:
            service.write_retrieval(row)
        if row.clustering is not None:
            service.write_clustering(row)
        if row.classification is not None:
            service.write_classification(row, artifacts.metrics)
    service.write_summary(artifacts)
    if artifacts.manifest is not None:
        service.write_manifest(artifacts.manifest)
    files = sorted(p.relative_to(service.run_dir).as_posix() for p in service.run_dir.rglob("*") if p.is_file())
    logger.info("Reportes escritos en %s (%d archivos)", service.run_dir, len(files))
    return files

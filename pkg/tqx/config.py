"""
Configuración de corridas TQx.

Un archivo YAML anidado se mapea a dataclasses; un archivo vacío reproduce
el protocolo completo (m=1000, max_iter=300, lr=0.01, 300 épocas, 50 semillas,
5 keywords por cluster, k = número de clases).
"""

import logging
import os
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import pandas as pd
import yaml

from .classifier import DEFAULT_N_SEEDS, TrainConfig
from .clustering import DEFAULT_MAX_ITER, DEFAULT_TOL, DEFAULT_TOP_KEYWORDS
from .errors import ConfigError, ValidationError
from .retrieval import DEFAULT_M
from .woi import LEVEL_PRESETS

logger = logging.getLogger(__name__)

TOKEN_ENV = "TQX_PROVIDER_TOKEN"
MANIFEST_VERSION = 1

DATASET_PRESETS = {
    "colon": {
        "class_order": ["BN", "WD", "MD", "PD"],
        "cancer_classes": ["WD", "MD", "PD"],
        "metrics": ["acc", "acc_c", "macro_f1", "kappa_quadratic"],
    },
    "wsss4luad": {
        "class_order": ["NOR", "TUM"],
        "cancer_classes": ["TUM"],
        "metrics": ["acc", "precision", "macro_f1", "recall"],
    },
    "bach": {
        "class_order": ["NOR", "BN", "SITU", "IVS"],
        "cancer_classes": ["SITU", "IVS"],
        "metrics": ["acc", "acc_c", "macro_f1", "kappa_quadratic"],
    },
    "bladder": {
        "class_order": ["NOR", "LOW", "HIGH"],
        "cancer_classes": ["LOW", "HIGH"],
        "metrics": ["acc", "acc_c", "macro_f1", "kappa_quadratic"],
    },
}

DEFAULT_METRICS = ["acc", "acc_c", "macro_f1", "kappa_quadratic"]
# `levels: standard` expande a la jerarquía Level-0..3
STANDARD_LEVELS = "standard"


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_int(where, value, minimum):
    if not _is_int(value) or value < minimum:
        raise ConfigError(f"'{where}' debe ser un entero >= {minimum} (recibido {value!r})")


def _check_positive(where, value, allow_zero=False):
    if not _is_number(value) or value < 0 or (value == 0 and not allow_zero):
        limit = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"'{where}' debe ser un número {limit} (recibido {value!r})")


def _check_bool(where, value):
    if not isinstance(value, bool):
        raise ConfigError(f"'{where}' debe ser booleano")


@dataclass(frozen=True)
class PathsConfig:
    images: str = None
    keywords: str = None
    pool: str = None
    labels: str = None
    split: str = None
    selection_ids: str = None


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "dataset"
    preset: str = None
    class_order: tuple = ()
    cancer_classes: tuple = ()
    metrics: tuple = ()
    test_fraction: float = 0.2
    split_seed: int = 0

    def __post_init__(self):
        if not _is_number(self.test_fraction) or not 0 < self.test_fraction < 1:
            raise ConfigError(f"'dataset.test_fraction' debe estar en (0, 1) (recibido {self.test_fraction!r})")
        _check_int("dataset.split_seed", self.split_seed, 0)


@dataclass(frozen=True)
class RetrievalConfig:
    m: int = DEFAULT_M
    temperature: float = 1.0
    renormalize: bool = False
    # "all": rango medio sobre todo el corpus; "train": sólo sobre la partición de entrenamiento
    selection_scope: str = "all"

    def __post_init__(self):
        _check_int("retrieval.m", self.m, 1)
        _check_positive("retrieval.temperature", self.temperature)
        _check_bool("retrieval.renormalize", self.renormalize)
        if self.selection_scope not in ("all", "train"):
            raise ConfigError("retrieval.selection_scope debe ser 'all' o 'train'")


@dataclass(frozen=True)
class ClusteringConfig:
    k: int = None
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    n_restarts: int = 1
    top_keywords: int = DEFAULT_TOP_KEYWORDS
    silhouette_metric: str = "euclidean"

    def __post_init__(self):
        if self.k is not None:
            _check_int("clustering.k", self.k, 1)
        _check_int("clustering.max_iter", self.max_iter, 1)
        _check_positive("clustering.tol", self.tol, allow_zero=True)
        _check_int("clustering.n_restarts", self.n_restarts, 1)
        _check_int("clustering.top_keywords", self.top_keywords, 1)
        if self.silhouette_metric not in ("euclidean", "cosine"):
            raise ConfigError("clustering.silhouette_metric debe ser 'euclidean' o 'cosine'")


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = None
    cache_dir: str = ".tqx_cache"
    max_workers: int = 4
    batch_size: int = 64
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0

    def __post_init__(self):
        _check_int("provider.max_workers", self.max_workers, 1)
        _check_int("provider.batch_size", self.batch_size, 1)
        _check_int("provider.retries", self.retries, 0)
        _check_positive("provider.backoff", self.backoff, allow_zero=True)
        _check_positive("provider.timeout", self.timeout)


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    classifier: TrainConfig = field(default_factory=TrainConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    n_seeds: int = DEFAULT_N_SEEDS
    workers: int = 1
    levels: dict = field(default_factory=dict)
    evaluate_visual: bool = True
    classify: bool = True
    progress: bool = False
    output_dir: str = "runs/tqx"
    seed: int = 0

    def __post_init__(self):
        _check_int("n_seeds", self.n_seeds, 1)
        _check_int("workers", self.workers, 1)
        _check_int("seed", self.seed, 0)
        for name in ("evaluate_visual", "classify", "progress"):
            _check_bool(name, getattr(self, name))
        if self.output_dir is not None and not isinstance(self.output_dir, (str, os.PathLike)):
            raise ConfigError("'output_dir' debe ser una ruta")

    @property
    def k(self):
        """k efectivo: el configurado o la cantidad de clases"""
        if self.clustering.k is not None:
            return self.clustering.k
        return len(self.dataset.class_order) or None

    def resolve(self):
        """Diccionario con todos los valores efectivos (se guarda en el manifiesto)"""
        data = _to_plain(self)
        data["clustering"]["k"] = self.k
        return data


def _to_plain(value):
    if is_dataclass(value):
        return {f.name: _to_plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, dict):
        return {str(k): _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, frozenset, set)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_to_plain(v) for v in items]
    return value


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' debe ser un mapa de claves")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"Claves desconocidas en '{where}': {', '.join(unknown)}")
    values = {}
    for name, value in data.items():
        default = known[name].default
        if isinstance(value, list):
            value = tuple(value)
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"'{where}.{name}' debe ser booleano")
        values[name] = value
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"Configuración inválida en '{where}': {e}") from e


def config_from_dict(data):
    data = dict(data or {})
    if "manifest_version" in data:
        data = dict(data["config"])
    sections = {
        "paths": PathsConfig,
        "dataset": DatasetConfig,
        "retrieval": RetrievalConfig,
        "clustering": ClusteringConfig,
        "classifier": TrainConfig,
        "provider": ProviderConfig,
    }
    kwargs = {}
    for name, cls in sections.items():
        kwargs[name] = _build(cls, data.pop(name, None), name)
    levels = data.pop("levels", None) or {}
    if levels == STANDARD_LEVELS:
        levels = {name: sorted(types) for name, types in LEVEL_PRESETS.items()}
    if not isinstance(levels, dict):
        raise ConfigError(
            f"'levels' debe mapear nombre de nivel → lista de tipos semánticos, o ser '{STANDARD_LEVELS}'"
        )
    kwargs["levels"] = {str(k): tuple(v or ()) for k, v in levels.items()}
    known = {f.name for f in fields(RunConfig)} - set(sections) - {"levels"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Claves desconocidas: {', '.join(unknown)}")
    kwargs.update(data)
    try:
        config = RunConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"Configuración inválida: {e}") from e
    return apply_preset(config)


def apply_preset(config):
    """Completa clases, clases de cáncer y métricas desde ``dataset.preset``"""
    dataset = config.dataset
    if dataset.preset:
        preset = DATASET_PRESETS.get(dataset.preset.lower())
        if preset is None:
            raise ConfigError(
                f"Preset desconocido '{dataset.preset}'; opciones: {', '.join(DATASET_PRESETS)}"
            )
        dataset = replace(
            dataset,
            name=dataset.name if dataset.name != "dataset" else dataset.preset,
            class_order=dataset.class_order or tuple(preset["class_order"]),
            cancer_classes=dataset.cancer_classes or tuple(preset["cancer_classes"]),
            metrics=dataset.metrics or tuple(preset["metrics"]),
        )
    if not dataset.metrics:
        dataset = replace(dataset, metrics=tuple(DEFAULT_METRICS))
    return replace(config, dataset=dataset)


def parse_override(text):
    """``seccion.clave=valor`` → (ruta, valor YAML)"""
    if "=" not in text:
        raise ConfigError(f"Sobrescritura inválida '{text}'; use clave=valor")
    key, raw = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_overrides(data, overrides):
    data = dict(data or {})
    for path, value in overrides:
        node = data
        for part in path[:-1]:
            child = node.get(part)
            child = dict(child) if isinstance(child, dict) else {}
            node[part] = child
            node = child
        node[path[-1]] = value
    return data


def load_config_data(path):
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"No existe el archivo de configuración: {path}")
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f)
    return data or {}


def load_config(path=None, overrides=()):
    data = load_config_data(path)
    if "manifest_version" in data:
        data = dict(data["config"])
    return config_from_dict(apply_overrides(data, overrides))


def provider_token():
    return os.environ.get(TOKEN_ENV)


def validate_paths(config, required=("images", "keywords", "pool")):
    """Verifica que existan las rutas requeridas y las opcionales configuradas"""
    paths = config.paths
    for name in required:
        value = getattr(paths, name)
        if not value:
            raise ConfigError(f"Falta la ruta 'paths.{name}'")
    for name in ("images", "keywords", "pool", "labels", "split", "selection_ids"):
        value = getattr(paths, name)
        if value and not Path(value).exists():
            raise ConfigError(f"No existe el archivo '{name}': {value}")


@dataclass(frozen=True)
class LabelTable:
    """id de imagen → etiqueta de clase"""

    labels: dict

    def for_ids(self, ids):
        missing = [i for i in ids if i not in self.labels]
        if missing:
            raise ValidationError(f"Imágenes sin etiqueta: {', '.join(missing[:10])}")
        return [self.labels[i] for i in ids]

    def classes(self):
        return sorted(set(self.labels.values()))


def load_labels(path, class_order=()):
    """CSV ``id,label``; cada id una sola vez y etiquetas dentro de ``class_order``"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"No existe el archivo de etiquetas: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns[:2]) != ["id", "label"]:
        raise ValidationError(f"{path}: se esperaban las columnas id,label")
    duplicated = frame["id"][frame["id"].duplicated()].tolist()
    if duplicated:
        raise ValidationError(f"{path}: ids repetidos: {', '.join(duplicated[:10])}")
    labels = dict(zip(frame["id"], frame["label"]))
    if class_order:
        unknown = sorted(set(labels.values()) - set(class_order))
        if unknown:
            raise ValidationError(
                f"{path}: etiquetas fuera del orden de clases configurado: {', '.join(unknown)}"
            )
    return LabelTable(labels=labels)


def load_id_list(path):
    with open(path, encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


def config_to_yaml(config):
    return yaml.safe_dump(config.resolve(), sort_keys=True, allow_unicode=True)


__all__ = [
    "ClusteringConfig",
    "DATASET_PRESETS",
    "DatasetConfig",
    "LabelTable",
    "PathsConfig",
    "ProviderConfig",
    "RetrievalConfig",
    "RunConfig",
    "TrainConfig",
    "apply_overrides",
    "config_from_dict",
    "load_config",
    "load_labels",
    "parse_override",
    "validate_paths",
]

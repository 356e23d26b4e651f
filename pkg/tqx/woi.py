"""
Pools de palabras de interés (WoI): construcción, deduplicación por CUI y
filtrado por tipo semántico UMLS.
"""

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyResultError, MalformedRecordError, PoolEmbeddingMismatchError, ValidationError

logger = logging.getLogger(__name__)

CUI_PATTERN = re.compile(r"^C\d+$")

# Jerarquía de pools: Level-0 es el pool crudo, cada nivel siguiente es más específico
LEVEL_PRESETS = {
    "Level-0": frozenset(),
    "Level-1": frozenset({"Pathologic Function"}),
    "Level-2": frozenset({"Disease or Syndrome"}),
    "Level-3": frozenset({"Neoplastic Process"}),
}


@dataclass(frozen=True)
class Keyword:
    """Término de patología con su CUI y tipos semánticos"""

    cui: str
    text: str
    semantic_types: frozenset

    def __post_init__(self):
        if not isinstance(self.cui, str) or not CUI_PATTERN.match(self.cui):
            raise ValidationError(f"CUI inválido: {self.cui!r}")
        text = self.text.strip() if isinstance(self.text, str) else ""
        if not text:
            raise ValidationError("El texto de la keyword es obligatorio")
        types = frozenset(self.semantic_types)
        if not types:
            raise ValidationError(f"La keyword {self.cui} no tiene tipos semánticos")
        object.__setattr__(self, "text", text)
        object.__setattr__(self, "semantic_types", types)

    def to_dict(self):
        return {
            "text": self.text,
            "cui": self.cui,
            "semantic_types": sorted(self.semantic_types),
        }


@dataclass(frozen=True)
class WoiPool:
    level_name: str
    keywords: tuple
    filter_types: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        keywords = tuple(self.keywords)
        cuis = [k.cui for k in keywords]
        if len(set(cuis)) != len(cuis):
            raise ValidationError("Un pool no puede repetir CUIs")
        keys = [_cui_key(cui) for cui in cuis]
        if keys != sorted(keys):
            raise ValidationError("Las keywords del pool deben estar ordenadas por CUI ascendente")
        filter_types = frozenset(self.filter_types)
        if filter_types:
            for k in keywords:
                if not k.semantic_types & filter_types:
                    raise ValidationError(f"{k.cui} no pertenece a los tipos del pool")
        object.__setattr__(self, "keywords", keywords)
        object.__setattr__(self, "filter_types", filter_types)

    def __len__(self):
        return len(self.keywords)

    @property
    def cuis(self):
        return [k.cui for k in self.keywords]

    def records(self):
        return [k.to_dict() for k in self.keywords]

    def header(self):
        return {"level_name": self.level_name, "filter_types": sorted(self.filter_types)}


@dataclass(frozen=True)
class PoolStats:
    count: int
    distinct_types: int
    histogram: dict

    def to_dict(self):
        return {
            "count": self.count,
            "distinct_types": self.distinct_types,
            "histogram": dict(self.histogram),
        }


def _parse_record(index, record):
    if not isinstance(record, dict):
        raise MalformedRecordError(index, "el registro debe ser un objeto")
    cui = record.get("cui")
    if not isinstance(cui, str) or not CUI_PATTERN.match(cui):
        raise MalformedRecordError(index, f"CUI inválido {cui!r}")
    text = record.get("text")
    if not isinstance(text, str) or not text.strip():
        raise MalformedRecordError(index, "texto vacío")
    types = record.get("semantic_types") or []
    if isinstance(types, str) or not all(isinstance(t, str) and t for t in types) or not types:
        raise MalformedRecordError(index, "semantic_types debe ser una lista no vacía de nombres")
    return cui, text.strip(), set(types)


def build_pool(records):
    """
    Construye el pool Level-0: colapsa duplicados por CUI (se conserva el primer
    texto y se unen los tipos) y ordena por CUI ascendente.
    """
    records = list(records)
    if not records:
        raise ValidationError("Se requiere al menos un registro para construir el pool")
    texts = {}
    types = {}
    for index, record in enumerate(records):
        cui, text, semantic_types = _parse_record(index, record)
        if cui in texts:
            types[cui] |= semantic_types
        else:
            texts[cui] = text
            types[cui] = semantic_types
    keywords = [Keyword(cui, texts[cui], frozenset(types[cui])) for cui in sorted(texts, key=_cui_key)]
    logger.info("Pool Level-0: %d registros -> %d keywords", len(records), len(keywords))
    return WoiPool(level_name="Level-0", keywords=keywords)


def _cui_key(cui):
    # Orden numérico; el texto desempata CUIs con ceros a la izquierda distintos
    return (int(cui[1:]), cui)


def filter_by_semantic_type(pool, types, level_name):
    types = frozenset(types)
    if not types:
        raise ValidationError("Se requiere al menos un tipo semántico para filtrar")
    kept = [k for k in pool.keywords if k.semantic_types & types]
    if not kept:
        raise EmptyResultError(
            f"Ninguna keyword tiene los tipos {sorted(types)}; revise el nombre del tipo"
        )
    logger.info("%s: %d de %d keywords", level_name, len(kept), len(pool))
    return WoiPool(level_name=level_name, keywords=kept, filter_types=types)


def pool_stats(pool):
    histogram = Counter()
    for k in pool.keywords:
        histogram.update(k.semantic_types)
    return PoolStats(
        count=len(pool),
        distinct_types=len(histogram),
        histogram={name: histogram[name] for name in sorted(histogram)},
    )


def build_level_pools(pool, levels=None):
    """Aplica los filtros de nivel (por defecto Level-0..3) sobre el pool crudo"""
    levels = LEVEL_PRESETS if levels is None else levels
    pools = {}
    for name, types in levels.items():
        if types:
            pools[name] = filter_by_semantic_type(pool, types, name)
        else:
            pools[name] = WoiPool(level_name=name, keywords=pool.keywords)
    return pools


def align_keyword_embeddings(pool, matrix):
    """Filas de ``matrix`` (ids = CUIs) en el orden de las keywords del pool"""
    lookup = matrix.index_of()
    missing = [cui for cui in pool.cuis if cui not in lookup]
    if missing:
        raise PoolEmbeddingMismatchError(
            f"Faltan embeddings para {len(missing)} CUIs del pool {pool.level_name}: "
            + ", ".join(missing[:10])
        )
    return matrix.take([lookup[cui] for cui in pool.cuis])


def load_records(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"No existe el archivo de registros: {path}")
    records = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise MalformedRecordError(line_no, f"JSON inválido ({e.msg})") from e
    return records


def load_pool(path):
    """
    Lee un pool serializado. Si la primera línea es una cabecera con
    ``level_name`` se respeta; si no, el archivo se trata como registros crudos.
    """
    records = load_records(path)
    if records and "level_name" in records[0] and "cui" not in records[0]:
        header, body = records[0], records[1:]
        pool = build_pool(body)
        types = frozenset(header.get("filter_types") or [])
        if types:
            return filter_by_semantic_type(pool, types, header["level_name"])
        return WoiPool(level_name=header["level_name"], keywords=pool.keywords)
    return build_pool(records)


def save_pool(pool, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(pool.header(), ensure_ascii=False) + "\n")
        for record in pool.records():
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path

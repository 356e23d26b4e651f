"""
Lectura y escritura de matrices de embeddings.

TQXE v1: magic ``TQXE``, u32 versión, u64 N, u64 D (little-endian), luego N·D
float32 little-endian por filas y al final un arreglo JSON UTF-8 con los N ids.
También se acepta CSV ``id,dim0,...,dimD-1`` para N <= 10 000.
"""

import hashlib
import json
import logging
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ValidationError
from .tensor_core import EmbeddingMatrix

logger = logging.getLogger(__name__)

MAGIC = b"TQXE"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")
CSV_MAX_ROWS = 10_000


def write_tqxe(path, matrix):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, d = matrix.values.shape
    ids = json.dumps(list(matrix.ids), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, n, d))
        f.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
        f.write(ids)
    return path


def read_tqxe(path):
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValidationError(f"{path}: archivo TQXE truncado")
    magic, version, n, d = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValidationError(f"{path}: no es un archivo TQXE")
    if version != VERSION:
        raise ValidationError(f"{path}: versión TQXE {version} no soportada")
    end = HEADER.size + 4 * n * d
    if len(raw) < end:
        raise ValidationError(f"{path}: faltan datos ({n}×{d} esperados)")
    values = np.frombuffer(raw, dtype="<f4", count=n * d, offset=HEADER.size).reshape(n, d)
    try:
        ids = json.loads(raw[end:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValidationError(f"{path}: lista de ids ilegible ({e})") from e
    return EmbeddingMatrix(ids=ids, values=values.astype(np.float32))


def write_csv(path, matrix):
    path = Path(path)
    if matrix.n_rows > CSV_MAX_ROWS:
        raise ValidationError(f"{path}: CSV admite hasta {CSV_MAX_ROWS} filas; use TQXE")
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"dim{j}" for j in range(matrix.dim)]
    frame = pd.DataFrame(matrix.values, columns=columns)
    frame.insert(0, "id", list(matrix.ids))
    frame.to_csv(path, index=False, float_format="%.9g")
    return path


def read_csv(path):
    frame = pd.read_csv(path, dtype={"id": str})
    if "id" not in frame.columns or frame.columns[0] != "id":
        raise ValidationError(f"{path}: la primera columna debe ser 'id'")
    if len(frame) > CSV_MAX_ROWS:
        raise ValidationError(
            f"{path}: CSV con {len(frame)} filas; use TQXE para más de {CSV_MAX_ROWS}"
        )
    expected = [f"dim{j}" for j in range(len(frame.columns) - 1)]
    if list(frame.columns[1:]) != expected:
        raise ValidationError(f"{path}: columnas esperadas id,dim0,...,dimD-1")
    return EmbeddingMatrix(ids=frame["id"].tolist(), values=frame[expected].to_numpy(np.float32))


def load_embeddings(path):
    """Carga TQXE o CSV según la extensión"""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"No existe el archivo de embeddings: {path}")
    if path.suffix.lower() == ".csv":
        matrix = read_csv(path)
    else:
        matrix = read_tqxe(path)
    logger.info("Embeddings cargados de %s: %d × %d", path, matrix.n_rows, matrix.dim)
    return matrix


def save_embeddings(path, matrix):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return write_csv(path, matrix)
    return write_tqxe(path, matrix)


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

"""
Cliente del proveedor remoto de embeddings (JSON sobre HTTP).

Petición:  ``{"version": "tqx-provider/1", "items": [{"id": ..., "text": ...}, ...]}``
Respuesta: ``{"dim": D, "embeddings": [{"id": ..., "values": [...]}, ...]}``

Los resultados se guardan en un caché TQXE indexado por el hash del contenido;
una segunda llamada con las mismas entradas no toca la red.
"""

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from .errors import DimensionMismatchError, MissingIdsError, ProviderError, ValidationError
from .formats import read_tqxe, write_tqxe
from .tensor_core import EmbeddingMatrix

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "tqx-provider/1"
TRANSIENT_STATUS = (429, 500, 502, 503, 504)


def _validate_items(items):
    items = list(items)
    if not items:
        raise ValidationError("Se requiere al menos un elemento para consultar al proveedor")
    seen = set()
    for index, item in enumerate(items):
        if not isinstance(item, dict) or "id" not in item:
            raise ValidationError(f"Elemento {index} sin 'id'")
        if not ("text" in item or "image" in item):
            raise ValidationError(f"Elemento {item['id']} sin 'text' ni 'image'")
        if item["id"] in seen:
            raise ValidationError(f"Id repetido en la consulta: {item['id']}")
        seen.add(item["id"])
    return items


def cache_key(endpoint, items):
    payload = json.dumps(
        {"version": PROTOCOL_VERSION, "endpoint": endpoint, "items": items},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_session(retries=3, backoff=0.5, token=None):
    """Sesión con reintentos exponenciales para fallas transitorias"""
    retry = Retry(
        total=retries,
        connect=retries,
        read=retries,
        status=retries,
        backoff_factor=backoff,
        status_forcelist=TRANSIENT_STATUS,
        allowed_methods=frozenset({"POST"}),
        raise_on_status=False,
    )
    session = requests.Session()
    adapter = HTTPAdapter(max_retries=retry)
    session.mount("http://", adapter)
    session.mount("https://", adapter)
    if token:
        session.headers["Authorization"] = f"Bearer {token}"
    return session


class EmbeddingProviderService:
    """Servicio para obtener embeddings del proveedor remoto

    Cada hilo del pool usa su propia ``requests.Session``, creada con
    ``session_factory`` la primera vez que el hilo consulta al proveedor.
    """

    def __init__(self, endpoint, cache_dir=".tqx_cache", token=None, max_workers=4,
                 batch_size=64, retries=3, backoff=0.5, timeout=30.0, session_factory=None):
        if not endpoint:
            raise ValidationError("Se requiere la URL del proveedor")
        if max_workers < 1 or batch_size < 1:
            raise ValidationError("max_workers y batch_size deben ser positivos")
        self.endpoint = endpoint
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_workers = max_workers
        self.batch_size = batch_size
        self.timeout = timeout
        self.session_factory = session_factory or (lambda: build_session(retries, backoff, token))
        self._local = threading.local()

    @property
    def session(self):
        """Sesión del hilo actual"""
        session = getattr(self._local, "session", None)
        if session is None:
            session = self.session_factory()
            self._local.session = session
        return session

    def cache_path(self, items):
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{cache_key(self.endpoint, items)}.tqxe"

    def _post(self, batch):
        try:
            response = self.session.post(
                self.endpoint,
                json={"version": PROTOCOL_VERSION, "items": batch},
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise ProviderError(None, str(e)) from e
        if response.status_code >= 400:
            raise ProviderError(response.status_code, response.text[:200])
        try:
            return response.json()
        except ValueError as e:
            raise ProviderError(response.status_code, "respuesta no es JSON") from e

    @staticmethod
    def _parse(batch, body, dim):
        if not isinstance(body, dict) or "embeddings" not in body or "dim" not in body:
            raise ProviderError(200, "respuesta sin 'dim' o 'embeddings'")
        if dim is not None and body["dim"] != dim:
            raise DimensionMismatchError(f"El proveedor cambió la dimensión: {body['dim']} != {dim}")
        dim = int(body["dim"])
        vectors = {}
        for entry in body["embeddings"]:
            values = entry.get("values") or []
            if len(values) != dim:
                raise DimensionMismatchError(
                    f"Embedding de {entry.get('id')} con {len(values)} valores; se esperaban {dim}"
                )
            vectors[entry.get("id")] = values
        missing = [item["id"] for item in batch if item["id"] not in vectors]
        if missing:
            raise MissingIdsError(missing)
        return dim, vectors

    def fetch(self, items):
        items = _validate_items(items)
        cached = self.cache_path(items)
        if cached is not None and cached.exists():
            logger.info("Embeddings servidos desde el caché %s", cached)
            return read_tqxe(cached)

        batches = [items[i:i + self.batch_size] for i in range(0, len(items), self.batch_size)]
        with ThreadPoolExecutor(max_workers=min(self.max_workers, len(batches))) as pool:
            bodies = list(pool.map(self._post, batches))

        dim = None
        vectors = {}
        for batch, body in zip(batches, bodies):
            dim, found = self._parse(batch, body, dim)
            vectors.update(found)
        ids = [item["id"] for item in items]
        matrix = EmbeddingMatrix(
            ids=ids,
            values=np.array([vectors[i] for i in ids], dtype=np.float32).reshape(len(ids), dim),
        )
        if cached is not None:
            write_tqxe(cached, matrix)
        logger.info("Proveedor: %d embeddings de dimensión %d", matrix.n_rows, matrix.dim)
        return matrix


def fetch_remote_embeddings(endpoint, items, **options):
    return EmbeddingProviderService(endpoint, **options).fetch(items)

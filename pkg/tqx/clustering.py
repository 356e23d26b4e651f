"""
K-Means de Lloyd con inicialización K-Means++, coeficiente de silueta,
composición de clusters, keywords por cluster y emparejamiento con las
clases reales.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import KClassMismatchError, KTooLargeError, SingleClusterError, ValidationError
from .retrieval import aggregate_ranks, select_top_m

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-4
DEFAULT_TOP_KEYWORDS = 5
SILHOUETTE_BLOCK = 1024


@dataclass(frozen=True)
class ClusteringResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    converged: bool
    seed: int = 0
    inertia_history: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "k": self.k,
            "seed": self.seed,
            "inertia": self.inertia,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "inertia_history": list(self.inertia_history),
        }


@dataclass(frozen=True)
class ClusterMatch:
    """Biyección cluster → clase que maximiza las coincidencias"""

    mapping: dict
    agreement: int
    total: int

    @property
    def agreement_rate(self):
        return self.agreement / self.total if self.total else 0.0

    def to_dict(self):
        return {
            "mapping": {str(c): y for c, y in self.mapping.items()},
            "agreement": self.agreement,
            "total": self.total,
            "agreement_rate": self.agreement_rate,
        }


@dataclass(frozen=True)
class ClusterReport:
    composition: np.ndarray
    class_order: tuple
    top_keywords: dict
    silhouette_mean: float
    silhouette_per_sample: np.ndarray
    match: ClusterMatch = None

    def to_dict(self):
        data = {
            "class_order": list(self.class_order),
            "composition": [
                {"cluster": c, **{y: float(v) for y, v in zip(self.class_order, row)}}
                for c, row in enumerate(self.composition)
            ],
            "top_keywords": {
                str(c): [
                    {"cui": kw.cui, "text": kw.text, "mean_rank": rank} for kw, rank in pairs
                ]
                for c, pairs in self.top_keywords.items()
            },
            "silhouette_mean": self.silhouette_mean,
        }
        if self.match is not None:
            data["ground_truth_match"] = self.match.to_dict()
        return data


def _as_float64(x):
    values = x.values if hasattr(x, "values") else x
    return np.asarray(values, dtype=np.float64)


def _squared_distances(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeanspp_init(x, k, seed):
    """
    Primer centroide uniforme; cada siguiente con probabilidad proporcional a la
    distancia cuadrada al centroide elegido más cercano.
    """
    points = _as_float64(x)
    n = points.shape[0]
    if k < 1:
        raise ValidationError("k debe ser al menos 1")
    if k > n:
        raise KTooLargeError(f"k={k} supera la cantidad de muestras ({n})")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    closest = _squared_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            candidate = int(rng.choice(n, p=closest / total))
        else:
            # puntos restantes idénticos a algún centroide
            remaining = np.setdiff1d(np.arange(n), chosen)
            candidate = int(rng.choice(remaining))
        chosen.append(candidate)
        closest = np.minimum(closest, _squared_distances(points, points[[candidate]])[:, 0])
    return points[chosen].copy()


def _assign(points, centroids):
    d2 = _squared_distances(points, centroids)
    return np.argmin(d2, axis=1), d2


def _repair_empty(assignments, d2, centroids, points, k):
    counts = np.bincount(assignments, minlength=k)
    for c in np.flatnonzero(counts == 0):
        cost = d2[np.arange(points.shape[0]), assignments]
        movable = counts[assignments] > 1
        cost = np.where(movable, cost, -1.0)
        farthest = int(np.argmax(cost))
        counts[assignments[farthest]] -= 1
        assignments[farthest] = c
        counts[c] = 1
        centroids[c] = points[farthest]
        d2[:, c] = _squared_distances(points, points[[farthest]])[:, 0]
        logger.debug("Cluster vacío %d reasignado al punto %d", c, farthest)
    return assignments


def _update(points, assignments, k):
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    for c in range(k):
        centroids[c] = points[assignments == c].mean(axis=0)
    return centroids


def inertia_of(x, assignments, centroids):
    points = _as_float64(x)
    diff = points - np.asarray(centroids)[np.asarray(assignments)]
    return float(np.einsum("nd,nd->", diff, diff))


def _lloyd_once(points, k, seed, max_iter, tol):
    centroids = kmeanspp_init(points, k, seed)
    assignments = None
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_assignments, d2 = _assign(points, centroids)
        new_assignments = _repair_empty(new_assignments, d2, centroids, points, k)
        if assignments is not None and np.array_equal(new_assignments, assignments):
            converged = True
            break
        assignments = new_assignments
        new_centroids = _update(points, assignments, k)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        history.append(inertia_of(points, assignments, centroids))
        if shift < tol:
            converged = True
            break
    return ClusteringResult(
        k=k,
        assignments=assignments,
        centroids=centroids,
        inertia=inertia_of(points, assignments, centroids),
        iterations_run=iterations,
        converged=converged,
        seed=seed,
        inertia_history=tuple(history),
    )


def lloyd(x, k, seed=0, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL, n_restarts=1):
    """
    K-Means de Lloyd. Se detiene cuando las asignaciones no cambian, cuando el
    desplazamiento máximo de centroides es menor a ``tol`` o al llegar a ``max_iter``.
    Con ``n_restarts`` > 1 prueba las semillas seed, seed+1, ... y conserva la de menor inercia.
    """
    points = _as_float64(x)
    if k > points.shape[0]:
        raise KTooLargeError(f"k={k} supera la cantidad de muestras ({points.shape[0]})")
    if max_iter < 1:
        raise ValidationError("max_iter debe ser al menos 1")
    if tol < 0:
        raise ValidationError("tol no puede ser negativa")
    if n_restarts < 1:
        raise ValidationError("n_restarts debe ser al menos 1")
    best = None
    for restart in range(n_restarts):
        result = _lloyd_once(points, k, seed + restart, max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    logger.info(
        "K-Means k=%d: inercia %.6g en %d iteraciones (convergió=%s)",
        k, best.inertia, best.iterations_run, best.converged,
    )
    return best


def silhouette(x, assignments, metric="euclidean"):
    """
    Coeficiente de silueta por muestra y su media. Los clusters de un solo
    elemento reciben 0, igual que a = b = 0.
    """
    points = _as_float64(x)
    labels = np.asarray(assignments)
    if labels.shape[0] != points.shape[0]:
        raise ValidationError("Cantidad de asignaciones distinta de la cantidad de muestras")
    clusters, codes = np.unique(labels, return_inverse=True)
    if clusters.size < 2:
        raise SingleClusterError("La silueta requiere al menos 2 clusters distintos")
    sizes = np.bincount(codes, minlength=clusters.size).astype(np.float64)
    n = points.shape[0]
    per_sample = np.zeros(n, dtype=np.float64)
    for start in range(0, n, SILHOUETTE_BLOCK):
        block = slice(start, min(start + SILHOUETTE_BLOCK, n))
        distances = cdist(points[block], points, metric=metric)
        sums = np.stack([distances[:, codes == c].sum(axis=1) for c in range(clusters.size)], axis=1)
        own = codes[block]
        rows = np.arange(own.size)
        own_size = sizes[own]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(own_size > 1, sums[rows, own] / (own_size - 1), 0.0)
            means = sums / sizes[None, :]
        means[rows, own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, (b - a) / denom, 0.0)
        per_sample[block] = np.where(own_size > 1, s, 0.0)
    return per_sample, float(per_sample.mean())


def _class_codes(labels, class_order):
    lookup = {y: i for i, y in enumerate(class_order)}
    unknown = sorted({str(y) for y in labels if y not in lookup})
    if unknown:
        raise ValidationError(f"Etiquetas fuera del orden de clases: {', '.join(unknown)}")
    return np.array([lookup[y] for y in labels], dtype=np.int64)


def _resolve_classes(labels, class_order):
    return tuple(class_order) if class_order is not None else tuple(sorted(set(labels)))


def contingency(assignments, labels, class_order=None, k=None):
    assignments = np.asarray(assignments, dtype=np.int64)
    labels = list(labels)
    if assignments.shape[0] != len(labels):
        raise ValidationError("Asignaciones y etiquetas deben tener el mismo largo")
    classes = _resolve_classes(labels, class_order)
    k = int(assignments.max()) + 1 if k is None else k
    table = np.zeros((k, len(classes)), dtype=np.int64)
    np.add.at(table, (assignments, _class_codes(labels, classes)), 1)
    return table, classes


def cluster_composition(assignments, labels, class_order=None, k=None):
    """Porcentaje de muestras de cada clase en cada cluster (filas suman 100)"""
    table, classes = contingency(assignments, labels, class_order, k)
    totals = table.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise ValidationError("Hay clusters vacíos; la composición no está definida")
    return 100.0 * table / totals, classes


def top_keywords_per_cluster(r, assignments, pool, top_k=DEFAULT_TOP_KEYWORDS):
    """Rango medio dentro de cada cluster y sus ``top_k`` keywords"""
    assignments = np.asarray(assignments, dtype=np.int64)
    if r.n_images != assignments.shape[0]:
        raise ValidationError("La matriz de rangos no coincide con las asignaciones")
    result = {}
    for c in np.unique(assignments):
        mean_ranks = aggregate_ranks(r, np.flatnonzero(assignments == c))
        head = select_top_m(mean_ranks, top_k)
        result[int(c)] = [(pool.keywords[j], float(mean_ranks[j])) for j in head.selected]
    return result


def match_clusters_to_labels(assignments, labels, class_order=None, k=None):
    """
    Emparejamiento óptimo cluster → clase sobre la tabla de contingencia. Entre
    los óptimos se elige el menor en orden lexicográfico (clase del cluster 0,
    luego del 1, ...).
    """
    table, classes = contingency(assignments, labels, class_order, k)
    n_clusters, n_classes = table.shape
    if n_clusters != n_classes:
        raise KClassMismatchError(f"k={n_clusters} no coincide con {n_classes} clases")
    rows, cols = linear_sum_assignment(table, maximize=True)
    best = int(table[rows, cols].sum())

    mapping = {}
    free_rows = list(range(n_clusters))
    free_cols = list(range(n_classes))
    remaining = best
    for c in range(n_clusters):
        free_rows.remove(c)
        for y in sorted(free_cols):
            cols_left = [j for j in free_cols if j != y]
            sub = table[np.ix_(free_rows, cols_left)]
            r_idx, c_idx = linear_sum_assignment(sub, maximize=True) if sub.size else ([], [])
            if table[c, y] + int(sub[r_idx, c_idx].sum() if sub.size else 0) == remaining:
                mapping[c] = classes[y]
                remaining -= int(table[c, y])
                free_cols.remove(y)
                break
    return ClusterMatch(mapping=mapping, agreement=best, total=int(table.sum()))


def relabel_to_ground_truth(assignments, match, class_order):
    """Asignaciones expresadas como índice de la clase emparejada"""
    lookup = {y: i for i, y in enumerate(class_order)}
    return np.array([lookup[match.mapping[int(c)]] for c in assignments], dtype=np.int64)


def build_cluster_report(x, result, labels=None, class_order=None, ranks=None, pool=None,
                         top_k=DEFAULT_TOP_KEYWORDS, metric="euclidean"):
    per_sample, mean = silhouette(x, result.assignments, metric=metric)
    composition = np.zeros((result.k, 0))
    classes = ()
    match = None
    if labels is not None:
        composition, classes = cluster_composition(result.assignments, labels, class_order, result.k)
        if len(classes) == result.k:
            match = match_clusters_to_labels(result.assignments, labels, classes, result.k)
    top = {}
    if ranks is not None and pool is not None:
        top = top_keywords_per_cluster(ranks, result.assignments, pool, top_k)
    return ClusterReport(
        composition=composition,
        class_order=classes,
        top_keywords=top,
        silhouette_mean=mean,
        silhouette_per_sample=per_sample,
        match=match,
    )

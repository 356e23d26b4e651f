"""
Clasificador MLP de dos capas (Linear → BatchNorm → ReLU → Linear) escrito
sobre numpy, entrenado con Adam y entropía cruzada, más las métricas del
protocolo de clasificación y el arnés de 50 semillas.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, cohen_kappa_score, f1_score, precision_score, recall_score
from tqdm import tqdm

from .errors import (
    BatchTooSmallError,
    MissingClassInTrainError,
    NonFiniteGradientError,
    UndefinedAccCError,
    ValidationError,
)

logger = logging.getLogger(__name__)

PARAMETERS = ("w1", "b1", "bn_gamma", "bn_beta", "w2", "b2")
METRIC_NAMES = ("acc", "acc_c", "macro_f1", "kappa_quadratic", "precision", "recall")
DEFAULT_N_SEEDS = 50


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 300
    batch_size: int = 256
    hidden_width: int = 512
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "hidden_width", "seed"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ValidationError(f"{name} debe ser entero (recibido {value!r})")
        if not self.learning_rate > 0:
            raise ValidationError("La tasa de aprendizaje debe ser mayor a 0")
        if self.epochs < 1:
            raise ValidationError("Se requiere al menos una época")
        if self.batch_size < 2:
            raise ValidationError("batch_size debe ser al menos 2 (batch norm)")
        if self.hidden_width < 1:
            raise ValidationError("hidden_width debe ser positivo")

    def to_dict(self):
        return asdict(self)


@dataclass
class AdamState:
    """Primer y segundo momento de Adam por parámetro"""

    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)

    def copy(self):
        return AdamState(
            first={name: m.copy() for name, m in self.first.items()},
            second={name: v.copy() for name, v in self.second.items()},
        )


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    mode: str = "train"
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5
    adam: AdamState = field(default_factory=AdamState)

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def parameters(self):
        return {name: getattr(self, name) for name in PARAMETERS}

    def copy(self):
        return replace(self, **{
            name: getattr(self, name).copy()
            for name in PARAMETERS + ("bn_running_mean", "bn_running_var")
        }, adam=self.adam.copy())


def init_model(d, h, c, rng, bn_momentum=0.1, bn_epsilon=1e-5):
    """Pesos uniformes escalados por fan-in (estilo Kaiming); sesgos en cero"""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    bound1 = math.sqrt(6.0 / d)
    bound2 = math.sqrt(6.0 / h)
    return MlpModel(
        w1=rng.uniform(-bound1, bound1, size=(d, h)),
        b1=np.zeros(h),
        bn_gamma=np.ones(h),
        bn_beta=np.zeros(h),
        bn_running_mean=np.zeros(h),
        bn_running_var=np.ones(h),
        w2=rng.uniform(-bound2, bound2, size=(h, c)),
        b2=np.zeros(c),
        bn_momentum=bn_momentum,
        bn_epsilon=bn_epsilon,
    )


def _forward(model, batch):
    x = np.asarray(batch, dtype=np.float64)
    if model.mode == "train":
        if x.shape[0] < 2:
            raise BatchTooSmallError("En modo entrenamiento el lote necesita al menos 2 muestras")
    elif x.shape[0] < 1:
        raise BatchTooSmallError("El lote está vacío")
    z1 = x @ model.w1 + model.b1
    if model.mode == "train":
        mean = z1.mean(axis=0)
        var = z1.var(axis=0)
    else:
        mean = model.bn_running_mean
        var = model.bn_running_var
    inv_std = 1.0 / np.sqrt(var + model.bn_epsilon)
    xhat = (z1 - mean) * inv_std
    y = model.bn_gamma * xhat + model.bn_beta
    a = np.maximum(y, 0.0)
    logits = a @ model.w2 + model.b2
    cache = {"x": x, "z1": z1, "mean": mean, "var": var, "inv_std": inv_std,
             "xhat": xhat, "y": y, "a": a}
    return logits, cache


def _update_running_stats(model, cache):
    n = cache["x"].shape[0]
    momentum = model.bn_momentum
    unbiased = cache["var"] * n / (n - 1)
    model.bn_running_mean = (1 - momentum) * model.bn_running_mean + momentum * cache["mean"]
    model.bn_running_var = (1 - momentum) * model.bn_running_var + momentum * unbiased


def forward(model, batch):
    """
    Logits del lote. En modo train usa estadísticas del lote y actualiza las
    estadísticas acumuladas; en modo eval usa las acumuladas.
    """
    logits, cache = _forward(model, batch)
    if model.mode == "train":
        _update_running_stats(model, cache)
    return logits


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _loss_grads_cache(model, batch, labels):
    logits, cache = _forward(model, batch)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = model.b2.shape[0]
    if labels.shape[0] != logits.shape[0]:
        raise ValidationError("Cantidad de etiquetas distinta del tamaño del lote")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError(f"Etiquetas fuera de [0, {n_classes})")
    b = logits.shape[0]
    log_p = _log_softmax(logits)
    loss = float(-log_p[np.arange(b), labels].mean())

    dlogits = np.exp(log_p)
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    grads = {
        "w2": cache["a"].T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dy = (dlogits @ model.w2.T) * (cache["y"] > 0)
    grads["bn_gamma"] = (dy * cache["xhat"]).sum(axis=0)
    grads["bn_beta"] = dy.sum(axis=0)
    dxhat = dy * model.bn_gamma
    if model.mode == "train":
        xhat = cache["xhat"]
        dz1 = (cache["inv_std"] / b) * (
            b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
    else:
        dz1 = dxhat * cache["inv_std"]
    grads["w1"] = cache["x"].T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads, cache


def loss_and_grads(model, batch, labels):
    """Entropía cruzada media y gradientes exactos de todos los parámetros"""
    loss, grads, _ = _loss_grads_cache(model, batch, labels)
    return loss, grads


def adam_step(model, grads, step_count, config, state=None):
    """
    Paso de Adam con corrección de sesgo. Los momentos se acumulan en
    ``model.adam`` salvo que se pase un ``state`` explícito.
    """
    if step_count < 1:
        raise ValidationError("step_count debe ser al menos 1")
    for name in PARAMETERS:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError(f"Gradiente no finito en {name}")
    state = model.adam if state is None else state
    correction1 = 1.0 - config.beta1 ** step_count
    correction2 = 1.0 - config.beta2 ** step_count
    for name in PARAMETERS:
        g = grads[name]
        m = state.first.get(name, np.zeros_like(g))
        v = state.second.get(name, np.zeros_like(g))
        m = config.beta1 * m + (1.0 - config.beta1) * g
        v = config.beta2 * v + (1.0 - config.beta2) * g * g
        state.first[name] = m
        state.second[name] = v
        update = config.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + config.epsilon)
        setattr(model, name, getattr(model, name) - update)
    return model


@dataclass(frozen=True)
class DataSplit:
    train: np.ndarray
    test: np.ndarray

    def to_dict(self):
        return {"train": int(self.train.size), "test": int(self.test.size)}


def stratified_split(labels, test_fraction=0.2, seed=0):
    """Partición estratificada; cada clase aporta round(n·fracción) muestras al test"""
    if not 0 < test_fraction < 1:
        raise ValidationError("test_fraction debe estar en (0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for y in sorted(set(labels.tolist())):
        members = rng.permutation(np.flatnonzero(labels == y))
        n_test = int(round(members.size * test_fraction))
        if members.size > 1:
            n_test = min(max(n_test, 1), members.size - 1)
        else:
            n_test = 0
        test.extend(members[:n_test].tolist())
        train.extend(members[n_test:].tolist())
    return DataSplit(train=np.array(sorted(train), dtype=np.int64),
                     test=np.array(sorted(test), dtype=np.int64))


def load_split(path, ids):
    """CSV ``id,partition`` con partition en {train, test}"""
    frame = pd.read_csv(path, dtype=str)
    if list(frame.columns[:2]) != ["id", "partition"]:
        raise ValidationError(f"{path}: se esperaban las columnas id,partition")
    bad = sorted(set(frame["partition"]) - {"train", "test"})
    if bad:
        raise ValidationError(f"{path}: particiones desconocidas {bad}")
    partition = dict(zip(frame["id"], frame["partition"]))
    missing = [i for i in ids if i not in partition]
    if missing:
        raise ValidationError(f"{path}: faltan ids en la partición: {', '.join(missing[:10])}")
    train = [row for row, i in enumerate(ids) if partition[i] == "train"]
    test = [row for row, i in enumerate(ids) if partition[i] == "test"]
    return DataSplit(train=np.array(train, dtype=np.int64), test=np.array(test, dtype=np.int64))


@dataclass(frozen=True)
class MetricSet:
    """Métricas de una corrida; acc y acc_c en porcentaje, el resto en [0, 1] o [-1, 1]"""

    acc: float
    acc_c: float
    macro_f1: float
    kappa_quadratic: float
    precision: float
    recall: float

    def to_dict(self):
        return {name: getattr(self, name) for name in METRIC_NAMES}


def cancer_accuracy(true, pred, cancer_codes):
    mask = np.isin(true, list(cancer_codes))
    if not mask.any():
        raise UndefinedAccCError("Ninguna muestra tiene una clase de cáncer como etiqueta real")
    return 100.0 * float(np.mean(true[mask] == pred[mask]))


def _quadratic_kappa(true, pred, n_classes):
    codes = list(range(n_classes))
    if np.array_equal(true, pred):
        return 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = cohen_kappa_score(true, pred, labels=codes, weights="quadratic")
    return float(kappa) if np.isfinite(kappa) else 0.0


def evaluate_metrics(predictions, labels, class_order, cancer_classes=()):
    """
    Acc, Acc_c, F1 macro, kappa cuadrática (orden ordinal de ``class_order``),
    precisión y recall macro. Acc_c queda en ``None`` si no hay muestras de cáncer.
    """
    class_order = list(class_order)
    lookup = {y: i for i, y in enumerate(class_order)}
    unknown = sorted({str(y) for y in list(predictions) + list(labels) if y not in lookup})
    if unknown:
        raise ValidationError(f"Clases fuera del orden configurado: {', '.join(unknown)}")
    if len(predictions) != len(labels):
        raise ValidationError("Predicciones y etiquetas deben tener el mismo largo")
    if not len(labels):
        raise ValidationError("No hay muestras para evaluar")
    missing = sorted(set(cancer_classes) - set(class_order))
    if missing:
        raise ValidationError(f"Clases de cáncer desconocidas: {', '.join(missing)}")
    true = np.array([lookup[y] for y in labels], dtype=np.int64)
    pred = np.array([lookup[y] for y in predictions], dtype=np.int64)
    # F1, precisión y recall promedian sólo las clases presentes en etiquetas o predicciones
    codes = sorted(set(true.tolist()) | set(pred.tolist()))
    try:
        acc_c = cancer_accuracy(true, pred, [lookup[y] for y in cancer_classes])
    except UndefinedAccCError:
        acc_c = None
    return MetricSet(
        acc=100.0 * float(accuracy_score(true, pred)),
        acc_c=acc_c,
        macro_f1=float(f1_score(true, pred, labels=codes, average="macro", zero_division=0)),
        kappa_quadratic=_quadratic_kappa(true, pred, len(class_order)),
        precision=float(precision_score(true, pred, labels=codes, average="macro", zero_division=0)),
        recall=float(recall_score(true, pred, labels=codes, average="macro", zero_division=0)),
    )


def predict(model, features):
    model.eval()
    return np.argmax(forward(model, features), axis=1)


def mean_loss(model, features, labels):
    """Pérdida media sin modificar el modelo (usa el modo actual del modelo)"""
    loss, _ = loss_and_grads(model, features, labels)
    return loss


def train(features, labels, split, config, class_order, cancer_classes=()):
    """
    Entrena una semilla: barajado por época con ``config.seed``, minilotes de
    ``batch_size`` (se descarta un último lote de tamaño 1) y métricas en modo
    eval sobre la partición de test.
    """
    x = np.asarray(features.values if hasattr(features, "values") else features, dtype=np.float64)
    class_order = list(class_order)
    lookup = {y: i for i, y in enumerate(class_order)}
    y = np.array([lookup[label] for label in labels], dtype=np.int64)
    present = set(y.tolist())
    in_train = set(y[split.train].tolist())
    absent = [class_order[c] for c in sorted(present - in_train)]
    if absent:
        raise MissingClassInTrainError(f"Clases sin muestras de entrenamiento: {', '.join(absent)}")
    if split.train.size < 2:
        raise BatchTooSmallError("La partición de entrenamiento necesita al menos 2 muestras")

    rng = np.random.default_rng(config.seed)
    model = init_model(x.shape[1], config.hidden_width, len(class_order), rng,
                       config.bn_momentum, config.bn_epsilon)
    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(split.train)
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            if batch.size < 2:
                continue
            loss, grads, cache = _loss_grads_cache(model, x[batch], y[batch])
            _update_running_stats(model, cache)
            step += 1
            adam_step(model, grads, step, config)
        logger.debug("seed=%d época %d: pérdida %.6f", config.seed, epoch, loss)

    model.eval()
    if split.test.size == 0:
        raise ValidationError("La partición de test está vacía")
    predicted = predict(model, x[split.test])
    metrics = evaluate_metrics(
        [class_order[c] for c in predicted],
        [class_order[c] for c in y[split.test]],
        class_order,
        cancer_classes,
    )
    return model, metrics


@dataclass(frozen=True)
class MetricAggregate:
    per_seed: tuple
    mean: dict
    std: dict

    @property
    def n_seeds(self):
        return len(self.per_seed)

    def to_dict(self):
        return {
            "n_seeds": self.n_seeds,
            "mean": dict(self.mean),
            "std": dict(self.std),
            "per_seed": [{"seed": seed, **m.to_dict()} for seed, m in self.per_seed],
        }


def aggregate_metrics(per_seed):
    """Media y desviación estándar muestral por métrica (std = 0 con una semilla)"""
    mean, std = {}, {}
    for name in METRIC_NAMES:
        values = np.array([getattr(m, name) for _, m in per_seed if getattr(m, name) is not None],
                          dtype=np.float64)
        if values.size == 0:
            mean[name] = None
            std[name] = None
            continue
        mean[name] = float(values.mean())
        std[name] = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return MetricAggregate(per_seed=tuple(per_seed), mean=mean, std=std)


def multi_seed_run(features, labels, split, config, class_order, cancer_classes=(),
                   n_seeds=DEFAULT_N_SEEDS, workers=1, progress=False):
    """Repite ``train`` con las semillas 0..n_seeds-1 y agrega las métricas"""
    if n_seeds < 1:
        raise ValidationError("n_seeds debe ser al menos 1")

    def run(seed):
        _, metrics = train(features, labels, split, replace(config, seed=seed), class_order, cancer_classes)
        return seed, metrics

    seeds = range(n_seeds)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(run, seeds), total=n_seeds, disable=not progress, desc="semillas"))
    else:
        results = [run(seed) for seed in tqdm(seeds, disable=not progress, desc="semillas")]
    aggregate = aggregate_metrics(results)
    logger.info("Clasificación: %d semillas, acc media %.2f", n_seeds, aggregate.mean["acc"])
    return aggregate

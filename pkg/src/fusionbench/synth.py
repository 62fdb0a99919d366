"""Synthetic bilinear question-answering tasks and a small Adam trainer."""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import formats
from .errors import ConfigurationError, DivergenceError, ParameterError
from .numtensor import Rng
from .vqahead import ModelParams, forward, log_softmax, loss_and_grads


@dataclass(frozen=True)
class SynthTaskSpec:
    """Task generator settings.

    ``features`` is ``gaussian`` (N(0, 1) entries) or ``rademacher`` (+-1
    entries). ``target`` is ``random`` (class scorers are sums of ``rank``
    Gaussian outer products) or ``cross`` (two classes scored by -+ q[0] v[1]).
    """

    n_q: int
    n_v: int
    classes: int
    rank: int
    n_train: int
    n_test: int
    noise_sigma: float = 0.0
    seed: int = 0
    features: str = "gaussian"
    target: str = "random"

    def __post_init__(self):
        if min(self.n_q, self.n_v) < 1:
            raise ParameterError(f"modality dims must be >= 1, got n_q={self.n_q}, n_v={self.n_v}")
        if self.classes < 2:
            raise ParameterError(f"need at least 2 classes, got {self.classes}")
        if not 1 <= self.rank <= min(self.n_q, self.n_v):
            raise ParameterError(f"rank {self.rank} must lie in [1, min(n_q, n_v) = {min(self.n_q, self.n_v)}]")
        if self.n_train < 1 or self.n_test < 1:
            raise ParameterError("n_train and n_test must be >= 1")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.features not in ("gaussian", "rademacher"):
            raise ParameterError(f"unknown feature distribution {self.features!r}")
        if self.target not in ("random", "cross"):
            raise ParameterError(f"unknown target {self.target!r}")
        if self.target == "cross" and (self.classes != 2 or self.rank != 1 or self.n_v < 2):
            raise ParameterError("cross target needs classes=2, rank=1 and n_v >= 2")


@dataclass
class SynthDataset:
    """Samples ``(q[i], v[i], labels[i])``, the first ``n_train`` being the train split."""

    q: np.ndarray
    v: np.ndarray
    labels: np.ndarray
    scorers: np.ndarray
    n_train: int

    def __len__(self):
        return len(self.labels)

    def _part(self, sl):
        n = len(self.labels[sl])
        return SynthDataset(self.q[sl], self.v[sl], self.labels[sl], self.scorers, n)

    @property
    def train(self):
        return self._part(slice(0, self.n_train))

    @property
    def test(self):
        return self._part(slice(self.n_train, None))

    def scores(self):
        return bilinear_scores(self.scorers, self.q, self.v)

    def save(self, path):
        formats.save(formats.Container(
            meta={"kind": "dataset", "n_train": str(self.n_train)},
            tensors={"q": self.q, "v": self.v, "labels": self.labels.astype(np.float64), "scorers": self.scorers},
        ), path)

    @classmethod
    def load(cls, path):
        c = formats.load(path)
        if c.meta.get("kind") != "dataset":
            raise ConfigurationError(f"{path}: not a dataset snapshot")
        return cls(q=c.tensors["q"], v=c.tensors["v"], labels=c.tensors["labels"].astype(np.int64),
                   scorers=c.tensors["scorers"], n_train=int(c.meta["n_train"]))


def bilinear_scores(scorers, q, v):
    """``score[n, k] = q[n] . B_k . v[n]``."""
    return np.einsum("ni,kij,nj->nk", q, scorers, v)


def gen_task(spec):
    """Draw scorers, features and (optional) score noise from ``Rng(spec.seed)``;
    label = argmax of noisy scores, ties to the lowest class."""
    rng = Rng(spec.seed)
    K = spec.classes
    if spec.target == "cross":
        scorers = np.zeros((2, spec.n_q, spec.n_v))
        scorers[0, 0, 1] = -1.0
        scorers[1, 0, 1] = 1.0
    else:
        scorers = np.zeros((K, spec.n_q, spec.n_v))
        for k in range(K):
            for _ in range(spec.rank):
                a = rng.gaussian(spec.n_q, 1.0)
                b = rng.gaussian(spec.n_v, 1.0)
                scorers[k] += np.outer(a, b)
    N = spec.n_train + spec.n_test
    if spec.features == "rademacher":
        q = rng.uniform_sign(N * spec.n_q).astype(np.float64).reshape(N, spec.n_q)
        v = rng.uniform_sign(N * spec.n_v).astype(np.float64).reshape(N, spec.n_v)
    else:
        q = rng.gaussian(N * spec.n_q, 1.0).reshape(N, spec.n_q)
        v = rng.gaussian(N * spec.n_v, 1.0).reshape(N, spec.n_v)
    scores = bilinear_scores(scorers, q, v)
    if spec.noise_sigma > 0:
        scores = scores + rng.gaussian(N * K, spec.noise_sigma).reshape(N, K)
    labels = np.argmax(scores, axis=1).astype(np.int64)
    return SynthDataset(q=q, v=v, labels=labels, scorers=scorers, n_train=spec.n_train)


def elementwise_floor(data):
    """Smallest mean cross-entropy reachable by any classifier that only sees ``q * v``.

    Samples with identical products must receive identical logits, so the
    best possible loss is the label entropy within each group of equal
    products, weighted by group size.
    """
    if data.q.shape[1] != data.v.shape[1]:
        raise ParameterError(f"element-wise fusion needs n_q == n_v, got {data.q.shape[1]} and {data.v.shape[1]}")
    z = np.ascontiguousarray(data.q * data.v)
    groups = {}
    for row, label in zip(z, data.labels):
        counts = groups.setdefault(row.tobytes(), {})
        counts[int(label)] = counts.get(int(label), 0) + 1
    total = 0.0
    for counts in groups.values():
        n = sum(counts.values())
        for c in counts.values():
            total -= c * np.log(c / n)
    return total / len(data.labels)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 32
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ParameterError(f"learning rate must be >= 0, got {self.lr}")
        if self.batch < 1 or self.epochs < 1:
            raise ParameterError("batch and epochs must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ParameterError("Adam needs 0 <= beta1, beta2 < 1 and eps > 0")


PRESETS = {
    "desk": TrainConfig(),
    "paper-defaults": TrainConfig(lr=1e-5, batch=70, epochs=150),
    "paper-defaults-hr": TrainConfig(lr=1e-5, batch=70, epochs=35),
}


class Adam:
    """Bias-corrected Adam; updates the parameter arrays in place."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.u = {}

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, theta in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(theta)
                self.u[name] = np.zeros_like(theta)
            m = self.m[name]
            u = self.u[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            u *= self.beta2
            u += (1.0 - self.beta2) * (g * g)
            theta -= self.lr * (m / bc1) / (np.sqrt(u / bc2) + self.eps)


@dataclass
class TrainReport:
    history: list
    confusion: np.ndarray
    wall_time: float
    seed: int
    spec: dict = field(default_factory=dict)

    HEADER = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc")

    @property
    def final_train_loss(self):
        return self.history[-1][1]

    def to_csv(self):
        return formats.csv_text(self.HEADER, self.history)

    def confusion_csv(self):
        K = self.confusion.shape[0]
        header = ["true"] + [f"pred_{j}" for j in range(K)]
        return formats.csv_text(header, [[i, *map(int, self.confusion[i])] for i in range(K)])


def _logits(model, data):
    if isinstance(model, ModelParams):
        return forward(model, data.v, data.q)
    return np.asarray(model(data.q, data.v))


def evaluate(model, data):
    """Overall accuracy and confusion counts (rows: true class, columns: predicted).

    ``model`` is a :class:`ModelParams` or any callable ``(q, v) -> logits``.
    """
    if len(data) == 0:
        raise ParameterError("cannot evaluate on an empty partition")
    logits = _logits(model, data)
    K = logits.shape[-1]
    pred = np.argmax(logits, axis=1)
    conf = np.zeros((K, K), dtype=np.int64)
    np.add.at(conf, (data.labels, pred), 1)
    return float(np.trace(conf)) / len(data), conf


def _loss_acc(model, data):
    logits = _logits(model, data)
    lp = log_softmax(logits)
    loss = float(-lp[np.arange(len(data)), data.labels].mean())
    acc = float(np.mean(np.argmax(logits, axis=1) == data.labels))
    return loss, acc


def _check_dims(model, data):
    spec = model.spec
    if spec.n_txt != data.q.shape[1] or spec.n_img != data.v.shape[1]:
        raise ConfigurationError(
            f"model expects n_txt={spec.n_txt}, n_img={spec.n_img}; data has n_q={data.q.shape[1]}, n_v={data.v.shape[1]}")
    if spec.classes != data.scorers.shape[0]:
        raise ConfigurationError(f"model has {spec.classes} classes, data has {data.scorers.shape[0]}")


def train(model, data, cfg):
    """Minibatch Adam on mean cross-entropy. ``model`` is updated in place.

    Batches follow a per-epoch permutation drawn from ``Rng(cfg.seed)``.
    Metrics are recomputed on the full train and test splits after every epoch.
    """
    _check_dims(model, data)
    train_set, test_set = data.train, data.test
    rng = Rng(cfg.seed)
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    start = time.monotonic()
    history = []
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch):
            idx = perm[lo:lo + cfg.batch]
            loss, grads = loss_and_grads(model, train_set.v[idx], train_set.q[idx], train_set.labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            opt.step(model.tensors, grads)
        tr_loss, tr_acc = _loss_acc(model, train_set)
        te_loss, te_acc = _loss_acc(model, test_set)
        if not (np.isfinite(tr_loss) and np.isfinite(te_loss)):
            raise DivergenceError(epoch)
        history.append((epoch, tr_loss, tr_acc, te_loss, te_acc))
    _, conf = evaluate(model, test_set)
    return TrainReport(history=history, confusion=conf, wall_time=time.monotonic() - start,
                       seed=cfg.seed, spec=asdict(cfg))

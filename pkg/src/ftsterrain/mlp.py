"""Dense feed-forward terrain classifier in plain numpy.

Architecture: input -> 64 ReLU -> 64 ReLU -> softmax over the classes, with
inverted dropout on the inputs (10%) and between the hidden layers (20%).
Training is minibatch SGD with momentum on the mean cross-entropy.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DegenerateDataError, DivergenceError, ShapeError
from .preprocessing import Scaler, canonical_classes


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden: tuple = (64, 64)
    output_dim: int = 4
    dropout_in: float = 0.10
    dropout_hidden: float = 0.20
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for p in (self.dropout_in, self.dropout_hidden):
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"dropout rate {p} outside [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.input_dim < 1 or self.output_dim < 2 or any(h < 1 for h in self.hidden):
            raise ConfigError("layer sizes must be positive and there must be at least two outputs")

    @property
    def layer_sizes(self) -> tuple:
        return (self.input_dim,) + self.hidden + (self.output_dim,)


@dataclass
class MlpModel:
    weights: list  # (fan_in, fan_out) per layer
    biases: list
    config: MlpConfig
    classes: tuple = ()
    scaler: Scaler | None = None
    activation: str = "relu"

    def __post_init__(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError(f"expected {len(sizes) - 1} layers, got {len(self.weights)}")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise ShapeError(f"layer {k}: weights {W.shape}, bias {b.shape} do not chain {sizes}")

    @property
    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def predict_proba(self, X) -> np.ndarray:
        return forward(self, X)

    def predict(self, X) -> np.ndarray:
        return np.array(self.classes, dtype=object)[np.argmax(forward(self, X), axis=1)]

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["hidden"] = list(cfg["hidden"])
        return {
            "kind": "mlp",
            "classes": list(self.classes),
            "activation": self.activation,
            "output": "softmax",
            "config": cfg,
            "scaler": self.scaler.to_dict() if self.scaler is not None else None,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        cfg = MlpConfig(**{**d["config"], "hidden": tuple(d["config"]["hidden"])})
        sizes = cfg.layer_sizes
        weights = [np.asarray(W, dtype=np.float64).reshape(sizes[k], sizes[k + 1]) for k, W in enumerate(d["weights"])]
        biases = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
        scaler = Scaler.from_dict(d["scaler"]) if d.get("scaler") else None
        return cls(weights, biases, cfg, tuple(d["classes"]), scaler, d.get("activation", "relu"))


def init_params(cfg: MlpConfig, rng) -> tuple:
    """Glorot-uniform weights, zero biases."""
    sizes = cfg.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def dropout_masks(cfg: MlpConfig, n: int, rng) -> list:
    """Inverted-dropout masks: one for the inputs, one after each hidden layer
    that feeds another hidden layer. Kept units are scaled by 1/(1-p)."""
    masks = []
    widths = [(cfg.input_dim, cfg.dropout_in)] + [(h, cfg.dropout_hidden) for h in cfg.hidden[:-1]]
    for width, p in widths:
        if p > 0:
            masks.append((rng.random((n, width)) >= p) / (1.0 - p))
        else:
            masks.append(None)
    return masks


def _network(model: MlpModel, A, masks=None):
    """Pre-activations and (dropped) activations for every layer."""
    n_layers = len(model.weights)
    acts = []
    pre = []
    a = A
    if masks is not None and masks[0] is not None:
        a = a * masks[0]
    acts.append(a)
    for k in range(n_layers):
        z = a @ model.weights[k] + model.biases[k]
        pre.append(z)
        if k == n_layers - 1:
            break
        a = np.maximum(z, 0.0)
        if masks is not None and k + 1 < len(masks) and masks[k + 1] is not None:
            a = a * masks[k + 1]
        acts.append(a)
    return pre, acts


def _inputs(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.config.input_dim:
        raise ShapeError(f"expected {model.config.input_dim} inputs, got {X.shape[1]}")
    return model.scaler.transform(X) if model.scaler is not None else X


def forward(model: MlpModel, X, mode: str = "eval", rng=None, masks=None) -> np.ndarray:
    """Class probabilities for the rows of ``X``.

    ``mode="train"`` applies dropout, drawing masks from ``rng`` unless
    ``masks`` are given. Evaluation needs no rescaling because training uses
    inverted dropout.
    """
    A = _inputs(model, X)
    if mode == "train":
        if masks is None:
            if rng is None:
                raise ConfigError("training-mode forward needs an rng or explicit masks")
            masks = dropout_masks(model.config, A.shape[0], rng)
    elif mode == "eval":
        masks = None
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    pre, _ = _network(model, A, masks)
    return _softmax(pre[-1])


def loss_and_grads(model: MlpModel, A, targets, masks=None):
    """Mean cross-entropy of network inputs ``A`` and its parameter gradients.

    ``A`` is already scaled; ``targets`` are class indices. Gradients come
    back in :attr:`MlpModel.params` order.
    """
    pre, acts = _network(model, A, masks)
    n = A.shape[0]
    logp = _log_softmax(pre[-1])
    loss = float(-logp[np.arange(n), targets].mean())
    dz = np.exp(logp)
    dz[np.arange(n), targets] -= 1.0
    dz /= n
    grads = [None] * (2 * len(model.weights))
    for k in range(len(model.weights) - 1, -1, -1):
        grads[2 * k] = acts[k].T @ dz
        grads[2 * k + 1] = dz.sum(axis=0)
        if k == 0:
            break
        da = dz @ model.weights[k].T
        if masks is not None and k < len(masks) and masks[k] is not None:
            da = da * masks[k]
        dz = da * (pre[k - 1] > 0)
    return loss, grads


def gradient_check(model: MlpModel, X, y, h: float = 1e-5) -> float:
    """Largest relative difference between backprop and central differences.

    Runs without dropout over every parameter. ``y`` holds class indices.
    Relative error is ``|g - g_fd| / max(|g|, |g_fd|, 1e-8)``.
    """
    A = _inputs(model, X)
    targets = np.asarray(y, dtype=np.int64)
    _, grads = loss_and_grads(model, A, targets)
    worst = 0.0
    for P, G in zip(model.params, grads):
        flat = P.reshape(-1)
        gflat = G.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = loss_and_grads(model, A, targets)
            flat[i] = orig - h
            lm, _ = loss_and_grads(model, A, targets)
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            denom = max(abs(gflat[i]), abs(fd), 1e-8)
            worst = max(worst, abs(gflat[i] - fd) / denom)
    return worst


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float | None = None
    test_acc: float | None = None


def _evaluate(model, A, targets):
    pre, _ = _network(model, A)
    logp = _log_softmax(pre[-1])
    loss = float(-logp[np.arange(A.shape[0]), targets].mean())
    acc = float(np.mean(np.argmax(logp, axis=1) == targets))
    return loss, acc


def train(X, y, cfg: MlpConfig, X_test=None, y_test=None, classes=None):
    """Minibatch SGD with momentum; returns ``(model, curves)``.

    ``curves`` has one :class:`EpochStats` per epoch, measured without
    dropout after the epoch's updates. Fully determined by ``cfg.seed``.

    Raises
    ------
    DivergenceError
        The loss became non-finite.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object).astype(str)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"X has shape {X.shape} but there are {y.size} labels")
    if X.shape[1] != cfg.input_dim:
        raise ShapeError(f"config expects {cfg.input_dim} inputs, data has {X.shape[1]}")
    classes = tuple(classes) if classes is not None else canonical_classes(y)
    if len(set(y)) < 2:
        raise DegenerateDataError("training needs at least two classes")
    if len(classes) != cfg.output_dim:
        raise ConfigError(f"{len(classes)} classes but output_dim={cfg.output_dim}")
    if y.size < cfg.batch_size:
        raise DegenerateDataError(f"{y.size} samples is fewer than one batch of {cfg.batch_size}")
    index = {c: i for i, c in enumerate(classes)}
    targets = np.array([index[c] for c in y], dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    scaler = Scaler.fit(X)
    A = scaler.transform(X)
    weights, biases = init_params(cfg, rng)
    model = MlpModel(weights, biases, cfg, classes, scaler)
    if X_test is not None:
        A_test = scaler.transform(X_test)
        t_test = np.array([index[c] for c in np.asarray(y_test, dtype=object).astype(str)], dtype=np.int64)

    velocity = [np.zeros_like(P) for P in model.params]
    curves = []
    n = A.shape[0]
    # overflow shows up as a non-finite loss, reported as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                masks = dropout_masks(cfg, idx.size, rng)
                loss, grads = loss_and_grads(model, A[idx], targets[idx], masks)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                for P, V, G in zip(model.params, velocity, grads):
                    V *= cfg.momentum
                    V -= cfg.learning_rate * G
                    P += V
            tr_loss, tr_acc = _evaluate(model, A, targets)
            if not np.isfinite(tr_loss):
                raise DivergenceError(epoch, tr_loss)
            te_loss = te_acc = None
            if X_test is not None:
                te_loss, te_acc = _evaluate(model, A_test, t_test)
            curves.append(EpochStats(epoch, tr_loss, tr_acc, te_loss, te_acc))
    return model, curves

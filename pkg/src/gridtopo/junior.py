"""Feed-forward imitation network, implemented from scratch on numpy.

Maps filtered observation vectors to a probability over the action list.
Rectifier hidden layers with orthogonal initialisation, dropout after
the first two hidden layers, softmax output trained by mini-batch
gradient descent on cross-entropy with early stopping on validation
loss.  Inputs are standardised per feature with statistics frozen from
the training split and stored in the model file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class EmptyDataset(ValueError):
    """Training requires at least one labelled example."""


@dataclass
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: list[int] = field(default_factory=lambda: [400, 773, 1044, 344])
    dropout: list[float] = field(default_factory=lambda: [0.157474, 0.408924])
    learning_rate: float = 0.000128
    batch_size: int = 768
    max_epochs: int = 1000
    patience: int = 50

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError("layer dimensions must be positive")
        if any(not 0.0 <= r < 1.0 for r in self.dropout):
            raise ValueError("dropout rates must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "output_dim": self.output_dim,
                "hidden": list(self.hidden), "dropout": list(self.dropout),
                "learning_rate": self.learning_rate, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs, "patience": self.patience}

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpSpec":
        return cls(**doc)


@dataclass
class TrainReport:
    train_loss: list[float]
    val_loss: list[float]
    top1: list[float]
    topk: list[float]
    stopped_epoch: int
    k: int = 20


@dataclass
class JuniorModel:
    """Trained parameters plus the frozen input standardisation."""

    spec: MlpSpec
    params: list[np.ndarray]  # [W1, b1, W2, b2, ...] in layer order
    mean: np.ndarray
    std: np.ndarray

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


def _orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    out = q[:rows, :cols] if rows >= cols else q[:cols, :rows].T
    return np.ascontiguousarray(out)


def init_params(spec: MlpSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Orthogonal weight matrices, zero biases."""
    dims = [spec.input_dim] + list(spec.hidden) + [spec.output_dim]
    params = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        params.append(_orthogonal(rng, fan_in, fan_out))
        params.append(np.zeros(fan_out))
    return params


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(spec: MlpSpec, params, batch: np.ndarray, train_mode: bool = False,
            rng: np.random.Generator | None = None, cache: list | None = None) -> np.ndarray:
    """Probability rows for a batch of (already normalised) vectors.

    Dropout (inverted scaling) is active only in train_mode with a
    caller-provided RNG; eval-mode calls are deterministic.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != spec.input_dim:
        raise ValueError(f"expected vectors of length {spec.input_dim}, got {batch.shape[1]}")
    if train_mode and rng is None and any(r > 0 for r in spec.dropout):
        raise ValueError("train_mode dropout requires an RNG")
    h = batch
    n_hidden = len(spec.hidden)
    for i in range(n_hidden):
        z = h @ params[2 * i] + params[2 * i + 1]
        h = np.maximum(z, 0.0)
        mask = None
        if train_mode and i < len(spec.dropout) and spec.dropout[i] > 0.0:
            keep = 1.0 - spec.dropout[i]
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        if cache is not None:
            cache.append((z, mask, h))
    logits = h @ params[2 * n_hidden] + params[2 * n_hidden + 1]
    return _softmax(logits)


def _backward(spec: MlpSpec, params, batch, labels, probs, cache):
    """Cross-entropy gradients for every parameter, matching forward()."""
    n = len(labels)
    grads = [None] * len(params)
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    d /= n
    n_hidden = len(spec.hidden)
    upstream = cache[-1][2] if n_hidden else batch
    grads[2 * n_hidden] = upstream.T @ d
    grads[2 * n_hidden + 1] = d.sum(axis=0)
    dh = d @ params[2 * n_hidden].T
    for i in range(n_hidden - 1, -1, -1):
        z, mask, _ = cache[i]
        if mask is not None:
            dh = dh * mask
        dz = dh * (z > 0.0)
        upstream = cache[i - 1][2] if i > 0 else batch
        grads[2 * i] = upstream.T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ params[2 * i].T
    return grads


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(probs[np.arange(len(labels)), labels], 1e-300, None)
    return float(-np.log(p).mean())


def train(spec: MlpSpec, vectors: np.ndarray, labels: np.ndarray,
          validation_split: float = 0.1, seed: int = 0,
          topk: int = 20) -> tuple[JuniorModel, TrainReport]:
    """Mini-batch gradient descent with patience-based early stopping.

    Deterministic for a fixed seed; the best-validation parameters are
    restored at the end.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(vectors) == 0:
        raise EmptyDataset("no training examples")
    if labels.max(initial=0) >= spec.output_dim or labels.min(initial=0) < 0:
        raise ValueError("labels out of range for the action list")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(vectors))
    n_val = max(1, int(round(validation_split * len(vectors)))) if validation_split > 0 else 0
    n_val = min(n_val, len(vectors) - 1) if len(vectors) > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]

    mean = vectors[train_idx].mean(axis=0)
    std = vectors[train_idx].std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    x_train = (vectors[train_idx] - mean) / std
    y_train = labels[train_idx]
    x_val = (vectors[val_idx] - mean) / std
    y_val = labels[val_idx]

    params = init_params(spec, rng)
    k = min(topk, spec.output_dim)
    report = TrainReport([], [], [], [], 0, k=k)
    best_loss, best_params, since_best = np.inf, [p.copy() for p in params], 0

    for epoch in range(spec.max_epochs):
        perm = rng.permutation(len(x_train))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(perm), spec.batch_size):
            idx = perm[start:start + spec.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            cache = []
            probs = forward(spec, params, xb, train_mode=True, rng=rng, cache=cache)
            epoch_loss += cross_entropy(probs, yb)
            n_batches += 1
            grads = _backward(spec, params, xb, yb, probs, cache)
            for p, g in zip(params, grads):
                p -= spec.learning_rate * g
        report.train_loss.append(epoch_loss / max(1, n_batches))

        if n_val:
            val_probs = forward(spec, params, x_val)
            val_loss = cross_entropy(val_probs, y_val)
            report.val_loss.append(val_loss)
            pred = val_probs.argmax(axis=1)
            report.top1.append(float((pred == y_val).mean()))
            ranked = np.argsort(-val_probs, axis=1)[:, :k]
            report.topk.append(float((ranked == y_val[:, None]).any(axis=1).mean()))
            if val_loss < best_loss - 1e-12:
                best_loss, since_best = val_loss, 0
                best_params = [p.copy() for p in params]
            else:
                since_best += 1
                if since_best >= spec.patience:
                    break
    report.stopped_epoch = epoch + 1
    if n_val:
        params = best_params
    return JuniorModel(spec, params, mean, std), report


def predict_topk(model: JuniorModel, vector: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k most probable actions, descending, ties to the
    lower index."""
    if k > model.spec.output_dim:
        raise ValueError("k exceeds the action count")
    probs = forward(model.spec, model.params, model.normalize(vector))[0]
    order = np.lexsort((np.arange(len(probs)), -probs))
    return order[:k]


def predict_proba(model: JuniorModel, vector: np.ndarray) -> np.ndarray:
    return forward(model.spec, model.params, model.normalize(vector))[0]


def gradient_check(spec: MlpSpec, params, x: np.ndarray, label: int,
                   step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout must be disabled (the spec's rates are ignored here); inputs
    at rectifier kinks are excluded by perturbing the sample.
    """
    clean = MlpSpec(spec.input_dim, spec.output_dim, list(spec.hidden), [],
                    spec.learning_rate, spec.batch_size, spec.max_epochs, spec.patience)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.array([label])
    cache = []
    probs = forward(clean, params, x, cache=cache)
    grads = _backward(clean, params, x, y, probs, cache)

    worst = 0.0
    for p, g in zip(params, grads):
        flat_g = g.ravel()
        for j in range(p.size):
            orig = p.flat[j]
            p.flat[j] = orig + step
            loss_plus = cross_entropy(forward(clean, params, x), y)
            p.flat[j] = orig - step
            loss_minus = cross_entropy(forward(clean, params, x), y)
            p.flat[j] = orig
            fd = (loss_plus - loss_minus) / (2.0 * step)
            denom = abs(flat_g[j]) + abs(fd)
            if denom < 1e-7:
                continue
            worst = max(worst, abs(flat_g[j] - fd) / denom)
    return worst


# -- model file ----------------------------------------------------------

def save_model(model: JuniorModel, directory) -> None:
    """manifest.json (spec + normalisation) and params.bin (row-major
    little-endian float64 in layer order)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"spec": model.spec.to_dict(),
                "mean": model.mean.tolist(),
                "std": model.std.tolist(),
                "param_shapes": [list(p.shape) for p in model.params]}
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh)
    flat = np.concatenate([p.ravel() for p in model.params]).astype("<f8")
    flat.tofile(directory / "params.bin")


def load_model(directory) -> JuniorModel:
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    spec = MlpSpec.from_dict(manifest["spec"])
    flat = np.fromfile(directory / "params.bin", dtype="<f8")
    params, offset = [], 0
    for shape in manifest["param_shapes"]:
        size = int(np.prod(shape))
        params.append(flat[offset:offset + size].reshape(shape))
        offset += size
    if offset != flat.size:
        raise ValueError("parameter file does not match the manifest")
    return JuniorModel(spec, params, np.array(manifest["mean"]), np.array(manifest["std"]))

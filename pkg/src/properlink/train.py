"""Training loops, prediction, evaluation, and model serialization.

The model is a linear head into logit space followed by the composed
gradient map of the convex blocks and the fixed squashing onto the
projected simplex: probabilities are unproject(softmax_plus(chain(Wx+b))).
Training minimizes the mean negative log-likelihood of the categorical
labels with Adam (beta1 0.9, beta2 0.999, eps 1e-8), coupled weight decay
added to the gradients, and a step learning-rate schedule: the rate at
epoch e is lr * gamma^(e // decay_step). Each epoch is one full pass over
a seeded shuffle in minibatches, keeping the last short batch.

W and b start at zero, so a model with no blocks is exactly multinomial
logistic regression: train_mlr shares this loop with the chain forced
empty, and the two produce bitwise-identical traces for the same seed and
config. Runs are deterministic given (data, config); a non-finite loss
aborts with the offending epoch and batch rather than being skipped.

A single run is sequential; concurrent runs must not share mutable state
(each gets its own model and RNG).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import blocks as cvx
from . import data as dio
from . import simplex

__all__ = [
    "LinkModel",
    "TrainConfig",
    "Metrics",
    "TrainingDivergence",
    "ModelFormatError",
    "MNIST_PRESET",
    "train_link_model",
    "train_mlr",
    "predict_probs",
    "predict_class",
    "predict_log_probs",
    "evaluate",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "properlink-model"
MODEL_VERSION = 1


class TrainingDivergence(RuntimeError):
    """Loss or gradients went non-finite; names the offending batch."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}; aborting")
        self.epoch = epoch
        self.batch = batch


class ModelFormatError(ValueError):
    """Model file is corrupt, has a wrong version, or inconsistent shapes."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults are the small-dataset settings."""

    epochs: int = 240
    batch_size: int = 64
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    lr_decay: float = 0.95
    decay_step: int = 4
    n_blocks: int = 2
    hidden_dim: int = 2
    depth: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1 or self.hidden_dim < 1 or self.depth < 1 or self.decay_step < 1:
            raise ValueError("batch_size, hidden_dim, depth, decay_step must be positive")
        if self.n_blocks < 0:
            raise ValueError("n_blocks must be non-negative")
        if self.learning_rate <= 0.0 or self.weight_decay < 0.0:
            raise ValueError("learning_rate must be positive, weight_decay non-negative")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")


# Image-scale preset (wider blocks, slower rate, stronger decay).
MNIST_PRESET = dict(n_blocks=1, hidden_dim=4, depth=4, learning_rate=0.001,
                    lr_decay=0.7, decay_step=4, epochs=200, batch_size=128)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    mean_nll: float
    auc: float | None = None
    trace: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        if self.mean_nll < 0.0:
            raise ValueError("mean NLL must be non-negative")


@dataclass(frozen=True)
class LinkModel:
    """Linear head, gradient chain, and the fixed softmax_plus squashing."""

    weights: np.ndarray                 # (C-1, p)
    intercept: np.ndarray               # (C-1,)
    chain: cvx.GradientChain
    n_classes: int
    n_features: int

    def __post_init__(self):
        if self.weights.shape != (self.n_classes - 1, self.n_features):
            raise ValueError("weight shape does not match declared dimensions")
        if self.intercept.shape != (self.n_classes - 1,):
            raise ValueError("intercept shape does not match declared dimensions")
        if len(self.chain) and self.chain.input_dim != self.n_classes - 1:
            raise ValueError("chain input dimension does not match class count")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.intercept))):
            raise ValueError("model parameters must be finite")

    def link_field(self):
        """The map logits -> projected simplex, softmax_plus(chain(z)).

        Accepts a single (C-1,) point or a batch (n, C-1).
        """
        blocks_ = self.chain.blocks

        def field(z):
            z = np.asarray(z, dtype=np.float64)
            if blocks_:
                z = np.asarray(ad.value_of(cvx.chain_apply(blocks_, z)), dtype=np.float64)
            return simplex.softmax_plus(z)

        return field


def _init_model(n_classes: int, n_features: int, cfg: TrainConfig,
                rng: np.random.Generator) -> LinkModel:
    blocks_ = tuple(cvx.init_block(n_classes - 1, cfg.hidden_dim, cfg.depth, rng)
                    for _ in range(cfg.n_blocks))
    return LinkModel(np.zeros((n_classes - 1, n_features)), np.zeros(n_classes - 1),
                     cvx.GradientChain(blocks_), n_classes, n_features)


def _flatten_params(model: LinkModel) -> dict[str, np.ndarray | float]:
    params: dict[str, np.ndarray | float] = {"W": model.weights.copy(),
                                             "b": model.intercept.copy()}
    for i, blk in enumerate(model.chain.blocks, start=1):
        pos, free, biases, w0, w1 = blk.param_lists()
        params[f"g{i}.pos1"] = pos[0]
        params[f"g{i}.bias1"] = biases[0]
        for k in range(2, blk.depth + 2):
            params[f"g{i}.free{k}"] = free[k - 2]
            params[f"g{i}.pos{k}"] = pos[k - 1]
            params[f"g{i}.bias{k}"] = biases[k - 1]
        params[f"g{i}.w0"] = w0
        params[f"g{i}.w1"] = w1
    return params


def _rebuild_model(params, template: LinkModel) -> LinkModel:
    blocks_ = []
    for i, blk in enumerate(template.chain.blocks, start=1):
        pos = [np.asarray(params[f"g{i}.pos{k}"]) for k in range(1, blk.depth + 2)]
        free = [np.asarray(params[f"g{i}.free{k}"]) for k in range(2, blk.depth + 2)]
        biases = [np.asarray(params[f"g{i}.bias{k}"]) for k in range(1, blk.depth + 2)]
        blocks_.append(cvx.ConvexBlock(tuple(pos), tuple(free), tuple(biases),
                                       float(params[f"g{i}.w0"]), float(params[f"g{i}.w1"]),
                                       blk.input_dim, blk.hidden_dim, blk.depth))
    return LinkModel(np.asarray(params["W"]), np.asarray(params["b"]),
                     cvx.GradientChain(tuple(blocks_)),
                     template.n_classes, template.n_features)


def _block_param_views(params, index: int, depth: int):
    return ([params[f"g{index}.pos{k}"] for k in range(1, depth + 2)],
            [params[f"g{index}.free{k}"] for k in range(2, depth + 2)],
            [params[f"g{index}.bias{k}"] for k in range(1, depth + 2)],
            params[f"g{index}.w0"], params[f"g{index}.w1"])


def _batch_nll(params, chain_depths: Sequence[int], x_batch: np.ndarray,
               labels0: np.ndarray):
    z = ad.matmul(x_batch, ad.transpose(params["W"])) + params["b"]
    for i in range(len(chain_depths), 0, -1):
        bp = _block_param_views(params, i, chain_depths[i - 1])
        z = cvx._block_gradient(*bp, z)
    per_example = ad.lse_plus(z) - ad.take_label(z, labels0)
    return ad.reduce_sum(per_example) / x_batch.shape[0]


def train_link_model(dataset: dio.LabeledDataset, cfg: TrainConfig):
    """Minibatch Adam on the mean NLL of the full model; returns the final
    model and metrics whose trace holds one mean training NLL per epoch."""
    n = len(dataset)
    n_classes = dataset.n_classes
    if n_classes < 2:
        raise ValueError("training needs at least 2 classes")
    rng = np.random.default_rng(cfg.seed)
    model = _init_model(n_classes, dataset.n_features, cfg, rng)
    params = _flatten_params(model)
    chain_depths = [b.depth for b in model.chain.blocks]
    labels0 = np.asarray(dataset.labels, dtype=np.intp) - 1

    adam_m = {k: np.zeros(np.shape(v)) for k, v in params.items()}
    adam_v = {k: np.zeros(np.shape(v)) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    trace: list[float] = []

    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch // cfg.decay_step)
        perm = rng.permutation(n)
        epoch_nll = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            x_batch = dio.dense_matrix(dataset, idx)
            y_batch = labels0[idx]
            loss, grads = ad.value_and_grad_params(
                lambda p: _batch_nll(p, chain_depths, x_batch, y_batch), params)
            if not np.isfinite(loss):
                raise TrainingDivergence(epoch, batch_no)
            step += 1
            for name in params:
                g = np.asarray(grads[name], dtype=np.float64)
                if not np.all(np.isfinite(g)):
                    raise TrainingDivergence(epoch, batch_no)
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * np.asarray(params[name])
                adam_m[name] = beta1 * adam_m[name] + (1.0 - beta1) * g
                adam_v[name] = beta2 * adam_v[name] + (1.0 - beta2) * g * g
                m_hat = adam_m[name] / (1.0 - beta1 ** step)
                v_hat = adam_v[name] / (1.0 - beta2 ** step)
                update = lr * m_hat / (np.sqrt(v_hat) + eps)
                if np.ndim(params[name]) == 0:
                    params[name] = float(params[name] - update)
                else:
                    params[name] = params[name] - update
            epoch_nll += float(loss) * len(idx)
        trace.append(epoch_nll / n)

    model = _rebuild_model(params, model)
    final = evaluate(model, dataset)
    return model, dataclasses.replace(final, trace=tuple(trace))


def train_mlr(dataset: dio.LabeledDataset, cfg: TrainConfig):
    """Multinomial logistic regression: the same loop with no blocks, so
    only W and b are trained."""
    return train_link_model(dataset, dataclasses.replace(cfg, n_blocks=0))


def _logits(model: LinkModel, x_batch: np.ndarray) -> np.ndarray:
    z = x_batch @ model.weights.T + model.intercept
    if len(model.chain):
        z = np.asarray(ad.value_of(cvx.chain_apply(model.chain, z)), dtype=np.float64)
    return z


def predict_log_probs(model: LinkModel, x_batch: np.ndarray) -> np.ndarray:
    """Log-probabilities of all C classes for a batch (n, p)."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.shape[1] != model.n_features:
        raise ValueError(f"feature count {x_batch.shape[1]} != model's {model.n_features}")
    return simplex.stable_log_probs(_logits(model, x_batch))


def predict_probs(model: LinkModel, x) -> np.ndarray:
    """Class probabilities for one feature vector; strictly interior."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(f"feature shape {x.shape} != ({model.n_features},)")
    z = model.weights @ x + model.intercept
    if len(model.chain):
        z = np.asarray(ad.value_of(cvx.chain_apply(model.chain, z)), dtype=np.float64)
    return simplex.unproject(simplex.softmax_plus(z))


def predict_class(model: LinkModel, x) -> int:
    """Argmax class (1-based); ties break toward the smallest index.

    Ranks by the stable log-probabilities, a monotone transform of
    predict_probs, so exact ties (for example uniform output at zero
    logits) resolve deterministically.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(f"feature shape {x.shape} != ({model.n_features},)")
    return int(np.argmax(predict_log_probs(model, x[None, :])[0])) + 1


def _rank_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(model: LinkModel, dataset: dio.LabeledDataset) -> Metrics:
    """Accuracy, mean NLL, and (for two classes) rank AUC on a dataset."""
    labels = np.asarray(dataset.labels)
    if labels.max() > model.n_classes:
        raise ValueError(f"label {labels.max()} outside the model's {model.n_classes} classes")
    x = dio.dense_matrix(dataset)
    log_probs = predict_log_probs(model, x)
    predicted = np.argmax(log_probs, axis=1) + 1
    accuracy = float(np.mean(predicted == labels))
    mean_nll = float(-np.mean(log_probs[np.arange(len(labels)), labels - 1]))
    auc = None
    if model.n_classes == 2 and len(set(labels.tolist())) == 2:
        auc = _rank_auc(np.exp(log_probs[:, 1]), labels == 2)
    return Metrics(accuracy, mean_nll, auc)


def save_model(model: LinkModel, path) -> None:
    """Versioned JSON container; float round-trip is exact (repr decimals)."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "n_blocks": len(model.chain),
        "hidden_dim": model.chain.blocks[0].hidden_dim if len(model.chain) else None,
        "depth": model.chain.blocks[0].depth if len(model.chain) else None,
        "W": model.weights.tolist(),
        "b": model.intercept.tolist(),
        "blocks": [
            {
                "pos_raw": [m.tolist() for m in blk.pos_raw],
                "free": [m.tolist() for m in blk.free],
                "biases": [v.tolist() for v in blk.biases],
                "w0_raw": blk.w0_raw,
                "w1_raw": blk.w1_raw,
            }
            for blk in model.chain.blocks
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path) -> LinkModel:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model file")
    if payload.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {payload.get('version')!r}")
    try:
        n_classes = int(payload["n_classes"])
        n_features = int(payload["n_features"])
        weights = np.asarray(payload["W"], dtype=np.float64)
        intercept = np.asarray(payload["b"], dtype=np.float64)
        blocks_ = []
        for entry in payload["blocks"]:
            pos = tuple(np.asarray(m, dtype=np.float64) for m in entry["pos_raw"])
            free = tuple(np.asarray(m, dtype=np.float64) for m in entry["free"])
            biases = tuple(np.asarray(v, dtype=np.float64) for v in entry["biases"])
            depth = len(free)
            hidden = pos[0].shape[0]
            blocks_.append(cvx.ConvexBlock(pos, free, biases,
                                           float(entry["w0_raw"]), float(entry["w1_raw"]),
                                           pos[0].shape[1], hidden, depth))
        model = LinkModel(weights, intercept, cvx.GradientChain(tuple(blocks_)),
                          n_classes, n_features)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"inconsistent model file: {exc}") from None
    if len(model.chain) != int(payload["n_blocks"]):
        raise ModelFormatError("block count disagrees with header")
    return model

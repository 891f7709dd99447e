"""Neural amplitude detector: a small fully-connected network trained to tell
whether two consecutive symbols came from the same constellation ring.

The input is the pair of per-component energy statistics of the current and
previous channel use, concatenated with a one-hot encoding of the operating
SNR; the output is a two-way softmax over {ring kept, ring changed}.  The
network, backpropagation, and the Adam optimizer are implemented directly in
numpy so training is deterministic for a fixed seed.
"""

import json
from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, apply_channel, gen_channel, uniform_pdp
from .detect import energy_statistic_block
from .modem import ConstellationSpec
from .quantize import QuantizerSpec, vql_quantize, vql_quantizer

__all__ = [
    "Layer",
    "MlpModel",
    "AdamState",
    "TrainConfig",
    "LabeledSet",
    "init_mlp",
    "mlp_forward",
    "bce_loss",
    "backward",
    "adam_step",
    "train",
    "predict_amplitude_bit",
    "amplitude_features",
    "generate_dataset",
    "save_model",
    "load_model",
]

MODEL_SCHEMA_VERSION = 1
_CLIP = 1e-12


@dataclass
class Layer:
    """One dense layer: weights (out, in), bias (out,), activation tag."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str


@dataclass
class MlpModel:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    def copy(self) -> "MlpModel":
        return MlpModel(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


@dataclass
class AdamState:
    """First/second moment estimates per parameter array plus the step count."""

    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    t: int = 0


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 250
    batch_size: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")


@dataclass
class LabeledSet:
    """Feature matrix (n, d) and one-hot labels (n, 2)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels must have equal length")


def init_mlp(layer_dims: list[int], rng: np.random.Generator) -> MlpModel:
    """He-initialized network; hidden layers relu, final layer softmax."""
    if len(layer_dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    layers = []
    for i in range(len(layer_dims) - 1):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        act = "softmax" if i == len(layer_dims) - 2 else "relu"
        layers.append(Layer(weights=w, bias=np.zeros(fan_out), activation=act))
    return MlpModel(layers)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _forward_cached(model: MlpModel, x: np.ndarray):
    """Forward pass keeping pre- and post-activation values per layer."""
    pre, post = [], [x]
    a = x
    for layer in model.layers:
        z = a @ layer.weights.T + layer.bias
        if layer.activation == "relu":
            a = np.maximum(z, 0.0)
        elif layer.activation == "softmax":
            a = _softmax(z)
        else:
            raise ValueError(f"unknown activation {layer.activation!r}")
        pre.append(z)
        post.append(a)
    return post[-1], pre, post


def mlp_forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Network output for a single feature vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got {x.shape[1]}")
    out, _, _ = _forward_cached(model, x)
    return out[0] if single else out


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross entropy between one-hot labels and predicted pseudo-probabilities."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    if probs.shape != labels.shape:
        raise ValueError("probs and labels must have matching shapes")
    probs = np.clip(probs, _CLIP, 1.0 - _CLIP)
    return float(-np.mean(np.sum(labels * np.log(probs), axis=1)))


def backward(model: MlpModel, features: np.ndarray, labels: np.ndarray):
    """Exact loss gradients for every weight matrix and bias vector.

    Returns one (dW, db) pair per layer.  The relu subgradient at 0 is 0.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.atleast_2d(np.asarray(labels, dtype=float))
    n = x.shape[0]
    probs, pre, post = _forward_cached(model, x)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    delta = (probs - y) / n  # softmax + cross entropy
    for li in range(len(model.layers) - 1, -1, -1):
        a_prev = post[li]
        grads[li] = (delta.T @ a_prev, delta.sum(axis=0))
        if li > 0:
            delta = delta @ model.layers[li].weights
            delta = delta * (pre[li - 1] > 0)
    return grads


def zero_adam_state(model: MlpModel) -> AdamState:
    zeros = lambda l: (np.zeros_like(l.weights), np.zeros_like(l.bias))
    return AdamState(m=[zeros(l) for l in model.layers], v=[zeros(l) for l in model.layers])


def adam_step(model: MlpModel, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update; mutates and returns model and state."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for li, layer in enumerate(model.layers):
        for slot, (param, g) in enumerate(
            ((layer.weights, grads[li][0]), (layer.bias, grads[li][1]))
        ):
            m = state.m[li][slot]
            v = state.v[li][slot]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            param -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    return model, state


def train(model: MlpModel, dataset: LabeledSet, cfg: TrainConfig):
    """Mini-batch Adam training.

    The batch order is drawn from the config seed, so a fixed seed reproduces
    the loss history and final weights exactly.  Returns the model and the
    per-epoch loss history (entry 0 is the pre-training loss).  Aborts if the
    loss stops being finite.
    """
    x, y = dataset.features, dataset.labels
    if len(x) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    state = zero_adam_state(model)
    history = [bce_loss(mlp_forward(model, x), y)]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads = backward(model, x[idx], y[idx])
            adam_step(model, grads, state, cfg)
        loss = bce_loss(mlp_forward(model, x), y)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged: loss={loss} at epoch {epoch}")
        history.append(loss)
    return model, history


def predict_amplitude_bit(model: MlpModel, features: np.ndarray):
    """Amplitude-bit decision: 0 when the first softmax output wins (ties to 0)."""
    probs = mlp_forward(model, features)
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=1).astype(int)


def amplitude_features(
    lam_now: np.ndarray, lam_prev: np.ndarray, snr_index: int, n_snr: int
) -> np.ndarray:
    """Assemble detector inputs: [now_1, now_2, prev_1, prev_2, one-hot SNR]."""
    lam_now = np.atleast_2d(np.asarray(lam_now, dtype=float))
    lam_prev = np.atleast_2d(np.asarray(lam_prev, dtype=float))
    if not 0 <= snr_index < n_snr:
        raise ValueError(f"snr_index {snr_index} out of range for {n_snr} grid points")
    onehot = np.zeros((len(lam_now), n_snr))
    onehot[:, snr_index] = 1.0
    return np.concatenate([lam_now, lam_prev, onehot], axis=1)


def generate_dataset(
    spec: ConstellationSpec,
    n_antennas: int,
    group_sizes: tuple[int, int, int],
    n_taps: int,
    n_uses: int,
    snr_grid_db,
    size: int,
    seed: int,
    chunk: int = 1024,
) -> LabeledSet:
    """Simulate labelled examples of the ring-change decision.

    Every sample draws an independent symbol pair (random previous ring and
    phase, random bit block), a fresh fading realization evaluated at two
    adjacent uses, noise at a uniformly drawn grid SNR, and the VQL quantizer
    outputs; the features are the two energy statistics plus the SNR one-hot,
    the label the one-hot of the amplitude bit.
    """
    rng = np.random.default_rng(seed)
    snr_grid_db = np.asarray(snr_grid_db, dtype=float)
    n_snr = len(snr_grid_db)
    qspec = vql_quantizer(n_antennas, group_sizes, spec)
    pdp = uniform_pdp(n_taps)

    feats = np.empty((size, 4 + n_snr))
    labels = np.empty((size, 2))
    done = 0
    while done < size:
        n = min(chunk, size - done)
        b1 = rng.integers(0, 2, n)
        prev_outer = rng.integers(0, 2, n)
        prev_amp = np.where(prev_outer == 1, spec.psi1, spec.psi0)
        x_prev = prev_amp * np.exp(2j * np.pi * rng.integers(0, spec.M, n) / spec.M)
        ratio = np.where(
            b1 == 0, 1.0, np.where(prev_outer == 1, 1.0 / spec.ring_ratio, spec.ring_ratio)
        )
        s = np.exp(2j * np.pi * rng.integers(0, spec.M, n) / spec.M)
        x_now = ratio * x_prev * s

        taps = (
            rng.standard_normal((n, n_antennas, n_taps))
            + 1j * rng.standard_normal((n, n_antennas, n_taps))
        ) / np.sqrt(2.0)
        taps *= np.sqrt(pdp)[None, None, :]
        v = rng.integers(1, n_uses, n)
        l_idx = np.arange(n_taps)
        ramp_now = np.exp(-2j * np.pi * np.outer(v, l_idx) / n_uses)
        ramp_prev = np.exp(-2j * np.pi * np.outer(v - 1, l_idx) / n_uses)
        h_now = np.einsum("nul,nl->nu", taps, ramp_now)
        h_prev = np.einsum("nul,nl->nu", taps, ramp_prev)

        snr_idx = rng.integers(0, n_snr, n)
        sigma_z2 = 10.0 ** (-snr_grid_db[snr_idx] / 10.0)
        scale = np.sqrt(sigma_z2 / 2.0)[:, None]
        noise = lambda: scale * (
            rng.standard_normal((n, n_antennas)) + 1j * rng.standard_normal((n, n_antennas))
        )
        y_prev = h_prev * x_prev[:, None] + noise()
        y_now = h_now * x_now[:, None] + noise()

        q_prev = vql_quantize(y_prev.T, qspec)  # antenna axis first
        q_now = vql_quantize(y_now.T, qspec)
        lam_prev = energy_statistic_block(q_prev)
        lam_now = energy_statistic_block(q_now)

        block = np.concatenate(
            [lam_now, lam_prev, np.eye(n_snr)[snr_idx]], axis=1
        )
        feats[done : done + n] = block
        labels[done : done + n] = np.eye(2)[b1]
        done += n
    return LabeledSet(features=feats, labels=labels)


def save_model(model: MlpModel, path: str, metadata: dict | None = None) -> None:
    """Write the model as versioned JSON (dims, activations, row-major arrays)."""
    dims = [model.input_dim] + [l.weights.shape[0] for l in model.layers]
    doc = {
        "version": MODEL_SCHEMA_VERSION,
        "dims": dims,
        "activations": [l.activation for l in model.layers],
        "weights": [l.weights.ravel().tolist() for l in model.layers],
        "biases": [l.bias.tolist() for l in model.layers],
    }
    if metadata is not None:
        doc["metadata"] = metadata
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path: str) -> tuple[MlpModel, dict]:
    """Read a model written by :func:`save_model`; raises ValueError on any
    malformed or version-mismatched file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not a valid model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != MODEL_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported model schema in {path}: version={doc.get('version') if isinstance(doc, dict) else None!r}"
        )
    try:
        dims = doc["dims"]
        acts = doc["activations"]
        weights = doc["weights"]
        biases = doc["biases"]
        if not (len(dims) - 1 == len(acts) == len(weights) == len(biases)):
            raise ValueError("inconsistent layer counts")
        layers = []
        for i, act in enumerate(acts):
            w = np.asarray(weights[i], dtype=float).reshape(dims[i + 1], dims[i])
            b = np.asarray(biases[i], dtype=float)
            if b.shape != (dims[i + 1],):
                raise ValueError("bias length does not match dims")
            if act not in ("relu", "softmax"):
                raise ValueError(f"unknown activation {act!r}")
            layers.append(Layer(weights=w, bias=b, activation=act))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed model file {path}: {exc}") from exc
    return MlpModel(layers), doc.get("metadata", {})

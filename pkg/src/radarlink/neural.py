"""Dense-network engine and the three radar-to-communication translators.

Plain-numpy networks with analytic backpropagation: an APS predictor with
a 1-D convolutional front end, a dominant-eigenvector predictor with a
unit-norm output, and a covariance-vector predictor with tanh-bounded
outputs.  Losses include the windowed-periodogram eigenvector loss and the
Toeplitz-APS covariance-vector loss, both differentiated exactly.
Training uses Adam with validation-plateau learning-rate halving and
early stopping; all randomness derives from explicit seeds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .covfeatures import (
    aps_diag,
    aps_from_vector,
    reconstruct_toeplitz,
    toeplitz_aps_matrices,
)
from .numerics import chebyshev_window

CHECKPOINT_MAGIC = b"MLPC"
LEAKY_ALPHA = 0.1

VARIANT_IDS = {"aps": 1, "eigvec": 2, "covvec": 3}
VARIANT_NAMES = {v: k for k, v in VARIANT_IDS.items()}


# ---------------------------------------------------------------------------
# complex packing
# ---------------------------------------------------------------------------

def pack_complex(v: np.ndarray, mode: str) -> np.ndarray:
    """Stack a complex vector into 2N reals: |v| then angle, or Re then Im."""
    v = np.asarray(v, dtype=complex)
    if mode == "magphase":
        return np.concatenate([np.abs(v), np.angle(v)])
    if mode == "realimag":
        return np.concatenate([v.real, v.imag])
    raise ValueError(f"unknown packing mode {mode!r}")


def unpack_complex(x: np.ndarray, mode: str) -> np.ndarray:
    """Inverse of pack_complex."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2 != 0:
        raise ValueError("packed vector length must be even")
    n = x.shape[-1] // 2
    a, b = x[..., :n], x[..., n:]
    if mode == "magphase":
        return a * np.exp(1j * b)
    if mode == "realimag":
        return a + 1j * b
    raise ValueError(f"unknown packing mode {mode!r}")


# ---------------------------------------------------------------------------
# layers and models
# ---------------------------------------------------------------------------

def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "leaky_relu":
        return np.where(z >= 0, z, LEAKY_ALPHA * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "leaky_relu":
        return np.where(z >= 0, 1.0, LEAKY_ALPHA)
    if name == "tanh":
        return 1.0 - a * a
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "leaky_relu"
    dropout: float = 0.0


@dataclass
class Conv1dLayer:
    """Same-padded 1-D convolution over (batch, channels, width)."""

    weights: np.ndarray  # (out_ch, in_ch, kernel)
    biases: np.ndarray  # (out_ch,)
    activation: str = "leaky_relu"
    dropout: float = 0.0


@dataclass
class MlpModel:
    layers: list
    variant: str
    output_transform: str = "none"  # "none" | "unit_norm"
    norm_const: float = 1.0
    input_width: int = 0  # conv front ends reshape flat input to (1, width)

    def copy_weights(self) -> list:
        return [(l.weights.copy(), l.biases.copy()) for l in self.layers]

    def set_weights(self, weights: list) -> None:
        for layer, (w, b) in zip(self.layers, weights):
            layer.weights = w.copy()
            layer.biases = b.copy()


def _init_dense(rng, n_out: int, n_in: int, activation: str, dropout=0.0) -> DenseLayer:
    limit = np.sqrt(6.0 / n_in)
    return DenseLayer(
        weights=rng.uniform(-limit, limit, size=(n_out, n_in)),
        biases=np.zeros(n_out),
        activation=activation,
        dropout=dropout,
    )


def _init_conv(rng, out_ch: int, in_ch: int, kernel: int, activation: str) -> Conv1dLayer:
    limit = np.sqrt(6.0 / (in_ch * kernel))
    return Conv1dLayer(
        weights=rng.uniform(-limit, limit, size=(out_ch, in_ch, kernel)),
        biases=np.zeros(out_ch),
        activation=activation,
    )


def build_aps_model(n: int = 64, seed: int = 0) -> MlpModel:
    """APS predictor: conv(5,16) -> conv(5,32) -> conv(5,16) -> dense(n)."""
    rng = np.random.default_rng(seed)
    layers = [
        _init_conv(rng, 16, 1, 5, "leaky_relu"),
        _init_conv(rng, 32, 16, 5, "leaky_relu"),
        _init_conv(rng, 16, 32, 5, "leaky_relu"),
        _init_dense(rng, n, 16 * n, "leaky_relu"),
    ]
    return MlpModel(layers=layers, variant="aps", input_width=n)


def build_eigvec_model(n: int = 64, seed: int = 0) -> MlpModel:
    """Eigenvector predictor: 5 dense layers 128-256-512-256-128,
    LeakyReLU(0.1), 50% dropout after the 3rd, unit-norm output."""
    rng = np.random.default_rng(seed)
    sizes = [2 * n, 2 * n, 4 * n, 8 * n, 4 * n, 2 * n]
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        dropout = 0.5 if i == 2 else 0.0
        layers.append(_init_dense(rng, n_out, n_in, "leaky_relu", dropout))
    return MlpModel(layers=layers, variant="eigvec", output_transform="unit_norm")


def build_covvec_model(n: int = 64, seed: int = 0) -> MlpModel:
    """Covariance-vector predictor: dense 128-256-256-128, tanh, no dropout."""
    rng = np.random.default_rng(seed)
    sizes = [2 * n, 2 * n, 4 * n, 4 * n, 2 * n]
    layers = [
        _init_dense(rng, n_out, n_in, "tanh")
        for n_in, n_out in zip(sizes, sizes[1:])
    ]
    return MlpModel(layers=layers, variant="covvec")


BUILDERS = {"aps": build_aps_model, "eigvec": build_eigvec_model, "covvec": build_covvec_model}


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _conv_cols(x: np.ndarray, kernel: int) -> np.ndarray:
    """im2col for same-padded conv: (B, C, W) -> (B, W, C*kernel)."""
    b, c, w = x.shape
    pad = kernel // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = np.empty((b, w, c, kernel))
    for m in range(kernel):
        cols[:, :, :, m] = xp[:, :, m : m + w].transpose(0, 2, 1)
    return cols.reshape(b, w, c * kernel)


def _cols_to_input_grad(d_cols: np.ndarray, c: int, w: int, kernel: int) -> np.ndarray:
    """Adjoint of _conv_cols: (B, W, C*kernel) -> (B, C, W)."""
    b = d_cols.shape[0]
    pad = kernel // 2
    d_cols = d_cols.reshape(b, w, c, kernel)
    dxp = np.zeros((b, c, w + 2 * pad))
    for m in range(kernel):
        dxp[:, :, m : m + w] += d_cols[:, :, :, m].transpose(0, 2, 1)
    return dxp[:, :, pad : pad + w]


def make_dropout_masks(model: MlpModel, batch_size: int, rng) -> list:
    """Inverted-dropout masks for one batch (None for keep-all layers)."""
    masks = []
    for layer in model.layers:
        if layer.dropout > 0.0:
            keep = 1.0 - layer.dropout
            if isinstance(layer, DenseLayer):
                shape = (batch_size, layer.weights.shape[0])
            else:
                shape = (batch_size, layer.weights.shape[0], model.input_width)
            masks.append((rng.random(shape) < keep) / keep)
        else:
            masks.append(None)
    return masks


def _forward_cached(model: MlpModel, x: np.ndarray, masks=None):
    """Forward pass keeping per-layer caches for backprop.

    x: (B, d_in) flat input.  Returns (output (B, d_out), caches).
    Caches hold the pre-mask activation so activation gradients are exact
    under dropout.
    """
    h = x
    caches = []
    if isinstance(model.layers[0], Conv1dLayer):
        h = h.reshape(h.shape[0], 1, model.input_width)
    for idx, layer in enumerate(model.layers):
        mask = masks[idx] if masks is not None else None
        if isinstance(layer, Conv1dLayer):
            cols = _conv_cols(h, layer.weights.shape[2])
            w_flat = layer.weights.reshape(layer.weights.shape[0], -1)
            z = (cols @ w_flat.T + layer.biases).transpose(0, 2, 1)  # (B, out_ch, W)
            a_pre = _act(layer.activation, z)
            caches.append(("conv", h, cols, z, a_pre, mask))
        else:
            if h.ndim == 3:
                h = h.reshape(h.shape[0], -1)
            z = h @ layer.weights.T + layer.biases
            a_pre = _act(layer.activation, z)
            caches.append(("dense", h, None, z, a_pre, mask))
        h = a_pre if mask is None else a_pre * mask
    if h.ndim == 3:
        h = h.reshape(h.shape[0], -1)
    norm_cache = None
    if model.output_transform == "unit_norm":
        norms = np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-300)
        out = h / norms
        norm_cache = (norms, out)
        h = out
    return h, (caches, norm_cache)


def forward(model: MlpModel, x: np.ndarray, training: bool = False, seed: int = 0) -> np.ndarray:
    """Layer-wise forward pass; dropout masks (from seed) only in training."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    expected = _input_dim(model)
    if x.shape[1] != expected:
        raise ValueError(f"input dimension {x.shape[1]} != expected {expected}")
    masks = None
    if training:
        masks = make_dropout_masks(model, x.shape[0], np.random.default_rng(seed))
    out, _ = _forward_cached(model, x, masks)
    return out


def _input_dim(model: MlpModel) -> int:
    first = model.layers[0]
    if isinstance(first, Conv1dLayer):
        return model.input_width * first.weights.shape[1]
    return first.weights.shape[1]


def _backward(model: MlpModel, caches, d_out: np.ndarray) -> list:
    """Backpropagate dL/d(output) into per-layer (dW, db) gradients."""
    layer_caches, norm_cache = caches
    g = d_out
    if norm_cache is not None:
        norms, out = norm_cache
        dot = np.sum(g * out, axis=1, keepdims=True)
        g = (g - out * dot) / norms
    grads: list = [None] * len(model.layers)
    for idx in range(len(model.layers) - 1, -1, -1):
        kind, h_in, cols, z, a_pre, mask = layer_caches[idx]
        layer = model.layers[idx]
        if kind == "dense":
            if g.ndim == 3:
                g = g.reshape(g.shape[0], -1)
            if mask is not None:
                g = g * mask
            dz = g * _act_grad(layer.activation, z, a_pre)
            grads[idx] = (dz.T @ h_in, dz.sum(axis=0))
            g = dz @ layer.weights
            if idx > 0 and layer_caches[idx - 1][0] == "conv":
                g = g.reshape(layer_caches[idx - 1][4].shape)
        else:
            if mask is not None:
                g = g * mask
            dz = g * _act_grad(layer.activation, z, a_pre)
            dz_cols = dz.transpose(0, 2, 1)  # (B, W, out_ch)
            w_flat = layer.weights.reshape(layer.weights.shape[0], -1)
            dw = np.einsum("bwo,bwk->ok", dz_cols, cols)
            db = dz.sum(axis=(0, 2))
            grads[idx] = (dw.reshape(layer.weights.shape), db)
            g = _cols_to_input_grad(
                dz_cols @ w_flat,
                layer.weights.shape[1],
                dz.shape[2],
                layer.weights.shape[2],
            )
    return grads


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def loss_aps_mse(pred_aps: np.ndarray, true_aps: np.ndarray) -> float:
    """Mean squared difference between two angular power spectra."""
    pred_aps = np.asarray(pred_aps, dtype=float)
    true_aps = np.asarray(true_aps, dtype=float)
    if pred_aps.shape != true_aps.shape:
        raise ValueError(f"APS shapes differ: {pred_aps.shape} vs {true_aps.shape}")
    return float(np.mean((pred_aps - true_aps) ** 2))


def loss_eigvec_aps(pred_v: np.ndarray, true_v: np.ndarray) -> float:
    """MSE between the windowed-periodogram APS of two complex vectors.

    Invariant to a global phase on either argument.
    """
    pred_v = np.asarray(pred_v, dtype=complex)
    true_v = np.asarray(true_v, dtype=complex)
    if pred_v.shape != true_v.shape:
        raise ValueError(f"vector shapes differ: {pred_v.shape} vs {true_v.shape}")
    z_pred = aps_from_vector(pred_v)
    z_true = aps_from_vector(true_v)
    return float(np.mean((z_pred - z_true) ** 2))


def loss_covvec(pred_r: np.ndarray, true_aps: np.ndarray) -> float:
    """Mean squared difference between the Toeplitz APS of a covariance
    vector and the true communication APS.

    The Toeplitz reconstruction of an arbitrary vector can be indefinite,
    so the unclamped diagonal is used (the loss must see negative bins).
    """
    pred_r = np.asarray(pred_r, dtype=complex)
    true_aps = np.asarray(true_aps, dtype=float)
    if pred_r.shape != true_aps.shape:
        raise ValueError(f"shapes differ: {pred_r.shape} vs {true_aps.shape}")
    aps = aps_diag(reconstruct_toeplitz(pred_r))
    return float(np.mean((aps - true_aps) ** 2))


class _ApsLoss:
    """Plain MSE on the network output."""

    def __init__(self, n: int):
        self.n = n

    def value(self, pred: np.ndarray, target: np.ndarray) -> float:
        return float(np.mean((pred - target) ** 2))

    def grad(self, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
        return 2.0 * (pred - target) / pred.size


class _EigvecApsLoss:
    """Windowed-periodogram APS loss on [Re; Im]-packed unit vectors."""

    def __init__(self, n: int):
        self.n = n
        self.window = chebyshev_window(n, 35.0)

    def _aps(self, packed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = packed[:, : self.n] + 1j * packed[:, self.n :]
        y = np.fft.fft(self.window * v, axis=1)
        return np.abs(y) ** 2, y

    def value(self, pred: np.ndarray, target: np.ndarray) -> float:
        z_pred, _ = self._aps(pred)
        z_true, _ = self._aps(target)
        return float(np.mean(np.mean((z_pred - z_true) ** 2, axis=1)))

    def grad(self, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
        b = pred.shape[0]
        z_pred, y = self._aps(pred)
        z_true, _ = self._aps(target)
        g_z = (2.0 / self.n) * (z_pred - z_true) / b
        # adjoint of v -> |FFT(c v)|^2:  u = c * N * ifft(g_z * y)
        u = self.window * (self.n * np.fft.ifft(g_z * y, axis=1))
        return np.concatenate([2.0 * u.real, 2.0 * u.imag], axis=1)


class _CovvecApsLoss:
    """Toeplitz-APS loss on [Re; Im]-packed, norm-scaled covariance vectors.

    Both prediction and target are in normalized units; the stored scale
    converts to physical covariance vectors.  The APS map is linear, so
    gradients are a fixed matrix product.
    """

    def __init__(self, n: int, norm_const: float):
        self.n = n
        self.norm_const = norm_const
        self.j_re, self.j_im = toeplitz_aps_matrices(n)

    def _aps(self, packed: np.ndarray) -> np.ndarray:
        re = packed[:, : self.n] * self.norm_const
        im = packed[:, self.n :] * self.norm_const
        return re @ self.j_re.T + im @ self.j_im.T

    def value(self, pred: np.ndarray, target: np.ndarray) -> float:
        diff = self._aps(pred) - self._aps(target)
        return float(np.mean(np.mean(diff * diff, axis=1)))

    def grad(self, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
        b = pred.shape[0]
        g_aps = (2.0 / self.n) * (self._aps(pred) - self._aps(target)) / b
        g_re = self.norm_const * (g_aps @ self.j_re)
        g_im = self.norm_const * (g_aps @ self.j_im)
        return np.concatenate([g_re, g_im], axis=1)


def _make_loss(variant: str, model: MlpModel, n_out: int):
    if variant == "aps":
        return _ApsLoss(n_out)
    if variant == "eigvec":
        return _EigvecApsLoss(n_out // 2)
    if variant == "covvec":
        return _CovvecApsLoss(n_out // 2, model.norm_const)
    raise ValueError(f"unknown loss variant {variant!r}")


def batch_loss(model: MlpModel, x: np.ndarray, y: np.ndarray, loss_variant: str, masks=None) -> float:
    """Batch-mean loss at the current weights (fixed dropout masks)."""
    out, _ = _forward_cached(model, np.atleast_2d(x), masks)
    loss = _make_loss(loss_variant, model, out.shape[1])
    return loss.value(out, np.atleast_2d(y))


def gradient(model: MlpModel, x: np.ndarray, y: np.ndarray, loss_variant: str, masks=None) -> list:
    """Exact parameter gradients of the batch-mean loss.

    Returns one (dW, db) pair per layer.  masks, when given, must be the
    dropout masks used for the corresponding forward pass.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    out, caches = _forward_cached(model, x, masks)
    loss = _make_loss(loss_variant, model, out.shape[1])
    return _backward(model, caches, loss.grad(out, y))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Adam plus plateau bookkeeping.

    A plateau is the absence of a new validation minimum improving on the
    best by at least improvement_rtol relative.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 200
    early_stop_patience: int = 16
    lr_halve_patience: int = 6
    lr_min: float = 1e-6
    improvement_rtol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.early_stop_patience < 1 or self.lr_halve_patience < 1:
            raise ValueError("patiences must be >= 1")
        if self.lr_min <= 0:
            raise ValueError(f"lr_min must be > 0, got {self.lr_min}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float


class _Adam:
    def __init__(self, model: MlpModel, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in model.layers]
        self.v = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in model.layers]

    def step(self, model: MlpModel, grads: list, lr: float) -> None:
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon
        self.t += 1
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for layer, (mw, mb), (vw, vb), (gw, gb) in zip(model.layers, self.m, self.v, grads):
            mw *= b1
            mw += (1 - b1) * gw
            vw *= b2
            vw += (1 - b2) * gw * gw
            layer.weights -= lr * (mw / bc1) / (np.sqrt(vw / bc2) + eps)
            mb *= b1
            mb += (1 - b1) * gb
            vb *= b2
            vb += (1 - b2) * gb * gb
            layer.biases -= lr * (mb / bc1) / (np.sqrt(vb / bc2) + eps)


def train(
    model: MlpModel,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    loss_variant: str,
) -> tuple[MlpModel, list[EpochRecord]]:
    """Adam training with validation-plateau LR halving and early stop.

    Validation is evaluated with dropout off every epoch; the returned
    model carries the weights of the best validation epoch.  All
    randomness (shuffling, dropout) derives from cfg.seed.
    """
    x_tr, y_tr = (np.asarray(a, dtype=float) for a in train_set)
    x_va, y_va = (np.asarray(a, dtype=float) for a in val_set)
    if x_tr.shape[0] == 0 or x_va.shape[0] == 0:
        raise ValueError("train and validation sets must be non-empty")

    rng = np.random.default_rng(cfg.seed)
    adam = _Adam(model, cfg)
    lr = cfg.learning_rate
    best_val = np.inf
    best_weights = model.copy_weights()
    stall_stop = 0
    stall_lr = 0
    history: list[EpochRecord] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(x_tr.shape[0])
        train_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            masks = make_dropout_masks(model, xb.shape[0], rng)
            out, caches = _forward_cached(model, xb, masks)
            loss = _make_loss(loss_variant, model, out.shape[1])
            train_losses.append(loss.value(out, yb))
            grads = _backward(model, caches, loss.grad(out, yb))
            adam.step(model, grads, lr)

        val_loss = batch_loss(model, x_va, y_va, loss_variant)
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(train_losses)),
                val_loss=float(val_loss),
                learning_rate=lr,
            )
        )
        if val_loss < best_val * (1.0 - cfg.improvement_rtol):
            best_val = val_loss
            best_weights = model.copy_weights()
            stall_stop = 0
            stall_lr = 0
        else:
            stall_stop += 1
            stall_lr += 1
            if stall_lr >= cfg.lr_halve_patience:
                lr = max(lr / 2.0, cfg.lr_min)
                stall_lr = 0
            if stall_stop >= cfg.early_stop_patience:
                break

    model.set_weights(best_weights)
    return model, history


def write_history_csv(path, history: list[EpochRecord], header_lines=()) -> None:
    with open(path, "w") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        f.write("epoch,train_loss,val_loss,learning_rate\n")
        for rec in history:
            f.write(
                f"{rec.epoch},{rec.train_loss:.12e},{rec.val_loss:.12e},"
                f"{rec.learning_rate:.12e}\n"
            )


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def predict_variant(model: MlpModel, radar_feature: np.ndarray) -> np.ndarray:
    """Map a radar feature through the trained translator.

    aps:    real APS in, clamped nonnegative APS out.
    eigvec: complex eigenvector in (packed to magnitude/phase), unit-norm
            complex eigenvector out.
    covvec: complex covariance vector in (scaled by the stored norm
            constant), complex covariance vector out.
    """
    feature = np.asarray(radar_feature)
    if model.variant == "aps":
        if np.iscomplexobj(feature):
            raise ValueError("aps variant expects a real feature vector")
        out = forward(model, feature[np.newaxis, :])[0]
        return np.maximum(out, 0.0)
    if model.variant == "eigvec":
        if not np.iscomplexobj(feature):
            raise ValueError("eigvec variant expects a complex feature vector")
        x = pack_complex(feature, "magphase")
        out = forward(model, x[np.newaxis, :])[0]
        return unpack_complex(out, "realimag")
    if model.variant == "covvec":
        if not np.iscomplexobj(feature):
            raise ValueError("covvec variant expects a complex feature vector")
        x = pack_complex(feature, "realimag") / model.norm_const
        out = forward(model, x[np.newaxis, :])[0]
        return model.norm_const * unpack_complex(out, "realimag")
    raise ValueError(f"unknown variant {model.variant!r}")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: MlpModel) -> None:
    """Binary checkpoint: magic "MLPC", u32 variant id, u32 layer count,
    per layer {u32 rows, u32 cols, f64 weights row-major, f64 biases},
    then one f64 normalization constant.  Little-endian throughout."""
    with open(path, "wb") as f:
        f.write(
            struct.pack(
                "<4sII", CHECKPOINT_MAGIC, VARIANT_IDS[model.variant], len(model.layers)
            )
        )
        for layer in model.layers:
            w2 = layer.weights.reshape(layer.weights.shape[0], -1)
            f.write(struct.pack("<II", w2.shape[0], w2.shape[1]))
            f.write(w2.astype("<f8").tobytes())
            f.write(layer.biases.astype("<f8").tobytes())
        f.write(struct.pack("<d", model.norm_const))


def load_checkpoint(path) -> MlpModel:
    """Rebuild the variant architecture and fill it from a checkpoint."""
    with open(path, "rb") as f:
        magic, variant_id, n_layers = struct.unpack("<4sII", f.read(12))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        if variant_id not in VARIANT_NAMES:
            raise ValueError(f"unknown checkpoint variant id {variant_id}")
        variant = VARIANT_NAMES[variant_id]
        model = BUILDERS[variant]()
        if n_layers != len(model.layers):
            raise ValueError(
                f"checkpoint has {n_layers} layers, {variant} expects "
                f"{len(model.layers)}"
            )
        for layer in model.layers:
            rows, cols = struct.unpack("<II", f.read(8))
            expected = layer.weights.reshape(layer.weights.shape[0], -1).shape
            if (rows, cols) != expected:
                raise ValueError(
                    f"checkpoint layer shape {(rows, cols)} != expected {expected}"
                )
            w = np.frombuffer(f.read(8 * rows * cols), dtype="<f8").reshape(rows, cols)
            b = np.frombuffer(f.read(8 * rows), dtype="<f8")
            layer.weights = w.reshape(layer.weights.shape).copy()
            layer.biases = b.copy()
        (norm_const,) = struct.unpack("<d", f.read(8))
        model.norm_const = float(norm_const)
    return model

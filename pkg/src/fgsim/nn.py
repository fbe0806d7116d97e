"""Dense numerics: the shared prediction head, losses, Adam, checkpoints.

Everything operates on float64 numpy arrays.  Parameter collections are
plain ``dict[str, ndarray]`` keyed by tensor name, which keeps the
optimizer, checkpoint format, and federation exchange agnostic of model
structure.  All functions are pure: callers get fresh arrays back.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, LengthMismatch, ParseError, ShapeMismatch

PROB_CLAMP = 1e-12
CHECKPOINT_MAGIC = b"FGS1"


@dataclass
class HeadModule:
    """Three fully connected layers, each followed by ReLU.

    The trailing ReLU can be swapped for identity via ``final_activation``;
    the default follows the three-ReLU stack, which makes outputs (and hence
    all pair scores) non-negative.  Ranking metrics are unaffected.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    final_activation: str = "relu"

    def __post_init__(self) -> None:
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ShapeMismatch("head must have exactly 3 layers")
        for i in range(3):
            if self.weights[i].shape[0] != self.biases[i].shape[0]:
                raise ShapeMismatch(f"layer {i}: weight rows != bias length")
            if i > 0 and self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeMismatch(f"layer {i}: input dim != layer {i - 1} output dim")
        if self.final_activation not in ("relu", "identity"):
            raise ValueError(f"unknown final_activation {self.final_activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[2].shape[0]

    def copy(self) -> "HeadModule":
        return HeadModule(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            final_activation=self.final_activation,
        )


def init_head(dim: int, seed: int, final_activation: str = "relu") -> HeadModule:
    """He-initialized head with square layers of width ``dim``.

    Biases start at a small positive constant: exact zeros would park dead
    rows precisely on the ReLU kink (breaking gradient checks) and invite
    dead units under the all-ReLU stack.
    """
    rng = np.random.default_rng(seed)
    # Xavier rather than He: five stacked ReLU layers (encoder + head)
    # otherwise inflate pair logits until the sigmoid saturates at init.
    scale = np.sqrt(1.0 / dim)
    weights = [rng.normal(0.0, scale, size=(dim, dim)) for _ in range(3)]
    biases = [np.full(dim, 0.01) for _ in range(3)]
    return HeadModule(weights=weights, biases=biases, final_activation=final_activation)


def head_forward(head: HeadModule, x: np.ndarray) -> np.ndarray:
    """Apply the head to one vector or to a batch of row vectors."""
    out, _ = _head_forward_cache(head, x)
    return out


def _head_forward_cache(head: HeadModule, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    batch = x[None, :] if squeeze else x
    if batch.ndim != 2 or batch.shape[1] != head.in_dim:
        raise DimensionMismatch(
            f"head expects input dim {head.in_dim}, got shape {x.shape}"
        )
    activations = [batch]
    masks = []
    h = batch
    for i in range(3):
        z = h @ head.weights[i].T + head.biases[i]
        if i < 2 or head.final_activation == "relu":
            mask = z > 0.0
            h = np.where(mask, z, 0.0)
        else:
            mask = np.ones_like(z, dtype=bool)
            h = z
        masks.append(mask)
        activations.append(h)
    out = activations[-1][0] if squeeze else activations[-1]
    return out, (activations, masks, squeeze)


def _backward_from_cache(
    head: HeadModule, cache, upstream: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    activations, masks, _ = cache
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * 3  # type: ignore[list-item]
    delta = upstream
    for i in reversed(range(3)):
        delta = delta * masks[i]
        grads[i] = (delta.T @ activations[i], delta.sum(axis=0))
        delta = delta @ head.weights[i]
    return grads, delta


def head_backward(
    head: HeadModule, x: np.ndarray, upstream: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Analytic gradients of the head composition at input ``x``.

    Returns per-layer (dW, db) plus the gradient with respect to ``x``;
    the ReLU subgradient at 0 is taken as 0.  ``upstream`` is the loss
    gradient at the head output (same shape as the output).
    """
    _, cache = _head_forward_cache(head, x)
    activations, masks, squeeze = cache
    up = np.asarray(upstream, dtype=np.float64)
    up = up[None, :] if squeeze else up
    if up.shape != activations[-1].shape:
        raise DimensionMismatch(
            f"upstream shape {upstream.shape} != output shape {activations[-1].shape}"
        )
    grads, delta = _backward_from_cache(head, (activations, masks, squeeze), up)
    dx = delta[0] if squeeze else delta
    return grads, dx


def bce_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with clamped probabilities."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise LengthMismatch(f"predictions {p.shape} vs labels {y.shape}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    learning_rate: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(
            learning_rate=self.learning_rate,
            step=self.step,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            first_moment={k: v.copy() for k, v in self.first_moment.items()},
            second_moment={k: v.copy() for k, v in self.second_moment.items()},
        )


def init_adam(params: dict[str, np.ndarray], learning_rate: float) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        first_moment={k: np.zeros_like(v) for k, v in params.items()},
        second_moment={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if set(params) != set(grads):
        raise ShapeMismatch(f"param/grad keys differ: {sorted(set(params) ^ set(grads))}")
    new_state = state.copy()
    new_state.step = state.step + 1
    t = new_state.step
    new_params: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad shape {g.shape} != param shape {p.shape}")
        m = state.beta1 * new_state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * new_state.second_moment[name] + (1.0 - state.beta2) * g * g
        new_state.first_moment[name] = m
        new_state.second_moment[name] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, new_state


# ---------------------------------------------------------------------------
# Gradient checking


def finite_diff_check(
    loss_fn: Callable[[dict[str, np.ndarray]], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error between central differences and analytic grads.

    Relative error per coordinate uses denominator max(|a|, |b|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        ana = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = loss_fn(params)
            flat[i] = original - h
            down = loss_fn(params)
            flat[i] = original
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(numeric), abs(ana[i]), 1e-8)
            worst = max(worst, abs(numeric - ana[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints: magic FGS1, then per tensor (sorted by name):
# u32 name length, name bytes, u32 rows, u32 cols, float64-LE row-major data.


def save_checkpoint(params: dict[str, np.ndarray], path: str | Path) -> None:
    """Write tensors in the length-prefixed binary format.

    1-D tensors are stored with rows=1; the fixed tensor vocabulary of the
    model layer restores their shapes on load.
    """
    chunks = [CHECKPOINT_MAGIC]
    for name in sorted(params):
        tensor = np.asarray(params[name], dtype=np.float64)
        if tensor.ndim == 1:
            tensor = tensor[None, :]
        if tensor.ndim != 2:
            raise ShapeMismatch(f"{name}: checkpoint tensors must be 1-D or 2-D")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<II", tensor.shape[0], tensor.shape[1]))
        chunks.append(tensor.astype("<f8").tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint; every tensor comes back 2-D."""
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    params: dict[str, np.ndarray] = {}
    offset = 4
    while offset < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        count = rows * cols
        data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
        offset += count * 8
        tensor = data.reshape(rows, cols)
        if not np.all(np.isfinite(tensor)):
            raise ParseError(f"{path}: tensor {name!r} has non-finite entries")
        params[name] = tensor
    return params

"""Dense networks on top of the autodiff tape.

Layers are affine transforms with an activation and an optional dropout mask
slot.  Dropout uses the inverted-scaling convention (masks are scaled by
1/(1-p) at sample time) so evaluation without masks needs no rescale.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, _sigmoid

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")

CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    """One affine layer: x @ w + b, then activation, then optional mask."""

    w: Tensor
    b: Tensor
    activation: str = "identity"
    act_scale: float = 1.0  # output multiplier; 4*sigmoid squashes into [0, 4)
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")

    @property
    def width(self) -> int:
        return self.w.data.shape[1]


class Network:
    """A stack of dense layers sharing one parameter list."""

    def __init__(self, layers: list[Layer]):
        for prev, nxt in zip(layers, layers[1:]):
            if prev.w.data.shape[1] != nxt.w.data.shape[0]:
                raise ValueError("consecutive layer dimensions disagree")
        for i, layer in enumerate(layers):
            if not (np.all(np.isfinite(layer.w.data)) and np.all(np.isfinite(layer.b.data))):
                raise ValueError(f"layer {i} has non-finite parameters")
        self.layers = layers

    # ------------------------------------------------------------ construction
    @classmethod
    def dense(
        cls,
        sizes: list[int],
        activations: list[str],
        rng: np.random.Generator,
        dropout: float | list[float] = 0.0,
        act_scale: float | list[float] = 1.0,
    ) -> "Network":
        """Build a fully-connected net; weight scale follows the activation."""
        n = len(sizes) - 1
        if len(activations) != n:
            raise ValueError("need one activation per layer")
        dropouts = [dropout] * n if isinstance(dropout, float) else list(dropout)
        scales = [act_scale] * n if isinstance(act_scale, (int, float)) else list(act_scale)
        layers = []
        for i in range(n):
            fan_in = sizes[i]
            gain = np.sqrt(2.0 / fan_in) if activations[i] == "relu" else np.sqrt(1.0 / fan_in)
            w = rng.normal(0.0, gain, size=(sizes[i], sizes[i + 1]))
            b = np.zeros(sizes[i + 1])
            layers.append(
                Layer(
                    Tensor(w, requires_grad=True),
                    Tensor(b, requires_grad=True),
                    activation=activations[i],
                    act_scale=float(scales[i]),
                    dropout=float(dropouts[i]),
                )
            )
        return cls(layers)

    # ------------------------------------------------------------ forward
    def forward(self, x, masks: list[np.ndarray | None] | None = None) -> Tensor:
        """Tape-recorded forward pass; `masks` multiply each layer's activation."""
        h = as_tensor(x)
        if h.data.ndim != 2 or h.data.shape[1] != self.layers[0].w.data.shape[0]:
            raise ValueError(
                f"input shape {h.data.shape} does not match first layer "
                f"({self.layers[0].w.data.shape[0]} inputs expected)"
            )
        if masks is not None and len(masks) != len(self.layers):
            raise ValueError("need one mask slot per layer")
        for i, layer in enumerate(self.layers):
            z = h @ layer.w + layer.b
            h = _activate(z, layer.activation, layer.act_scale)
            if masks is not None and masks[i] is not None:
                h = h * masks[i]
        return h

    def evaluate(self, x: np.ndarray, masks: list[np.ndarray | None] | None = None) -> np.ndarray:
        """Plain-numpy forward pass (no tape); used for greedy action picks."""
        h = np.asarray(x, dtype=np.float64)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        for i, layer in enumerate(self.layers):
            z = h @ layer.w.data + layer.b.data
            if layer.activation == "relu":
                h = np.maximum(z, 0.0)
            elif layer.activation == "tanh":
                h = np.tanh(z)
            elif layer.activation == "sigmoid":
                h = layer.act_scale * _sigmoid(z)
            else:
                h = z
            if masks is not None and masks[i] is not None:
                h = h * masks[i]
        return h[0] if squeeze else h

    # ------------------------------------------------------------ parameters
    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"layer{i}.weights", layer.w))
            out.append((f"layer{i}.bias", layer.b))
        return out

    def zero_grad(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()

    def get_params(self) -> list[np.ndarray]:
        return [p.data.copy() for _, p in self.parameters()]

    def set_params(self, values: list[np.ndarray]) -> None:
        for (_, p), v in zip(self.parameters(), values):
            if p.data.shape != v.shape:
                raise ValueError("parameter shape mismatch")
            p.data = v.copy()


def _activate(z: Tensor, activation: str, scale: float) -> Tensor:
    if activation == "relu":
        return z.relu()
    if activation == "tanh":
        return z.tanh()
    if activation == "sigmoid":
        out = z.sigmoid()
        return out if scale == 1.0 else out * scale
    return z


def sample_masks(net: Network, rng: np.random.Generator, rows: int = 1) -> list[np.ndarray | None]:
    """Bernoulli(1-p) masks scaled by 1/(1-p), one row per concurrent sample."""
    masks: list[np.ndarray | None] = []
    for layer in net.layers:
        if layer.dropout > 0.0:
            keep = rng.random((rows, layer.width)) >= layer.dropout
            masks.append(keep.astype(np.float64) / (1.0 - layer.dropout))
        else:
            masks.append(None)
    return masks


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


class SGD:
    def __init__(self, lr: float, clip_norm: float | None = None):
        if lr <= 0.0:
            raise ValueError("learning_rate must be > 0")
        self.lr = lr
        self.clip_norm = clip_norm

    def apply(self, net: Network, grads: list[np.ndarray]) -> None:
        grads = _checked(net, grads, self.clip_norm)
        for (_, p), g in zip(net.parameters(), grads):
            p.data -= self.lr * g


class Adam:
    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float | None = None,
    ):
        if lr <= 0.0:
            raise ValueError("learning_rate must be > 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None
        self._t = 0

    def apply(self, net: Network, grads: list[np.ndarray]) -> None:
        grads = _checked(net, grads, self.clip_norm)
        if self._m is None:
            self._m = [np.zeros_like(g) for g in grads]
            self._v = [np.zeros_like(g) for g in grads]
        self._t += 1
        b1t = 1.0 - self.beta1**self._t
        b2t = 1.0 - self.beta2**self._t
        for (_, p), g, m, v in zip(net.parameters(), grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def apply_gradients(optimizer, net: Network, grads: list[np.ndarray]) -> Network:
    """Update `net` in place by the optimizer rule and return it."""
    optimizer.apply(net, grads)
    return net


def _checked(net: Network, grads: list[np.ndarray], clip_norm: float | None) -> list[np.ndarray]:
    params = net.parameters()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameter list")
    for (name, p), g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for {name}")
    if clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if total > clip_norm:
            scale = clip_norm / total
            grads = [g * scale for g in grads]
    return grads


def clip_global_norm(grads: list[np.ndarray], clip_norm: float) -> list[np.ndarray]:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > clip_norm:
        scale = clip_norm / total
        return [g * scale for g in grads]
    return list(grads)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_network(net: Network, path, kind: str = "network", extras: dict | None = None) -> None:
    """Write a versioned npz checkpoint; float64 arrays round-trip bit-exactly."""
    extras = extras or {}
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "layers": [
            {
                "activation": layer.activation,
                "act_scale": layer.act_scale,
                "dropout": layer.dropout,
            }
            for layer in net.layers
        ],
        "extras": sorted(extras),
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, layer in enumerate(net.layers):
        arrays[f"layer{i}_w"] = layer.w.data
        arrays[f"layer{i}_b"] = layer.b.data
    for name, value in extras.items():
        arrays[f"extra_{name}"] = np.asarray(value, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_network(path) -> tuple[Network, str, dict]:
    """Read a checkpoint back: (network, kind, extras)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        layers = []
        for i, spec in enumerate(meta["layers"]):
            layers.append(
                Layer(
                    Tensor(data[f"layer{i}_w"], requires_grad=True),
                    Tensor(data[f"layer{i}_b"], requires_grad=True),
                    activation=spec["activation"],
                    act_scale=spec["act_scale"],
                    dropout=spec["dropout"],
                )
            )
        extras = {name: data[f"extra_{name}"] for name in meta["extras"]}
    return Network(layers), meta["kind"], extras

"""A small dense-network engine with hand-written backpropagation.

Shared by the tabular GAN and the intrusion classifier. Everything is
float64 numpy; no autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "softmax", "sigmoid", "identity")
LEAK = 0.2
PROB_FLOOR = 1e-12


class StaleCacheError(RuntimeError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAK * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        return softmax(z)
    if name == "sigmoid":
        return sigmoid(z)
    return z


def _activation_backward(name: str, z: np.ndarray, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    if name == "relu":
        return g * (z > 0)
    if name == "leaky_relu":
        return g * np.where(z > 0, 1.0, LEAK)
    if name == "tanh":
        return g * (1.0 - a * a)
    if name == "softmax":
        return a * (g - (g * a).sum(axis=1, keepdims=True))
    if name == "sigmoid":
        return g * a * (1.0 - a)
    return g


@dataclass
class Dense:
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ValueError("bias length must match weight columns")

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass
class Mlp:
    layers: list[Dense]
    seed: int | None = None
    version: int = 0

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.W.shape[1] != nxt.W.shape[0]:
                raise ValueError("layer dimensions do not chain")
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise ValueError("softmax is only allowed on the final layer")

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.W, layer.b))
        return out

    def copy(self) -> "Mlp":
        layers = [Dense(l.W.copy(), l.b.copy(), l.activation, l.dropout) for l in self.layers]
        return Mlp(layers, self.seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "layers": [
                {
                    "shape": list(l.W.shape),
                    "activation": l.activation,
                    "dropout": l.dropout,
                    "weights": l.W.ravel().tolist(),
                    "bias": l.b.tolist(),
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        layers = [
            Dense(
                np.asarray(l["weights"], dtype=np.float64).reshape(l["shape"]),
                np.asarray(l["bias"], dtype=np.float64),
                l["activation"],
                l["dropout"],
            )
            for l in d["layers"]
        ]
        return cls(layers, d.get("seed"))


def build_mlp(sizes, hidden_activation="relu", output_activation="identity",
              dropout=0.0, seed=0) -> Mlp:
    """Dense stack with He init for (leaky) ReLU layers and Xavier init elsewhere.

    ``dropout`` is applied after every hidden activation, never on the output.
    """
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(sizes) - 1
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == n_layers - 1
        act = output_activation if last else hidden_activation
        if act in ("relu", "leaky_relu"):
            std = np.sqrt(2.0 / fan_in)
        else:
            std = np.sqrt(2.0 / (fan_in + fan_out))
        W = rng.normal(0.0, std, size=(fan_in, fan_out))
        layers.append(Dense(W, np.zeros(fan_out), act, 0.0 if last else dropout))
    return Mlp(layers, seed)


@dataclass
class Cache:
    net_id: int
    version: int
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    masks: list = field(default_factory=list)


def forward(net: Mlp, batch: np.ndarray, training: bool = False, rng=None):
    """Run the batch through every layer; returns (output, cache).

    Inverted dropout: in training mode kept activations are scaled by 1/(1-p).
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"expected batch of width {net.in_dim}, got shape {x.shape}")
    cache = Cache(id(net), net.version)
    for layer in net.layers:
        cache.inputs.append(x)
        z = x @ layer.W + layer.b
        a = _activate(layer.activation, z)
        cache.pre.append(z)
        cache.post.append(a)
        mask = None
        if training and layer.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            mask = (rng.random(a.shape) >= layer.dropout) / (1.0 - layer.dropout)
            a = a * mask
        cache.masks.append(mask)
        x = a
    return x, cache


def backward(net: Mlp, cache: Cache, output_grad: np.ndarray, wrt_logits: bool = False):
    """Reverse-mode pass. Returns (parameter gradients in ``net.params()`` order, input gradient).

    With ``wrt_logits`` the incoming gradient is taken to be with respect to
    the final layer's pre-activation (useful with softmax + cross-entropy).
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise StaleCacheError("cache does not belong to the current network parameters")
    g = np.asarray(output_grad, dtype=np.float64)
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if cache.masks[i] is not None:
            g = g * cache.masks[i]
        if not (wrt_logits and i == len(net.layers) - 1):
            g = _activation_backward(layer.activation, cache.pre[i], cache.post[i], g)
        grads[2 * i] = cache.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.W.T
    return grads, g


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        if isinstance(params, Mlp):
            params = params.params()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)

    @classmethod
    def for_gan(cls, params) -> "AdamState":
        return cls.for_params(params, lr=2e-4, beta1=0.5, beta2=0.9)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update, applied in place. Accepts an Mlp or a parameter list."""
    net = params if isinstance(params, Mlp) else None
    plist = net.params() if net is not None else list(params)
    if len(plist) != len(grads) or len(plist) != len(state.m):
        raise ValueError("parameter, gradient and state counts differ")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(plist, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if net is not None:
        net.version += 1
    return params, state


@dataclass(frozen=True)
class FocalLossConfig:
    alpha: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("focal alpha must be positive")
        if self.gamma < 0:
            raise ValueError("focal gamma must be non-negative")


def _true_class_prob(probs, targets):
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape[0] != probs.shape[0]:
        raise ValueError("targets and probabilities differ in length")
    if targets.size and (targets.min() < 0 or targets.max() >= probs.shape[1]):
        raise ValueError("target id out of range")
    return probs, targets, probs[np.arange(targets.size), targets]


def focal_loss(probs, targets, cfg: FocalLossConfig = FocalLossConfig()):
    """Mean of -alpha (1 - p)^gamma log p over the batch, p the true-class probability.

    The gradient is with respect to the pre-softmax logits.
    """
    probs, targets, p = _true_class_prob(probs, targets)
    n = targets.size
    a, gm = cfg.alpha, cfg.gamma
    log_p = np.log(np.maximum(p, PROB_FLOOR))
    q = 1.0 - p
    loss = -a * q ** gm * log_p
    # d loss / d z_j = p * dL/dp * (onehot_j - p_j), with
    # p * dL/dp = a * (gamma q^(gamma-1) p log p - q^gamma).
    with np.errstate(divide="ignore", invalid="ignore"):
        focus = np.where(q > 0, gm * q ** (gm - 1.0) * p * log_p, 0.0) if gm > 0 else 0.0
    coef = a * (focus - q ** gm)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), targets] = 1.0
    grad = coef[:, None] * (onehot - probs) / n
    return float(loss.mean()), grad


def cross_entropy_loss(probs, targets):
    probs, targets, p = _true_class_prob(probs, targets)
    n = targets.size
    loss = -np.log(np.maximum(p, PROB_FLOOR))
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), targets] = 1.0
    return float(loss.mean()), (probs - onehot) / n

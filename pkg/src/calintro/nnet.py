"""Dense fully connected networks with hand-rolled reverse-mode gradients.

All numerics are float64. Networks are plain parameter containers; forward,
backward and the Adam update are free functions so that training loops stay
explicit and deterministic. Hidden layers use ReLU, the output layer is
linear.

``forward``/``backward`` operate on single vectors (the public contract);
``forward_batch``/``backward_batch`` do the same math on row-stacked batches
via matrix products and exist purely for throughput in the training loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError


@dataclass
class DenseNet:
    """MLP parameters. weights[l] has shape (layer_sizes[l+1], layer_sizes[l])."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"  # hidden-layer activation; output is identity

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class Gradients:
    """Parameter gradients, shape-congruent with the owning DenseNet."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]
    d_input: np.ndarray | None = None


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_net(layer_sizes: list[int], seed: int) -> DenseNet:
    """Deterministically initialize an MLP.

    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)); biases start at
    zero so a zero input maps to a zero output.
    """
    if len(layer_sizes) < 2:
        raise ConfigError(f"need at least input and output layer, got {layer_sizes}")
    if any(int(s) < 1 for s in layer_sizes):
        raise ConfigError(f"layer sizes must be positive, got {layer_sizes}")
    sizes = [int(s) for s in layer_sizes]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(sizes, weights, biases)


def _check_input(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.in_dim,):
        raise ShapeError(f"input shape {x.shape} does not match net input {net.in_dim}")
    return x


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = _check_input(net, x)
    h = x
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = w @ h + b
        h = a if l == last else np.maximum(a, 0.0)
    return h


def forward_trace(net: DenseNet, x: np.ndarray):
    """Forward pass keeping per-layer pre-activations and activations.

    Returns (output, pre_acts, acts) where acts[l] is the input fed into
    layer l (acts[0] == x).
    """
    x = _check_input(net, x)
    pre_acts: list[np.ndarray] = []
    acts: list[np.ndarray] = [x]
    h = x
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = w @ h + b
        pre_acts.append(a)
        h = a if l == last else np.maximum(a, 0.0)
        if l != last:
            acts.append(h)
    return h, pre_acts, acts


def backward(net: DenseNet, x: np.ndarray, upstream_grad: np.ndarray) -> Gradients:
    """Gradient of (upstream_grad . forward(net, x)) w.r.t. parameters and x."""
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != (net.out_dim,):
        raise ShapeError(
            f"upstream shape {upstream_grad.shape} does not match output {net.out_dim}"
        )
    _, pre_acts, acts = forward_trace(net, x)
    d_weights = [np.empty(0)] * net.n_layers
    d_biases = [np.empty(0)] * net.n_layers
    g = upstream_grad
    for l in range(net.n_layers - 1, -1, -1):
        d_weights[l] = np.outer(g, acts[l])
        d_biases[l] = g.copy()
        g = net.weights[l].T @ g
        if l > 0:
            g = g * (pre_acts[l - 1] > 0)
    return Gradients(d_weights, d_biases, d_input=g)


def forward_batch(net: DenseNet, xs: np.ndarray):
    """Row-stacked forward pass: xs is (N, in_dim). Returns (out, cache)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != net.in_dim:
        raise ShapeError(f"batch shape {xs.shape} does not match net input {net.in_dim}")
    pre_acts: list[np.ndarray] = []
    acts: list[np.ndarray] = [xs]
    h = xs
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = h @ w.T + b
        pre_acts.append(a)
        h = a if l == last else np.maximum(a, 0.0)
        if l != last:
            acts.append(h)
    return h, (pre_acts, acts)


def backward_batch(net: DenseNet, cache, upstream: np.ndarray) -> Gradients:
    """Gradients summed over the batch; upstream is (N, out_dim)."""
    pre_acts, acts = cache
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != pre_acts[-1].shape:
        raise ShapeError(
            f"upstream shape {upstream.shape} does not match output {pre_acts[-1].shape}"
        )
    d_weights = [np.empty(0)] * net.n_layers
    d_biases = [np.empty(0)] * net.n_layers
    g = upstream
    for l in range(net.n_layers - 1, -1, -1):
        d_weights[l] = g.T @ acts[l]
        d_biases[l] = g.sum(axis=0)
        g = g @ net.weights[l]
        if l > 0:
            g = g * (pre_acts[l - 1] > 0)
    return Gradients(d_weights, d_biases, d_input=g)


def init_adam(net: DenseNet, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> AdamState:
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    return AdamState(
        m_weights=[np.zeros_like(w) for w in net.weights],
        v_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_biases=[np.zeros_like(b) for b in net.biases],
        lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
    )


def adam_update_arrays(params: list[np.ndarray], grads: list[np.ndarray],
                       m: list[np.ndarray], v: list[np.ndarray], t: int,
                       lr: float, beta1: float, beta2: float, epsilon: float) -> None:
    """One bias-corrected Adam step, in place, on a flat list of arrays.

    Uses the sqrt(v_hat) + epsilon denominator; t is the post-increment step
    count (1 on the first update).
    """
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, mi, vi in zip(params, grads, m, v):
        mi *= beta1
        mi += (1.0 - beta1) * g
        vi *= beta2
        vi += (1.0 - beta2) * np.square(g)
        p -= lr * (mi / c1) / (np.sqrt(vi / c2) + epsilon)


def _check_congruent(net: DenseNet, grads: Gradients) -> None:
    for l, (w, dw) in enumerate(zip(net.weights, grads.d_weights)):
        if w.shape != dw.shape:
            raise ShapeError(f"weight gradient {l} has shape {dw.shape}, expected {w.shape}")
    for l, (b, db) in enumerate(zip(net.biases, grads.d_biases)):
        if b.shape != db.shape:
            raise ShapeError(f"bias gradient {l} has shape {db.shape}, expected {b.shape}")


def adam_step_inplace(net: DenseNet, grads: Gradients, state: AdamState) -> None:
    """Mutating Adam update used by the training loops."""
    _check_congruent(net, grads)
    for g in grads.d_weights + grads.d_biases:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient entry; aborting update")
    state.step_count += 1
    adam_update_arrays(net.weights, grads.d_weights, state.m_weights, state.v_weights,
                       state.step_count, state.lr, state.beta1, state.beta2, state.epsilon)
    adam_update_arrays(net.biases, grads.d_biases, state.m_biases, state.v_biases,
                       state.step_count, state.lr, state.beta1, state.beta2, state.epsilon)


def adam_step(net: DenseNet, grads: Gradients, state: AdamState) -> tuple[DenseNet, AdamState]:
    """Functional Adam update: returns fresh (net, state), inputs untouched."""
    net2 = net.copy()
    state2 = AdamState(
        m_weights=[m.copy() for m in state.m_weights],
        v_weights=[v.copy() for v in state.v_weights],
        m_biases=[m.copy() for m in state.m_biases],
        v_biases=[v.copy() for v in state.v_biases],
        step_count=state.step_count,
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon,
    )
    adam_step_inplace(net2, grads, state2)
    return net2, state2

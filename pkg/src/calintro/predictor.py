"""Interval-calibrated prediction on latent features.

Two MLP heads share the latent input: f produces per-class logits y_hat, g
produces raw widths mapped through softplus to non-negative half-widths
delta, so [y_hat - delta, y_hat + delta] is the per-class prediction
interval. Training alternates two phases per round:

  1. width phase:  update g on a smooth surrogate of the empirical interval
     calibration error  sum_k |alpha - coverage_k|,  with f frozen;
  2. logit phase:  update f on the two-sided hinge objective
     sum_k mean_i [max(0, (y-d)-t+tau) + max(0, t-(y+d)+tau)],  with the
     widths frozen.

Targets are smoothed logit labels (+1 true class, -2 elsewhere). A plain
cross-entropy head with the same architecture serves as the comparison
baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .errors import ConfigError, NumericalError, ShapeError
from .nnet import DenseNet, Gradients

HIDDEN_SIZES = (64, 128, 256, 64)


@dataclass
class CalibConfig:
    alpha: float = 0.7
    tau: float = 0.05
    lr_f: float = 3e-4
    lr_g: float = 1e-4
    epochs: int = 600          # maximum alternation rounds
    batch: int = 64
    s: float = 0.1             # surrogate sigmoid temperature
    seed: int = 0
    hidden: tuple[int, ...] = HIDDEN_SIZES
    tol: float = 1e-4          # convergence threshold on per-round improvement
    patience: int = 10

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.tau < 0.0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.s <= 0.0:
            raise ConfigError(f"surrogate temperature must be positive, got {self.s}")


@dataclass
class BaselineConfig:
    lr: float = 3e-4
    epochs: int = 150
    batch: int = 64
    seed: int = 0
    hidden: tuple[int, ...] = HIDDEN_SIZES


@dataclass
class PredictionInterval:
    y_hat: np.ndarray
    delta: np.ndarray  # non-negative half-widths


@dataclass
class SoftmaxDist:
    rho: np.ndarray
    entropy: float


@dataclass
class CalibrationError:
    per_class: np.ndarray   # |alpha - coverage_k|
    coverage: np.ndarray    # empirical per-class coverage
    total: float            # sum over classes


@dataclass
class TrainedPredictor:
    f: DenseNet
    g: DenseNet
    config: CalibConfig
    train_log: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def logits(self, latents: np.ndarray) -> np.ndarray:
        out, _ = nnet.forward_batch(self.f, np.atleast_2d(latents))
        return out

    def intervals(self, latents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = np.atleast_2d(latents)
        y_hat, _ = nnet.forward_batch(self.f, z)
        raw, _ = nnet.forward_batch(self.g, z)
        return y_hat, softplus(raw)


@dataclass
class BaselinePredictor:
    net: DenseNet
    config: BaselineConfig
    train_log: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def logits(self, latents: np.ndarray) -> np.ndarray:
        out, _ = nnet.forward_batch(self.net, np.atleast_2d(latents))
        return out


def softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax_batch(y: np.ndarray) -> np.ndarray:
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    e = np.exp(y - y.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def entropy_of(rho: np.ndarray) -> np.ndarray:
    rho = np.atleast_2d(rho)
    terms = np.where(rho > 0, rho * np.log(np.where(rho > 0, rho, 1.0)), 0.0)
    return -terms.sum(axis=1)


def softmax_with_entropy(y_hat: np.ndarray) -> SoftmaxDist:
    """Max-subtracted stable softmax and its natural-log entropy."""
    rho = softmax_batch(y_hat)[0]
    return SoftmaxDist(rho=rho, entropy=float(entropy_of(rho)[0]))


def predict_interval(pred: TrainedPredictor, z: np.ndarray) -> PredictionInterval:
    z = np.asarray(z, dtype=np.float64)
    y_hat = nnet.forward(pred.f, z)
    delta = softplus(nnet.forward(pred.g, z))
    return PredictionInterval(y_hat=y_hat, delta=delta)


def coverage_matrix(y_hat: np.ndarray, delta: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-class coverage of targets by [y_hat - delta, y_hat + delta] (inclusive)."""
    lo = y_hat - delta
    hi = y_hat + delta
    inside = (targets >= lo) & (targets <= hi)
    return inside.mean(axis=0)


def hard_calibration_error(preds: list[PredictionInterval], labels,
                           alpha: float) -> CalibrationError:
    """Exact indicator-counting calibration error, per class and summed."""
    if len(preds) == 0:
        raise ConfigError("empty prediction list")
    if len(preds) != len(labels):
        raise ShapeError(f"{len(preds)} predictions vs {len(labels)} labels")
    y_hat = np.stack([p.y_hat for p in preds])
    delta = np.stack([p.delta for p in preds])
    targets = np.stack([np.asarray(l, dtype=np.float64) for l in labels])
    cov = coverage_matrix(y_hat, delta, targets)
    per_class = np.abs(alpha - cov)
    return CalibrationError(per_class=per_class, coverage=cov, total=float(per_class.sum()))


def hard_calibration_error_arrays(y_hat: np.ndarray, delta: np.ndarray,
                                  targets: np.ndarray, alpha: float) -> CalibrationError:
    if len(y_hat) == 0:
        raise ConfigError("empty input")
    cov = coverage_matrix(y_hat, delta, targets)
    per_class = np.abs(alpha - cov)
    return CalibrationError(per_class=per_class, coverage=cov, total=float(per_class.sum()))


def _soft_coverage(y_hat, delta, targets, s):
    lo_sig = sigmoid((targets - (y_hat - delta)) / s)
    hi_sig = sigmoid(((y_hat + delta) - targets) / s)
    return lo_sig, hi_sig, lo_sig * hi_sig


def soft_calibration_loss(latents: np.ndarray, labels: np.ndarray, f: DenseNet,
                          g: DenseNet, alpha: float, s: float) -> float:
    """Differentiable surrogate for the interval calibration error.

    The inside-interval indicator is replaced by the product of two logistic
    sigmoids at temperature s; the hard count keeps a zero gradient almost
    everywhere, the surrogate does not.
    """
    loss, _ = soft_calibration_grads(latents, labels, f, g, alpha, s, want_grads=False)
    return loss


def soft_calibration_grads(latents: np.ndarray, labels: np.ndarray, f: DenseNet,
                           g: DenseNet, alpha: float, s: float,
                           want_grads: bool = True):
    """Surrogate loss and its gradient w.r.t. g's parameters (f held fixed)."""
    z = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    n = len(z)
    y_hat, _ = nnet.forward_batch(f, z)
    raw, g_cache = nnet.forward_batch(g, z)
    delta = softplus(raw)
    lo_sig, hi_sig, soft_inside = _soft_coverage(y_hat, delta, targets, s)
    mean_cov = soft_inside.mean(axis=0)
    resid = alpha - mean_cov
    loss = float(np.abs(resid).sum())
    if not want_grads:
        return loss, None
    d_cov = -np.sign(resid)                      # d|alpha - c|/dc, sign(0) = 0
    d_inside = d_cov[None, :] / n
    d_delta = d_inside * soft_inside * ((1.0 - lo_sig) + (1.0 - hi_sig)) / s
    d_raw = d_delta * sigmoid(raw)               # softplus'
    grads = nnet.backward_batch(g, g_cache, d_raw)
    return loss, grads


def hinge_from_arrays(y_hat: np.ndarray, delta: np.ndarray, targets: np.ndarray,
                      tau: float) -> float:
    lower = np.maximum(0.0, (y_hat - delta) - targets + tau)
    upper = np.maximum(0.0, targets - (y_hat + delta) + tau)
    return float((lower + upper).mean(axis=0).sum())


def hinge_loss(latents: np.ndarray, labels: np.ndarray, f: DenseNet, g: DenseNet,
               tau: float) -> float:
    """Two-sided hinge objective; widths are treated as constants."""
    loss, _ = hinge_grads(latents, labels, f, g, tau, want_grads=False)
    return loss


def hinge_grads(latents: np.ndarray, labels: np.ndarray, f: DenseNet, g: DenseNet,
                tau: float, want_grads: bool = True):
    """Hinge loss and its gradient w.r.t. f's parameters (widths frozen)."""
    z = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    n = len(z)
    y_hat, f_cache = nnet.forward_batch(f, z)
    raw, _ = nnet.forward_batch(g, z)
    delta = softplus(raw)
    lower = (y_hat - delta) - targets + tau
    upper = targets - (y_hat + delta) + tau
    loss = float((np.maximum(0.0, lower) + np.maximum(0.0, upper)).mean(axis=0).sum())
    if not want_grads:
        return loss, None
    d_yhat = ((lower > 0).astype(np.float64) - (upper > 0).astype(np.float64)) / n
    grads = nnet.backward_batch(f, f_cache, d_yhat)
    return loss, grads


def cross_entropy_grads(latents: np.ndarray, class_ids: np.ndarray, net: DenseNet,
                        want_grads: bool = True):
    z = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    t = np.asarray(class_ids, dtype=int)
    n = len(z)
    logits, cache = nnet.forward_batch(net, z)
    rho = softmax_batch(logits)
    loss = float(-np.mean(np.log(rho[np.arange(n), t])))
    if not want_grads:
        return loss, None
    d_logits = rho.copy()
    d_logits[np.arange(n), t] -= 1.0
    d_logits /= n
    return loss, nnet.backward_batch(net, cache, d_logits)


def cross_entropy_loss(latents, class_ids, net) -> float:
    loss, _ = cross_entropy_grads(latents, class_ids, net, want_grads=False)
    return loss


def _epoch_batches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


def width_phase_epoch(f: DenseNet, g: DenseNet, latents, labels, config: CalibConfig,
                      adam_g: nnet.AdamState, rng: np.random.Generator) -> None:
    """One epoch of g-updates on the calibration surrogate; f untouched."""
    for idx in _epoch_batches(len(latents), config.batch, rng):
        loss, grads = soft_calibration_grads(latents[idx], labels[idx], f, g,
                                             config.alpha, config.s)
        if not np.isfinite(loss):
            raise NumericalError(f"calibration phase diverged: loss={loss}")
        nnet.adam_step_inplace(g, grads, adam_g)


def logit_phase_epoch(f: DenseNet, g: DenseNet, latents, labels, config: CalibConfig,
                      adam_f: nnet.AdamState, rng: np.random.Generator) -> None:
    """One epoch of f-updates on the hinge objective; g untouched."""
    for idx in _epoch_batches(len(latents), config.batch, rng):
        loss, grads = hinge_grads(latents[idx], labels[idx], f, g, config.tau)
        if not np.isfinite(loss):
            raise NumericalError(f"hinge phase diverged: loss={loss}")
        nnet.adam_step_inplace(f, grads, adam_f)


def train_alternating(latents: np.ndarray, labels: np.ndarray,
                      config: CalibConfig) -> TrainedPredictor:
    """Alternating width/logit optimization; deterministic given config.seed.

    labels are logit targets (N, K). Stops at config.epochs rounds or once
    both the hard calibration error and the hinge loss improve by less than
    config.tol for config.patience consecutive rounds.
    """
    z = np.asarray(latents, dtype=np.float64)
    targets = np.asarray(labels, dtype=np.float64)
    if z.ndim != 2 or targets.ndim != 2 or len(z) != len(targets):
        raise ShapeError(f"latents {z.shape} and labels {targets.shape} must be aligned 2-D")
    k = targets.shape[1]
    if len(z) < 2 * k:
        raise ConfigError(f"need at least {2 * k} samples for {k} classes, got {len(z)}")
    if not np.all(np.isfinite(z)):
        raise NumericalError("latents contain non-finite values")

    d = z.shape[1]
    f = nnet.init_net([d, *config.hidden, k], seed=config.seed)
    g = nnet.init_net([d, *config.hidden, k], seed=config.seed + 1)
    adam_f = nnet.init_adam(f, config.lr_f)
    adam_g = nnet.init_adam(g, config.lr_g)
    rng = np.random.default_rng(config.seed + 2)
    true_class = targets.argmax(axis=1)

    log: list[dict] = []
    prev_hard, prev_hinge = np.inf, np.inf
    calm_rounds = 0
    for rnd in range(config.epochs):
        width_phase_epoch(f, g, z, targets, config, adam_g, rng)
        logit_phase_epoch(f, g, z, targets, config, adam_f, rng)

        y_hat, _ = nnet.forward_batch(f, z)
        raw, _ = nnet.forward_batch(g, z)
        delta = softplus(raw)
        hard = hard_calibration_error_arrays(y_hat, delta, targets, config.alpha)
        hinge = hinge_from_arrays(y_hat, delta, targets, config.tau)
        acc = float((y_hat.argmax(axis=1) == true_class).mean())
        log.append({"epoch": rnd, "hinge": hinge, "hard_calib_error": hard.total,
                    "accuracy": acc})

        if prev_hard - hard.total < config.tol and prev_hinge - hinge < config.tol:
            calm_rounds += 1
        else:
            calm_rounds = 0
        prev_hard, prev_hinge = hard.total, hinge
        if calm_rounds >= config.patience:
            break

    return TrainedPredictor(f=f, g=g, config=config, train_log=log)


def train_ce_baseline(latents: np.ndarray, class_ids: np.ndarray,
                      config: BaselineConfig) -> BaselinePredictor:
    """Cross-entropy comparison head with the same architecture as f."""
    z = np.asarray(latents, dtype=np.float64)
    t = np.asarray(class_ids, dtype=int)
    if len(z) != len(t):
        raise ShapeError(f"latents {z.shape} and class ids {t.shape} must be aligned")
    k = int(t.max()) + 1
    net = nnet.init_net([z.shape[1], *config.hidden, k], seed=config.seed)
    adam = nnet.init_adam(net, config.lr)
    rng = np.random.default_rng(config.seed + 2)
    log: list[dict] = []
    for epoch in range(config.epochs):
        for idx in _epoch_batches(len(z), config.batch, rng):
            loss, grads = cross_entropy_grads(z[idx], t[idx], net)
            if not np.isfinite(loss):
                raise NumericalError(f"baseline training diverged: loss={loss}")
            nnet.adam_step_inplace(net, grads, adam)
        full_loss = cross_entropy_loss(z, t, net)
        logits, _ = nnet.forward_batch(net, z)
        acc = float((logits.argmax(axis=1) == t).mean())
        log.append({"epoch": epoch, "cross_entropy": full_loss, "accuracy": acc})
    return BaselinePredictor(net=net, config=config, train_log=log)


def training_log_csv(log: list[dict]) -> str:
    """Render a training log as CSV; column order follows the first row."""
    if not log:
        return ""
    fields = list(log[0].keys())
    lines = [",".join(fields)]
    for row in log:
        cells = []
        for name in fields:
            v = row[name]
            cells.append(str(v) if isinstance(v, int) else format(float(v), ".17g"))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"

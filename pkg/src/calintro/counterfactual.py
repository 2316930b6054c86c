"""Counterfactual evidence generation by gradient search in latent space.

Starting from an anchor latent z_t, minimize

    eta1 * ||z_t - z||^2  -  eta2 * mean_k(delta_k(z))  +/-  eta3 * H(rho(z))

with Adam. The first term keeps the evidence semantically close to the
anchor, the second rewards wide (well-covered) intervals, the third steers
prediction entropy down (sign `minimize`) or up (`maximize`). The width head
g is vector-valued, so its contribution is aggregated as the mean over the
K per-class half-widths. The best-objective iterate is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nnet, vae as vae_mod
from .errors import ConfigError, ShapeError
from .predictor import TrainedPredictor, sigmoid, softmax_batch, softplus

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2
_SSIM_WINDOW = 8


@dataclass
class CfRequest:
    z_t: np.ndarray
    eta1: float = 0.1
    eta2: float = 0.5
    eta3: float = 0.2
    entropy_sign: str = "minimize"  # or "maximize"
    max_iters: int = 300
    lr: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.eta1 < 0 or self.eta2 < 0 or self.eta3 < 0:
            raise ConfigError(f"etas must be non-negative, got "
                              f"({self.eta1}, {self.eta2}, {self.eta3})")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.entropy_sign not in ("minimize", "maximize"):
            raise ConfigError(f"entropy_sign must be minimize or maximize, "
                              f"got {self.entropy_sign!r}")
        self.z_t = np.asarray(self.z_t, dtype=np.float64)


@dataclass
class EvidenceResult:
    z_hat: np.ndarray
    image: np.ndarray           # decoded H x W x 3
    rho: np.ndarray
    entropy: float
    predicted: int
    correct: bool | None        # vs. ground truth when known
    ae_z: float
    ssim: float
    objective_trace: list[float] = field(default_factory=list)
    eta1: float = 0.0


def latent_ae(z_t: np.ndarray, z_hat: np.ndarray) -> float:
    """Average per-dimension L1 distance between two latent vectors."""
    a = np.asarray(z_t, dtype=np.float64)
    b = np.asarray(z_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"latent shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def _entropy_and_grad(y_hat: np.ndarray):
    rho = softmax_batch(y_hat)[0]
    logs = np.where(rho > 0, np.log(np.where(rho > 0, rho, 1.0)), 0.0)
    h = float(-(rho * logs).sum())
    d_yhat = -rho * (logs + h)
    return h, rho, d_yhat


def cf_objective(z: np.ndarray, req: CfRequest, f: nnet.DenseNet,
                 g: nnet.DenseNet) -> float:
    value, _ = cf_objective_grad(z, req, f, g, want_grad=False)
    return value


def cf_objective_grad(z: np.ndarray, req: CfRequest, f: nnet.DenseNet,
                      g: nnet.DenseNet, want_grad: bool = True):
    """Objective value and its gradient w.r.t. the latent point z."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != req.z_t.shape:
        raise ShapeError(f"z shape {z.shape} does not match anchor {req.z_t.shape}")
    sign = 1.0 if req.entropy_sign == "minimize" else -1.0

    diff = z - req.z_t
    dist = float(diff @ diff)
    y_hat = nnet.forward(f, z)
    g_raw = nnet.forward(g, z)
    delta = softplus(g_raw)
    h, _, dh_dyhat = _entropy_and_grad(y_hat)
    k = len(delta)
    value = req.eta1 * dist - req.eta2 * float(delta.mean()) + sign * req.eta3 * h
    if not want_grad:
        return value, None

    dz = 2.0 * req.eta1 * diff
    dz += nnet.backward(g, z, -req.eta2 * sigmoid(g_raw) / k).d_input
    dz += nnet.backward(f, z, sign * req.eta3 * dh_dyhat).d_input
    return value, dz


def generate_evidence(req: CfRequest, pred: TrainedPredictor, vae: vae_mod.VaeModel,
                      truth: int | None = None) -> EvidenceResult:
    """Run the latent search and package the decoded evidence.

    Adam from z = z_t, stopping after max_iters or once the best objective
    has improved by less than 1e-6 over 20 iterations; the best-objective
    iterate wins (the anchor itself competes, so a fruitless search returns
    z_t unchanged). Deterministic: the search draws no random numbers.
    """
    if req.z_t.shape != (vae.d,):
        raise ShapeError(f"anchor has shape {req.z_t.shape}, VAE latent dim is {vae.d}")
    z = req.z_t.copy()
    m = [np.zeros_like(z)]
    v = [np.zeros_like(z)]

    value, grad = cf_objective_grad(z, req, pred.f, pred.g)
    trace = [value]
    best_value, best_z = value, z.copy()
    last_improve = 0
    for it in range(1, req.max_iters + 1):
        nnet.adam_update_arrays([z], [grad], m, v, it, req.lr, 0.9, 0.999, 1e-8)
        value, grad = cf_objective_grad(z, req, pred.f, pred.g)
        if not np.isfinite(value):
            raise ConfigError(f"objective went non-finite at iteration {it}; trace={trace}")
        trace.append(value)
        if value < best_value - 1e-6:
            best_value, best_z = value, z.copy()
            last_improve = it
        elif value < best_value:
            best_value, best_z = value, z.copy()
        if it - last_improve >= 20:
            break

    image = vae_mod.decode(vae, best_z)
    anchor_image = vae_mod.decode(vae, req.z_t)
    y_hat = nnet.forward(pred.f, best_z)
    h, rho, _ = _entropy_and_grad(y_hat)
    predicted = int(np.argmax(y_hat))
    return EvidenceResult(
        z_hat=best_z,
        image=image,
        rho=rho,
        entropy=h,
        predicted=predicted,
        correct=None if truth is None else bool(predicted == truth),
        ae_z=latent_ae(req.z_t, best_z),
        ssim=ssim(anchor_image, image),
        objective_trace=trace,
        eta1=req.eta1,
    )


def sweep_eta1(z_t: np.ndarray, eta1_grid, eta2: float, eta3: float,
               pred: TrainedPredictor, vae: vae_mod.VaeModel,
               entropy_sign: str = "minimize", max_iters: int = 300,
               lr: float = 0.05, seed: int = 0,
               truth: int | None = None) -> list[EvidenceResult]:
    """One evidence per anchor-weight value, ordered like the grid."""
    grid = [float(e) for e in eta1_grid]
    if not grid:
        raise ConfigError("eta1 grid is empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"eta1 grid must be ascending, got {grid}")
    results = []
    for e1 in grid:
        req = CfRequest(z_t=z_t, eta1=e1, eta2=eta2, eta3=eta3,
                        entropy_sign=entropy_sign, max_iters=max_iters,
                        lr=lr, seed=seed)
        results.append(generate_evidence(req, pred, vae, truth=truth))
    return results


def _ssim_channel(c1: np.ndarray, c2: np.ndarray, win: int) -> float:
    h, w = c1.shape
    if h < win or w < win:
        windows1 = c1.reshape(1, 1, h, w)
        windows2 = c2.reshape(1, 1, h, w)
    else:
        windows1 = sliding_window_view(c1, (win, win))
        windows2 = sliding_window_view(c2, (win, win))
    mu1 = windows1.mean(axis=(-1, -2))
    mu2 = windows2.mean(axis=(-1, -2))
    sq1 = (windows1 * windows1).mean(axis=(-1, -2))
    sq2 = (windows2 * windows2).mean(axis=(-1, -2))
    cross = (windows1 * windows2).mean(axis=(-1, -2))
    var1 = sq1 - mu1 * mu1
    var2 = sq2 - mu2 * mu2
    cov = cross - mu1 * mu2
    num = (2.0 * mu1 * mu2 + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu1 * mu1 + mu2 * mu2 + _SSIM_C1) * (var1 + var2 + _SSIM_C2)
    return float((num / den).mean())


def ssim(x1: np.ndarray, x2: np.ndarray, window: int = _SSIM_WINDOW) -> float:
    """Channel-averaged windowed structural similarity on dynamic range 1.

    Uniform window x window sliding windows with stride 1 (population
    variance); per-window luminance-contrast-structure product, averaged over
    windows and channels. Images smaller than the window fall back to one
    global window.
    """
    a = np.asarray(x1, dtype=np.float64)
    b = np.asarray(x2, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    vals = [_ssim_channel(a[:, :, c], b[:, :, c], window) for c in range(a.shape[2])]
    return float(np.mean(vals))

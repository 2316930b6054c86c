"""Shared test oracles: finite differences and brute-force metric references."""

import numpy as np

from calintro import nnet


def fd_rel_error(analytic: float, fd: float, scale: float) -> float:
    """Per-entry mismatch, relative to the pair or to the gradient's scale.

    Entries orders of magnitude below the largest gradient entry are measured
    against that scale instead, so central-difference round-off on negligible
    components does not register as a gradient defect.
    """
    return abs(fd - analytic) / max(abs(fd) + abs(analytic), 1e-4 * scale, 1e-8)


def grad_scale(grads: nnet.Gradients) -> float:
    mags = [np.abs(a).max() for a in grads.d_weights + grads.d_biases if a.size]
    return max(max(mags), 1e-8)


def max_param_fd_error(net: nnet.DenseNet, grads: nnet.Gradients, loss_fn,
                       rng: np.random.Generator, h: float = 1e-5,
                       per_array: int = 30) -> float:
    """Worst relative error between analytic parameter gradients and central
    finite differences of loss_fn(), probing up to per_array entries per array."""
    scale = grad_scale(grads)
    worst = 0.0
    for l in range(net.n_layers):
        pairs = [(net.weights[l], grads.d_weights[l]),
                 (net.biases[l], grads.d_biases[l])]
        for arr, garr in pairs:
            flat = arr.reshape(-1)
            gflat = garr.reshape(-1)
            take = min(per_array, len(flat))
            for i in rng.choice(len(flat), size=take, replace=False):
                orig = flat[i]
                flat[i] = orig + h
                lp = loss_fn()
                flat[i] = orig - h
                lm = loss_fn()
                flat[i] = orig
                worst = max(worst, fd_rel_error(gflat[i], (lp - lm) / (2 * h), scale))
    return worst


def max_vector_fd_error(x: np.ndarray, grad: np.ndarray, value_fn, h: float = 1e-5) -> float:
    """Worst relative error for a gradient w.r.t. a flat vector x."""
    scale = max(np.abs(grad).max(), 1e-8)
    worst = 0.0
    for i in range(len(x)):
        orig = x[i]
        x[i] = orig + h
        vp = value_fn()
        x[i] = orig - h
        vm = value_fn()
        x[i] = orig
        worst = max(worst, fd_rel_error(grad[i], (vp - vm) / (2 * h), scale))
    return worst


def brute_force_binary_auc(scores, positives) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), by exhaustive pairing."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    pos = scores[positives]
    neg = scores[~positives]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def random_small_net(rng: np.random.Generator, in_dim=None, out_dim=None) -> nnet.DenseNet:
    """A random net with <= 3 layers and widths <= 8, for gradient checking."""
    n_hidden = int(rng.integers(0, 3))
    sizes = [in_dim or int(rng.integers(2, 9))]
    sizes += [int(rng.integers(2, 9)) for _ in range(n_hidden)]
    sizes.append(out_dim or int(rng.integers(1, 9)))
    net = nnet.init_net(sizes, seed=int(rng.integers(0, 2 ** 31)))
    # shift biases so ReLU kinks sit away from finite-difference probes
    for b in net.biases[:-1]:
        b += rng.uniform(0.05, 0.2, size=b.shape)
    return net

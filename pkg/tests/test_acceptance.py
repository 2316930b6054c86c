"""Acceptance suite: one test per criterion, each printing a PASS line.

The expensive fixtures (dataset, two autoencoders, predictor, baseline) are
session-scoped and shared; see conftest.STACK for the fixed-seed desk-scale
configuration.
"""

import time
import warnings

import numpy as np
import pytest

from calintro import data, nnet, vae
from calintro import evaluation as ev
from calintro import predictor as pr
from calintro.checkpoint import load_checkpoint, save_checkpoint
from calintro.counterfactual import CfRequest, cf_objective_grad, generate_evidence, ssim, sweep_eta1
from conftest import STACK

from helpers import (brute_force_binary_auc, max_param_fd_error,
                     max_vector_fd_error, random_small_net)


def _ok(name, detail=""):
    print(f"\n[acceptance] {name}: PASS {detail}")


def test_gradient_fidelity():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    checked = 0
    worst = 0.0

    for _ in range(14):  # forward/backward pairing
        net = random_small_net(rng)
        x = rng.normal(size=net.in_dim)
        upstream = rng.normal(size=net.out_dim)
        grads = nnet.backward(net, x, upstream)
        worst = max(worst, max_param_fd_error(
            net, grads, lambda: float(upstream @ nnet.forward(net, x)), rng,
            per_array=12))
        checked += 1

    for trial in range(12):  # surrogate calibration loss w.r.t. the width head
        f = random_small_net(rng, in_dim=4, out_dim=3)
        g = random_small_net(rng, in_dim=4, out_dim=3)
        z = rng.normal(size=(5, 4))
        labels = np.full((5, 3), -2.0)
        labels[np.arange(5), rng.integers(3, size=5)] = 1.0
        _, grads = pr.soft_calibration_grads(z, labels, f, g, 0.7, 0.1)
        worst = max(worst, max_param_fd_error(
            g, grads,
            lambda: pr.soft_calibration_grads(z, labels, f, g, 0.7, 0.1,
                                              want_grads=False)[0],
            rng, per_array=12))
        checked += 1

    for trial in range(12):  # hinge loss w.r.t. the logit head
        f = random_small_net(rng, in_dim=4, out_dim=3)
        g = random_small_net(rng, in_dim=4, out_dim=3)
        z = rng.normal(size=(5, 4))
        labels = np.full((5, 3), -2.0)
        labels[np.arange(5), rng.integers(3, size=5)] = 1.0
        _, grads = pr.hinge_grads(z, labels, f, g, 0.05)
        worst = max(worst, max_param_fd_error(
            f, grads,
            lambda: pr.hinge_grads(z, labels, f, g, 0.05, want_grads=False)[0],
            rng, per_array=12))
        checked += 1

    for trial in range(12):  # cross-entropy
        net = random_small_net(rng, in_dim=4, out_dim=3)
        z = rng.normal(size=(5, 4))
        cls = rng.integers(3, size=5)
        _, grads = pr.cross_entropy_grads(z, cls, net)
        worst = max(worst, max_param_fd_error(
            net, grads,
            lambda: pr.cross_entropy_grads(z, cls, net, want_grads=False)[0],
            rng, per_array=12))
        checked += 1

    for trial in range(12):  # counterfactual objective w.r.t. the latent
        f = random_small_net(rng, in_dim=4, out_dim=3)
        g = random_small_net(rng, in_dim=4, out_dim=3)
        req = CfRequest(z_t=rng.normal(size=4), eta1=0.8, eta2=0.5, eta3=0.2,
                        entropy_sign="minimize" if trial % 2 == 0 else "maximize")
        z = req.z_t + 0.5 * rng.normal(size=4)
        _, grad = cf_objective_grad(z, req, f, g)
        worst = max(worst, max_vector_fd_error(
            z, grad, lambda: cf_objective_grad(z, req, f, g, want_grad=False)[0]))
        checked += 1

    elapsed = time.time() - t0
    assert checked >= 50
    assert worst < 1e-4
    assert elapsed < 60.0
    _ok("gradient fidelity",
        f"({checked} instances, worst rel err {worst:.2e}, {elapsed:.1f}s)")


def test_label_encoding():
    rho = pr.softmax_with_entropy(data.encode_label(0, 7)).rho
    assert np.all(np.abs(rho[1:] - 0.0383) <= 5e-4)
    _ok("label encoding", f"(negative-class probability {rho[1]:.5f})")


def test_calibration_coverage(full_stack):
    s = full_stack
    val = s["val_idx"]
    y_hat, delta = s["predictor"].intervals(s["latents"][val])
    err = pr.hard_calibration_error_arrays(y_hat, delta, s["targets"][val],
                                           STACK["alpha"])
    assert np.all(err.coverage >= 0.60) and np.all(err.coverage <= 0.80), \
        f"per-class coverage {err.coverage}"
    _ok("calibration coverage", f"(per-class {np.round(err.coverage, 3)})")


def _val_reports(s):
    val = s["val_idx"]
    rep_m = ev.evaluate(s["predictor"], s["latents"][val], s["labels"][val],
                        ev.EvalConfig(alpha=STACK["alpha"], predictor_id="model"))
    rep_b = ev.evaluate(s["baseline"], s["latents"][val], s["labels"][val],
                        ev.EvalConfig(alpha=STACK["alpha"], predictor_id="baseline"))
    return rep_m, rep_b


def test_reliability_comparison(full_stack):
    rep_m, rep_b = _val_reports(full_stack)
    am = np.array(rep_m.curve.accuracies)
    ab = np.array(rep_b.curve.accuracies)
    assert np.all(am >= ab - 0.01), f"model dips below baseline: {am - ab}"
    assert am.mean() > ab.mean()
    assert am[-1] == 1.0 and ab[-1] == 1.0
    assert am[0] == rep_m.plain_accuracy and ab[0] == rep_b.plain_accuracy
    _ok("reliability comparison",
        f"(mean {am.mean():.4f} vs {ab.mean():.4f}, "
        f"acc {rep_m.plain_accuracy:.3f} vs {rep_b.plain_accuracy:.3f})")


def test_entropy_ranking_dominance(full_stack):
    s = full_stack
    val = s["val_idx"]
    rng = np.random.default_rng(99)
    for name in ("predictor", "baseline"):
        model = s[name]
        logits = model.logits(s["latents"][val])
        rho = pr.softmax_batch(logits)
        entropies = pr.entropy_of(rho)
        predicted = logits.argmax(axis=1)
        ranked = np.mean(ev.reliability_curve(entropies, predicted,
                                              s["labels"][val]).accuracies)
        rand_means = [
            np.mean(ev.reliability_curve(rng.permutation(len(val)).astype(float),
                                         predicted, s["labels"][val]).accuracies)
            for _ in range(100)
        ]
        assert ranked > np.mean(rand_means), name
    _ok("entropy-ranking dominance")


def test_counterfactual_behavior(full_stack):
    t0 = time.time()
    s = full_stack
    anchors = s["val_idx"][:100]
    pred, vae_model = s["predictor"], s["vae"]

    down = up = 0
    for i in anchors:
        z_t = s["latents"][i]
        anchor_h = pr.softmax_with_entropy(pred.logits(z_t)[0]).entropy
        lo = generate_evidence(CfRequest(z_t=z_t, eta1=0.1, eta2=0.5, eta3=0.2,
                                         entropy_sign="minimize"), pred, vae_model)
        hi = generate_evidence(CfRequest(z_t=z_t, eta1=0.1, eta2=0.5, eta3=0.2,
                                         entropy_sign="maximize"), pred, vae_model)
        down += lo.entropy <= anchor_h
        up += hi.entropy >= anchor_h
    assert down >= 90, f"entropy decreased for only {down}/100"
    assert up >= 90, f"entropy increased for only {up}/100"

    grid = [0.01, 0.1, 1.0, 10.0]
    mean_ae = np.zeros(len(grid))
    for i in anchors:
        evidences = sweep_eta1(s["latents"][i], grid, 0.5, 0.2, pred, vae_model)
        mean_ae += [e.ae_z for e in evidences]
    mean_ae /= len(anchors)
    assert np.all(np.diff(mean_ae) <= 1e-12), f"mean AE not non-increasing: {mean_ae}"
    elapsed = time.time() - t0
    assert elapsed < 600.0
    _ok("counterfactual behavior",
        f"(down {down}/100, up {up}/100, mean AE {np.round(mean_ae, 4)}, {elapsed:.0f}s)")


def test_dip_decorrelation(full_stack):
    s = full_stack
    val = s["val_idx"]
    mus_dip, _ = vae.encode_batch(s["vae"], s["images"][val])
    mus_plain, _ = vae.encode_batch(s["vae_plain"], s["images"][val])
    off_dip = vae.mean_offdiag_abs(mus_dip)
    off_plain = vae.mean_offdiag_abs(mus_plain)
    assert off_dip < off_plain, f"dip {off_dip:.4f} vs plain {off_plain:.4f}"
    _ok("dip decorrelation", f"({off_dip:.4f} < {off_plain:.4f})")


def test_metric_oracles():
    rng = np.random.default_rng(7)

    for _ in range(200):  # exhaustive pairwise AUC on all instances with N <= 12
        n = int(rng.integers(4, 13))
        k = int(rng.integers(2, 5))
        truth = rng.integers(k, size=n)
        if len(np.unique(truth)) < 2:
            truth[0] = (truth[1] + 1) % k
        raw = rng.integers(0, 5, size=(n, k)).astype(float) + 1
        scores = raw / raw.sum(axis=1, keepdims=True)
        aucs, weights = [], []
        for c in range(k):
            pos = truth == c
            if pos.sum() in (0, n):
                continue
            aucs.append(brute_force_binary_auc(scores[:, c], pos))
            weights.append(pos.sum())
        expected = float(np.dot(aucs, np.array(weights) / sum(weights)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            got = ev.weighted_auc(scores, truth, k)
        assert abs(got - expected) < 1e-12

    for _ in range(200):  # direct counting for the hard calibration error
        n, k = int(rng.integers(1, 40)), int(rng.integers(1, 8))
        alpha = float(rng.uniform(0.05, 0.95))
        y_hat = rng.normal(size=(n, k))
        delta = rng.uniform(0, 2, size=(n, k))
        targets = rng.normal(size=(n, k))
        expected_total = 0.0
        for c in range(k):
            covered = sum(
                1 for i in range(n)
                if y_hat[i, c] - delta[i, c] <= targets[i, c] <= y_hat[i, c] + delta[i, c])
            expected_total += abs(alpha - covered / n)
        got = pr.hard_calibration_error_arrays(y_hat, delta, targets, alpha)
        assert abs(got.total - expected_total) < 1e-12

    a, b = 0.2, 0.8  # zero-variance SSIM: closed-form luminance term
    expected = (2 * a * b + 0.01 ** 2) / (a ** 2 + b ** 2 + 0.01 ** 2)
    got = ssim(np.full((16, 16, 3), a), np.full((16, 16, 3), b))
    assert abs(got - expected) < 1e-9

    _ok("metric oracles")


def test_reproducibility(full_stack, tmp_path):
    s = full_stack

    # retraining the predictor at the canonical config is bit-exact
    cfg = pr.CalibConfig(alpha=STACK["alpha"], tau=STACK["tau"],
                         epochs=STACK["predictor_epochs"],
                         seed=STACK["predictor_seed"])
    train = s["train_idx"]
    retrained = pr.train_alternating(s["latents"][train], s["targets"][train], cfg)
    assert retrained.train_log == s["predictor"].train_log
    for wa, wb in zip(retrained.f.weights + retrained.g.weights,
                      s["predictor"].f.weights + s["predictor"].g.weights):
        assert np.array_equal(wa, wb)

    # autoencoder training is bit-exact across invocations (reduced epochs)
    small_cfg = vae.VaeConfig(d=6, hidden=(64, 32), epochs=4, seed=3)
    sub = s["images"][:300]
    shape = (STACK["image_size"], STACK["image_size"], 3)
    va = vae.train_vae(sub, small_cfg, shape)
    vb = vae.train_vae(sub, small_cfg, shape)
    assert va.train_log == vb.train_log
    for wa, wb in zip(va.encoder.weights + va.decoder.weights,
                      vb.encoder.weights + vb.decoder.weights):
        assert np.array_equal(wa, wb)

    # counterfactual searches are bit-exact across invocations
    z_t = s["latents"][s["val_idx"][0]]
    req = CfRequest(z_t=z_t, eta1=0.1, eta2=0.5, eta3=0.2, seed=1)
    r1 = generate_evidence(req, s["predictor"], s["vae"])
    r2 = generate_evidence(req, s["predictor"], s["vae"])
    assert np.array_equal(r1.z_hat, r2.z_hat)
    assert r1.objective_trace == r2.objective_trace
    assert np.array_equal(r1.image, r2.image)

    # checkpoints round-trip bit-exactly on 100 random forward evaluations
    rng = np.random.default_rng(0)
    save_checkpoint(s["predictor"], tmp_path / "pred.json")
    loaded_pred = load_checkpoint(tmp_path / "pred.json")
    for _ in range(100):
        z = rng.normal(size=STACK["d"])
        assert np.array_equal(nnet.forward(s["predictor"].f, z),
                              nnet.forward(loaded_pred.f, z))
        assert np.array_equal(nnet.forward(s["predictor"].g, z),
                              nnet.forward(loaded_pred.g, z))
    save_checkpoint(s["vae"], tmp_path / "vae.json")
    loaded_vae = load_checkpoint(tmp_path / "vae.json")
    for _ in range(100):
        z = rng.normal(size=STACK["d"])
        assert np.array_equal(vae.decode(s["vae"], z), vae.decode(loaded_vae, z))

    _ok("reproducibility")

"""Procedural synthetic lesion dataset with controlled generative factors.

Each sample is an elliptical blob on a textured skin-tone background. Four
factors in [0, 1] drive the rendering:

  asymmetry           -> eccentricity of the ellipse
  border_irregularity -> amplitude of radial edge noise
  color_intensity     -> darkness of the blob color
  diameter            -> blob radius (and therefore pixel area)

Class labels follow the documented lexicographic quantile rule over
(diameter, color_intensity, asymmetry) implemented by ``factor_to_class``,
plus a small rate of label noise so deferral behavior stays non-degenerate.

Storage is codec-free: a raw little-endian float32 payload (sample-major,
row-major H x W x 3) next to a ``manifest.json``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError

FACTOR_NAMES = ("asymmetry", "border_irregularity", "color_intensity", "diameter")

_TEXTURE_GRID = 8
_BG_BASE = np.array([0.80, 0.62, 0.55])
_BG_CHANNEL_WEIGHTS = np.array([1.0, 0.9, 0.8])
_LESION_LIGHT = np.array([0.62, 0.40, 0.32])
_LESION_DARK = np.array([0.28, 0.10, 0.10])


@dataclass
class Nuisance:
    """Per-sample rendering state that is not a generative factor."""

    center_jitter: tuple[float, float]
    angle: float
    border_phases: tuple[float, float, float]
    texture: np.ndarray  # coarse value-noise grid, (_TEXTURE_GRID, _TEXTURE_GRID)


@dataclass
class SyntheticSample:
    id: str
    image: np.ndarray  # H x W x 3 float32 in [0, 1]
    factors: dict[str, float]
    class_id: int


@dataclass
class DatasetManifest:
    n: int
    height: int
    width: int
    channels: int
    num_classes: int
    seed: int
    records: list[dict]  # per sample: id, class_id, factors, offset


def _partition(total: int, parts: int) -> list[int]:
    """Split `total` into `parts` near-equal integers, earlier parts larger."""
    base, rem = divmod(total, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def class_cells(num_classes: int) -> list[tuple]:
    """Axis-aligned factor cells, one per class, in class-id order.

    The unit cube of (diameter, color_intensity, asymmetry) is carved
    lexicographically: diameter into ceil(K^(1/3)) equal bins; each bin's
    class budget into ceil(sqrt(budget)) color bins; each color bin's budget
    into that many asymmetry bins. Cell i is class i, so labels can be
    re-derived from stored factors.
    """
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    n1 = math.ceil(num_classes ** (1.0 / 3.0))
    cells = []
    for i1, s1 in enumerate(_partition(num_classes, n1)):
        d_bounds = (i1 / n1, (i1 + 1) / n1)
        n2 = math.ceil(math.sqrt(s1))
        for i2, s2 in enumerate(_partition(s1, n2)):
            c_bounds = (i2 / n2, (i2 + 1) / n2)
            for i3 in range(s2):
                a_bounds = (i3 / s2, (i3 + 1) / s2)
                cells.append((d_bounds, c_bounds, a_bounds))
    return cells


def factor_to_class(factors: dict[str, float], num_classes: int) -> int:
    """The published factor -> class decision rule (no label noise)."""
    n1 = math.ceil(num_classes ** (1.0 / 3.0))
    sizes1 = _partition(num_classes, n1)
    i1 = min(int(factors["diameter"] * n1), n1 - 1)
    offset = sum(sizes1[:i1])
    s1 = sizes1[i1]
    n2 = math.ceil(math.sqrt(s1))
    sizes2 = _partition(s1, n2)
    i2 = min(int(factors["color_intensity"] * n2), n2 - 1)
    offset += sum(sizes2[:i2])
    s2 = sizes2[i2]
    i3 = min(int(factors["asymmetry"] * s2), s2 - 1)
    return offset + i3


def encode_label(class_id: int, num_classes: int) -> np.ndarray:
    """Smoothed logit target: +1 at the true class, -2 elsewhere."""
    if not 0 <= class_id < num_classes:
        raise IndexError(f"class_id {class_id} out of range [0, {num_classes})")
    logits = np.full(num_classes, -2.0)
    logits[class_id] = 1.0
    return logits


def sample_nuisance(rng: np.random.Generator, image_size: int) -> Nuisance:
    jit = image_size / 16.0
    return Nuisance(
        center_jitter=(rng.uniform(-jit, jit), rng.uniform(-jit, jit)),
        angle=rng.uniform(0.0, 2.0 * np.pi),
        border_phases=tuple(rng.uniform(0.0, 2.0 * np.pi, size=3)),
        texture=rng.uniform(-1.0, 1.0, size=(_TEXTURE_GRID, _TEXTURE_GRID)),
    )


def _geometry(factors: dict[str, float], nuisance: Nuisance, size: int):
    """Normalized radial distance u (u <= 1 is lesion interior)."""
    cy = size / 2.0 + nuisance.center_jitter[1]
    cx = size / 2.0 + nuisance.center_jitter[0]
    yy, xx = np.mgrid[0:size, 0:size]
    dy = (yy + 0.5) - cy
    dx = (xx + 0.5) - cx
    ca, sa = np.cos(nuisance.angle), np.sin(nuisance.angle)
    xr = dx * ca + dy * sa
    yr = -dx * sa + dy * ca

    r = (0.10 + 0.18 * factors["diameter"]) * size
    k = 1.0 + 0.6 * factors["asymmetry"]
    a_axis, b_axis = r * k, r / k

    phi = np.arctan2(yr, xr)
    p1, p2, p3 = nuisance.border_phases
    wobble = (np.sin(3 * phi + p1) + 0.6 * np.sin(5 * phi + p2)
              + 0.4 * np.sin(7 * phi + p3)) / 2.0
    modulation = 1.0 + 0.15 * factors["border_irregularity"] * wobble

    u = np.sqrt((xr / a_axis) ** 2 + (yr / b_axis) ** 2) / modulation
    return u, r


def lesion_mask(factors: dict[str, float], nuisance: Nuisance, size: int) -> np.ndarray:
    u, _ = _geometry(factors, nuisance, size)
    return u <= 1.0


def _bilinear_upsample(grid: np.ndarray, size: int) -> np.ndarray:
    g = grid.shape[0]
    coords = (np.arange(size) + 0.5) / size * (g - 1)
    i0 = np.floor(coords).astype(int)
    frac = coords - i0
    i1 = np.minimum(i0 + 1, g - 1)
    rows = grid[i0, :] * (1 - frac)[:, None] + grid[i1, :] * frac[:, None]
    out = rows[:, i0] * (1 - frac)[None, :] + rows[:, i1] * frac[None, :]
    return out


def render_image(factors: dict[str, float], nuisance: Nuisance, size: int) -> np.ndarray:
    """Render one sample as float64 (size, size, 3) with all pixels in [0, 1]."""
    u, r = _geometry(factors, nuisance, size)
    aa = 1.5 / r  # anti-alias band, ~0.75 px each side
    alpha = np.clip((1.0 - u) / aa + 0.5, 0.0, 1.0)

    noise = _bilinear_upsample(nuisance.texture, size)
    bg = _BG_BASE[None, None, :] + 0.04 * noise[:, :, None] * _BG_CHANNEL_WEIGHTS
    color = _LESION_LIGHT + factors["color_intensity"] * (_LESION_DARK - _LESION_LIGHT)
    shade = 1.0 - 0.2 * (1.0 - np.minimum(u, 1.0))  # slightly darker core
    lesion = color[None, None, :] * shade[:, :, None]

    img = bg * (1.0 - alpha[:, :, None]) + lesion * alpha[:, :, None]
    return np.clip(img, 0.0, 1.0)


def _resample_into_cell(rng: np.random.Generator, cell: tuple) -> dict[str, float]:
    (d_lo, d_hi), (c_lo, c_hi), (a_lo, a_hi) = cell
    return {
        "asymmetry": float(rng.uniform(a_lo, a_hi)),
        "border_irregularity": float(rng.uniform(0.0, 1.0)),
        "color_intensity": float(rng.uniform(c_lo, c_hi)),
        "diameter": float(rng.uniform(d_lo, d_hi)),
    }


def generate_dataset(n: int, num_classes: int = 7, image_size: int = 32, seed: int = 0,
                     label_noise: float = 0.05):
    """Generate the dataset; deterministic given (n, num_classes, image_size, seed).

    Returns (samples, manifest). Every class is guaranteed at least one
    sample; about `label_noise` of the labels are flipped to a random other
    class (those samples' class_id disagrees with ``factor_to_class``).
    """
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    if n < num_classes:
        raise ConfigError(f"n={n} < num_classes={num_classes}: some class would be empty")
    if image_size < 16:
        raise ConfigError(f"image_size must be >= 16, got {image_size}")

    rng = np.random.default_rng(seed)
    cells = class_cells(num_classes)

    factor_rows = [
        dict(zip(FACTOR_NAMES, rng.uniform(0.0, 1.0, size=4))) for _ in range(n)
    ]
    rule = [factor_to_class(f, num_classes) for f in factor_rows]

    # guarantee coverage before noise: re-place one donor per empty class
    counts = np.bincount(rule, minlength=num_classes)
    for c in range(num_classes):
        if counts[c] == 0:
            donor_class = int(np.argmax(counts))
            donor = rule.index(donor_class)
            factor_rows[donor] = _resample_into_cell(rng, cells[c])
            rule[donor] = c
            counts[donor_class] -= 1
            counts[c] += 1

    nuisances = [sample_nuisance(rng, image_size) for _ in range(n)]

    labels = list(rule)
    flips = rng.random(n) < label_noise
    for i in range(n):
        if flips[i]:
            labels[i] = (rule[i] + 1 + int(rng.integers(num_classes - 1))) % num_classes

    # noise may have emptied a class; re-place a donor from the largest one
    counts = np.bincount(labels, minlength=num_classes)
    for c in range(num_classes):
        if counts[c] == 0:
            donor_class = int(np.argmax(counts))
            donor = labels.index(donor_class)
            factor_rows[donor] = _resample_into_cell(rng, cells[c])
            rule[donor] = c
            labels[donor] = c
            counts[donor_class] -= 1
            counts[c] += 1

    samples, records = [], []
    bytes_per = image_size * image_size * 3 * 4
    for i in range(n):
        img = render_image(factor_rows[i], nuisances[i], image_size).astype(np.float32)
        sid = f"s{i:05d}"
        samples.append(SyntheticSample(sid, img, factor_rows[i], labels[i]))
        records.append({
            "id": sid,
            "class_id": labels[i],
            "factors": factor_rows[i],
            "offset": i * bytes_per,
        })
    manifest = DatasetManifest(
        n=n, height=image_size, width=image_size, channels=3,
        num_classes=num_classes, seed=seed, records=records,
    )
    return samples, manifest


def save_dataset(samples: list[SyntheticSample], manifest: DatasetManifest, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = bytearray()
    for s in samples:
        payload += np.ascontiguousarray(s.image, dtype="<f4").tobytes()
    (out / "images.f32").write_bytes(bytes(payload))
    mani = {
        "n": manifest.n,
        "height": manifest.height,
        "width": manifest.width,
        "channels": manifest.channels,
        "num_classes": manifest.num_classes,
        "seed": manifest.seed,
        "records": manifest.records,
    }
    (out / "manifest.json").write_text(json.dumps(mani, indent=2, sort_keys=True))


def load_dataset(in_dir):
    src = Path(in_dir)
    mani = json.loads((src / "manifest.json").read_text())
    manifest = DatasetManifest(
        n=mani["n"], height=mani["height"], width=mani["width"],
        channels=mani["channels"], num_classes=mani["num_classes"],
        seed=mani["seed"], records=mani["records"],
    )
    raw = (src / "images.f32").read_bytes()
    per = manifest.height * manifest.width * manifest.channels
    images = np.frombuffer(raw, dtype="<f4").reshape(manifest.n, manifest.height,
                                                     manifest.width, manifest.channels)
    if len(raw) != manifest.n * per * 4:
        raise ParseError(f"payload has {len(raw)} bytes, manifest expects {manifest.n * per * 4}")
    samples = []
    for i, rec in enumerate(manifest.records):
        samples.append(SyntheticSample(rec["id"], images[i].copy(), rec["factors"],
                                       rec["class_id"]))
    return samples, manifest


def images_matrix(samples: list[SyntheticSample]) -> np.ndarray:
    """Stack images as float64 rows (N, H*W*3) for training."""
    return np.stack([s.image.reshape(-1).astype(np.float64) for s in samples])


def class_ids(samples: list[SyntheticSample]) -> np.ndarray:
    return np.array([s.class_id for s in samples], dtype=int)


def save_latent_csv(path, ids, labels, latents: np.ndarray) -> None:
    latents = np.asarray(latents, dtype=np.float64)
    d = latents.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"z{j}" for j in range(d)])
        for sid, lab, row in zip(ids, labels, latents):
            writer.writerow([sid, int(lab)] + [format(v, ".17g") for v in row])


def load_latent_csv(path, num_classes: int | None = None):
    """Parse an `id,label,z0,...` CSV into (ids, labels, N x d latents).

    Rejects header mismatches, ragged rows, non-numeric or non-finite cells
    and out-of-range labels, naming the offending line.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise ParseError(f"{path}:1: header must start with id,label,z0,...")
        d = len(header) - 2
        if header[2:] != [f"z{j}" for j in range(d)]:
            raise ParseError(f"{path}:1: latent columns must be z0..z{d - 1}")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            sid = row[0]
            try:
                label = int(row[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: label {row[1]!r} is not an integer") from None
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise ParseError(f"{path}:{lineno}: label {label} out of range")
            vals = []
            for j, cell in enumerate(row[2:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: cell z{j}={cell!r} is not numeric") from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}:{lineno}: cell z{j}={cell!r} is not finite")
                vals.append(v)
            ids.append(sid)
            labels.append(label)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return ids, np.array(labels, dtype=int), np.array(rows, dtype=np.float64)


def split_indices(labels, val_frac: float = 0.2, seed: int = 0):
    """Deterministic stratified split; returns sorted (train_idx, val_idx)."""
    if not 0.0 < val_frac < 1.0:
        raise ConfigError(f"val_frac must be in (0, 1), got {val_frac}")
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        k = max(1, int(round(val_frac * len(idx)))) if len(idx) > 1 else 0
        val.extend(idx[:k])
        train.extend(idx[k:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(val, dtype=int))

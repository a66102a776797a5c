"""Synthetic desk-scale datasets and the manifest exchange format.

Two generators: parametric shape images (fed through the toy backbone) and
labelled Gaussian feature vectors (fed straight to learners). Manifest files
list one OCLT record per line as ``path,label,split``.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb

from .errors import ContractError, DataError
from .rng import RngStream
from .tensors import FeatureMap, load_tensor_record, save_tensor_record

SHAPES = ("disk", "bar", "cross", "ring", "checker")


@dataclass
class Dataset:
    """Train/test arrays. ``*_x`` hold images, feature maps or vectors along axis 0."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    kind: str = "images"  # images | fmaps | vectors

    @property
    def classes(self):
        return sorted(set(int(c) for c in self.train_y))

    def train_counts(self):
        return {c: int(np.sum(self.train_y == c)) for c in self.classes}

    def class_indices(self, c):
        return np.flatnonzero(self.train_y == c)


@dataclass(frozen=True)
class SyntheticClassSpec:
    class_id: int
    shape: str
    hue: float
    texture_freq: float
    size: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ContractError(f"unknown shape {self.shape!r}")


def default_class_specs(n_classes=5):
    specs = []
    for c in range(n_classes):
        specs.append(SyntheticClassSpec(
            class_id=c,
            shape=SHAPES[c % len(SHAPES)],
            hue=(c / n_classes + 0.37 * (c // len(SHAPES))) % 1.0,
            texture_freq=0.6 + 0.35 * (c // len(SHAPES)),
            size=0.36,
        ))
    return specs


def _shape_mask(shape, u, v, radius):
    r = np.hypot(u, v)
    edge = 1.0  # one-pixel soft edge
    if shape == "disk":
        sd = radius - r
    elif shape == "ring":
        sd = np.minimum(radius - r, r - 0.55 * radius)
    elif shape == "bar":
        sd = np.minimum(radius - np.abs(u), 0.3 * radius - np.abs(v))
    elif shape == "cross":
        bar1 = np.minimum(radius - np.abs(u), 0.25 * radius - np.abs(v))
        bar2 = np.minimum(radius - np.abs(v), 0.25 * radius - np.abs(u))
        sd = np.maximum(bar1, bar2)
    else:  # checker
        sd = np.minimum(0.85 * radius - np.abs(u), 0.85 * radius - np.abs(v))
    return np.clip(sd / edge + 0.5, 0.0, 1.0)


def render(spec, rng, size=32):
    """Draw one jittered instance of a class."""
    center = (size - 1) / 2.0 + rng.uniforms(2, -0.08 * size, 0.08 * size)
    angle = rng.uniform(-np.pi / 6, np.pi / 6)
    radius = spec.size * size * rng.uniform(0.85, 1.15)
    hue = (spec.hue + rng.uniform(-0.03, 0.03)) % 1.0
    phase = rng.uniform(0.0, 2 * np.pi)
    bg_level = rng.uniform(0.15, 0.25)
    bg_noise = rng.uniforms(size * size, -0.04, 0.04).reshape(size, size)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - center[1], yy - center[0]
    u = np.cos(angle) * dx + np.sin(angle) * dy
    v = -np.sin(angle) * dx + np.cos(angle) * dy
    mask = _shape_mask(spec.shape, u, v, radius)

    color = hsv_to_rgb(np.array([hue, 0.85, 0.9]))
    if spec.shape == "checker":
        tex = 0.55 + 0.45 * (np.sign(np.sin(spec.texture_freq * u + phase) * np.sin(spec.texture_freq * v)) > 0)
    else:
        tex = 0.75 + 0.25 * np.sin(spec.texture_freq * (u + v) + phase)
    fg = color[None, None, :] * tex[..., None]
    bg = np.clip(bg_level + bg_noise, 0.0, 1.0)[..., None] * np.ones(3)
    img = mask[..., None] * fg + (1.0 - mask[..., None]) * bg
    return np.clip(img, 0.0, 1.0)


def gen_image_dataset(specs=None, train_per_class=10, test_per_class=30, seed=0, size=32):
    """Render ``train_per_class`` + ``test_per_class`` images per class."""
    specs = default_class_specs() if specs is None else list(specs)
    if len(specs) < 2:
        raise ContractError("need at least 2 classes")
    ids = [s.class_id for s in specs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate class ids in dataset spec")
    base = RngStream(seed, "dataset/images")
    out = {}
    for split, count in (("train", train_per_class), ("test", test_per_class)):
        imgs, labels = [], []
        for spec in specs:
            for i in range(count):
                imgs.append(render(spec, base.substream(f"{split}/{spec.class_id}/{i}"), size))
                labels.append(spec.class_id)
        out[split] = (np.stack(imgs) if imgs else np.zeros((0, size, size, 3)), np.array(labels, dtype=np.int64))
    return Dataset(out["train"][0], out["train"][1], out["test"][0], out["test"][1], kind="images")


def _random_rotation(rng, dim):
    q, r = np.linalg.qr(rng.normals(dim * dim).reshape(dim, dim))
    return q * np.sign(np.diag(r))


def gen_feature_dataset(n_classes=10, dim=16, train_per_class=20, test_per_class=100, anisotropy=1.0,
                        skew=0.0, seed=0, separation=6.0):
    """Gaussian class clusters sharing one covariance with condition number ``anisotropy``.

    Class means lie on a sphere of radius ``separation``. The shared covariance
    has eigenvalues log-spaced from 1 to ``anisotropy`` along random axes.
    ``skew > 0`` adds an exponential component along a class-specific axis.
    """
    if anisotropy < 1:
        raise ContractError(f"anisotropy must be >= 1, got {anisotropy}")
    if dim < 1 or n_classes < 1:
        raise ContractError("dim and n_classes must be >= 1")
    rng = RngStream(seed, "dataset/features")
    means = rng.normals(n_classes * dim).reshape(n_classes, dim)
    means = separation * means / np.linalg.norm(means, axis=1, keepdims=True)
    eig = anisotropy ** (np.arange(dim) / max(dim - 1, 1))
    basis = _random_rotation(rng.substream("basis"), dim)
    root = basis * np.sqrt(eig)  # covariance = root @ root.T
    skew_dirs = rng.normals(n_classes * dim).reshape(n_classes, dim)
    skew_dirs /= np.linalg.norm(skew_dirs, axis=1, keepdims=True)

    def draw(split, count):
        xs, ys = [], []
        for c in range(n_classes):
            sub = rng.substream(f"{split}/{c}")
            noise = sub.normals(count * dim).reshape(count, dim) @ root.T
            x = means[c] + noise
            if skew > 0:
                e = -np.log1p(-sub.uniforms(count)) - 1.0
                x = x + skew * e[:, None] * skew_dirs[c]
            xs.append(x)
            ys.append(np.full(count, c, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    train_x, train_y = draw("train", train_per_class)
    test_x, test_y = draw("test", test_per_class)
    return Dataset(train_x, train_y, test_x, test_y, kind="vectors")


# manifest exchange


def export_dataset(dataset, directory, manifest_name="manifest.csv"):
    """Write each sample as an OCLT record plus a ``path,label,split`` manifest."""
    os.makedirs(directory, exist_ok=True)
    rows = []
    for split, xs, ys in (("train", dataset.train_x, dataset.train_y), ("test", dataset.test_x, dataset.test_y)):
        for i, (x, y) in enumerate(zip(xs, ys)):
            rel = f"{split}_{i:05d}.oclt"
            tensor = FeatureMap(x) if np.ndim(x) == 3 else np.asarray(x, dtype=np.float32)
            save_tensor_record(os.path.join(directory, rel), tensor)
            rows.append((rel, int(y), split))
    path = os.path.join(directory, manifest_name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)
    return path


def load_manifest(path, kind=None):
    """Load a manifest into a :class:`Dataset`.

    Rank-3 records become ``fmaps`` (or ``images`` when ``kind='images'``),
    rank-1 records become ``vectors``.
    """
    base = os.path.dirname(os.path.abspath(path))
    split_x = {"train": [], "test": []}
    split_y = {"train": [], "test": []}
    ranks = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected path,label,split")
            rel, label, split = (s.strip() for s in row)
            if split not in split_x:
                raise DataError(f"{path}:{lineno}: split must be train or test, got {split!r}")
            try:
                y = int(label)
            except ValueError:
                raise DataError(f"{path}:{lineno}: label must be an integer, got {label!r}") from None
            rec = load_tensor_record(os.path.join(base, rel))
            arr = rec.data if isinstance(rec, FeatureMap) else rec
            ranks.add(arr.ndim)
            split_x[split].append(arr)
            split_y[split].append(y)
    if len(ranks) > 1:
        raise DataError(f"{path}: manifest mixes rank-1 and rank-3 records")
    if not split_x["train"] or not split_x["test"]:
        raise DataError(f"{path}: manifest needs both train and test records")
    rank = ranks.pop()
    kind = kind or ("fmaps" if rank == 3 else "vectors")
    return Dataset(
        np.stack(split_x["train"]), np.array(split_y["train"], dtype=np.int64),
        np.stack(split_x["test"]), np.array(split_y["test"], dtype=np.int64),
        kind=kind,
    )

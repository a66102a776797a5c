"""Experiment orchestration: datasets, cached features, run / grid / bench jobs.

Backbone features are computed once per ``(split, augmentation)`` and
shared by every method. Jobs (one per method x ordering, or per grid cell x
ordering) own their learner and pooling state, so a thread pool executes
them in any order and still yields identical results; outputs are assembled
in job-list order.
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .augment import augment
from .backbone import ToyBackbone
from .datasets import default_class_specs, gen_feature_dataset, gen_image_dataset, load_manifest
from .errors import ContractError
from .learners import make_learner
from .metrics import rarg
from .pooling import PoolingSpec
from .rng import RngStream
from .stream import Embedder, aggregate_runs, run_ordering

FEATURE_BATCH = 64


def load_dataset(cfg):
    if cfg.source == "images":
        specs = default_class_specs(cfg.classes)
        return gen_image_dataset(specs, cfg.train_per_class, cfg.test_per_class, seed=cfg.dataset_seed,
                                 size=cfg.image_size)
    if cfg.source == "features":
        return gen_feature_dataset(cfg.classes, cfg.dim, cfg.train_per_class, cfg.test_per_class,
                                   anisotropy=cfg.anisotropy, skew=cfg.skew, seed=cfg.dataset_seed,
                                   separation=cfg.separation)
    return load_manifest(cfg.manifest)


def augment_split(images, kind, seed, offset=0):
    """Augment a stack of images; sample ``i`` draws from substream ``aug/{offset + i}``.

    Every kind reads the same per-sample stream, so different augmentations
    of one image start from the same draws.
    """
    if kind == "clean":
        return np.asarray(images)
    return np.stack([augment(img, kind, RngStream(seed, f"aug/{offset + i}")) for i, img in enumerate(images)])


class FeatureCache:
    """Lazily computed backbone outputs keyed by ``(split, augmentation)``."""

    def __init__(self, dataset, backbone=None, aug_seed=0):
        self.dataset = dataset
        self.backbone = backbone
        self.aug_seed = aug_seed
        self._data = {}
        self._locks = {}
        self._guard = threading.Lock()

    def _compute(self, split, aug):
        ds = self.dataset
        x = ds.train_x if split == "train" else ds.test_x
        if aug != "clean":
            if ds.kind != "images":
                raise ContractError(f"augmentation {aug!r} needs image data, dataset holds {ds.kind}")
            x = augment_split(x, aug, self.aug_seed, offset=0 if split == "train" else len(ds.train_x))
        if self.backbone is None:
            return np.asarray(x)
        return np.concatenate([self.backbone.forward_batch(x[b : b + FEATURE_BATCH])
                               for b in range(0, len(x), FEATURE_BATCH)])

    def get(self, split, aug="clean"):
        key = (split, aug)
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._data:
                self._data[key] = self._compute(split, aug)
            return self._data[key]


def build_cache(cfg, dataset):
    backbone = None
    if cfg.backbone == "toy":
        if dataset.kind != "images":
            raise ContractError("the toy backbone needs image data")
        backbone = ToyBackbone(seed=cfg.backbone_seed, gain=cfg.backbone_gain)
    return FeatureCache(dataset, backbone, aug_seed=cfg.seed)


def embedding_dim(features, spec):
    if spec is None:
        return int(np.prod(features.shape[1:]))
    if features.ndim != 4:
        raise ContractError(f"pooling {spec.label} needs spatial features, got shape {features.shape[1:]}")
    return spec.output_dim(*features.shape[1:])


def _factories(cfg, kind, spec, dim, backbone=None):
    params = cfg.learner_params

    def learner_factory(seed):
        return make_learner(kind, dim, epsilon=params["epsilon"], lr=params["lr"], buffer=params["buffer"],
                            cbcl_threshold=params["cbcl_threshold"], cbcl_max=params["cbcl_max"],
                            sigma_floor=params["sigma_floor"], seed=seed)

    def embed_factory(seed):
        return Embedder(pooling=spec, backbone=backbone, seed=seed)

    return learner_factory, embed_factory


def _execute(jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda job: job(), jobs))
    return [job() for job in jobs]


def _ordering_job(cfg, cache, dataset, kind, spec, train_aug, test_aug, seed, backbone=None):
    def job():
        train = cache.get("train", train_aug)
        test = cache.get("test", test_aug)
        if backbone is None:
            dim = embedding_dim(train, spec)
        else:
            dim = embedding_dim(np.zeros((1,) + backbone.output_shape(*train.shape[1:3])), spec)
        lf, ef = _factories(cfg, kind, spec, dim, backbone)
        return run_ordering(seed, train, dataset.train_y, test, dataset.test_y, lf, ef, shots=cfg.shots,
                            clamp_forgetting=cfg.clamp_forgetting)
    return job


def _warm(cache, keys, threads):
    _execute([lambda k=k: cache.get(*k) for k in keys], threads)


@dataclass
class MethodResult:
    name: str
    report: object  # OrderingsReport


def run_experiment(cfg, dataset=None, cache=None):
    """Every configured method over ``cfg.orderings`` orderings.

    Uses the first train and first test augmentation of the config.
    """
    dataset = load_dataset(cfg) if dataset is None else dataset
    cache = build_cache(cfg, dataset) if cache is None else cache
    tr, te = cfg.train_augs[0], cfg.test_augs[0]
    _warm(cache, sorted({("train", tr), ("test", te)}), cfg.threads)
    methods = cfg.methods
    jobs = [
        _ordering_job(cfg, cache, dataset, kind, spec, tr, te, cfg.seed + i)
        for _, kind, spec in methods
        for i in range(cfg.orderings)
    ]
    runs = _execute(jobs, cfg.threads)
    n = cfg.orderings
    return [MethodResult(name, aggregate_runs(runs[j * n : (j + 1) * n])) for j, (name, _, _) in enumerate(methods)]


@dataclass
class GridCell:
    method: str
    train_aug: str
    test_aug: str
    report: object  # OrderingsReport

    @property
    def acc(self):
        return self.report.mean["acc"]

    @property
    def acc_std(self):
        return self.report.std["acc"]


def avg_od(cells, train_aug):
    """Mean accuracy over test augmentations that differ from ``train_aug``; None if there are none."""
    vals = [c.acc for c in cells if c.train_aug == train_aug and c.test_aug != train_aug]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


def run_grid(cfg, dataset=None, cache=None):
    """All ``train_aug x test_aug`` cells for every method, in config order."""
    dataset = load_dataset(cfg) if dataset is None else dataset
    cache = build_cache(cfg, dataset) if cache is None else cache
    keys = [("train", a) for a in cfg.train_augs] + [("test", a) for a in cfg.test_augs]
    _warm(cache, keys, cfg.threads)
    layout = [
        (name, kind, spec, tr, te)
        for name, kind, spec in cfg.methods
        for tr in cfg.train_augs
        for te in cfg.test_augs
    ]
    jobs = [
        _ordering_job(cfg, cache, dataset, kind, spec, tr, te, cfg.seed + i)
        for _, kind, spec, tr, te in layout
        for i in range(cfg.orderings)
    ]
    runs = _execute(jobs, cfg.threads)
    n = cfg.orderings
    return [GridCell(name, tr, te, aggregate_runs(runs[j * n : (j + 1) * n]))
            for j, (name, _, _, tr, te) in enumerate(layout)]


@dataclass
class GridSummaryRow:
    method: str
    train_aug: str  # "mean" for the average over rows
    avg_od: float | None
    rarg: float | None
    rarg_note: str | None = None  # "div0" when the baseline Avg-OD is 100


def _safe_rarg(base, new):
    if base is None or new is None:
        return None, None
    try:
        return rarg(base, new), None
    except ZeroDivisionError:
        return None, "div0"


def grid_summary(cells, methods, train_augs, baseline=None):
    """Avg-OD per (method, train row) plus the row mean, with RARG against ``baseline``."""
    baseline = baseline or methods[0]
    table = {}
    for m in methods:
        mine = [c for c in cells if c.method == m]
        row_vals = {tr: avg_od(mine, tr) for tr in train_augs}
        defined = [v for v in row_vals.values() if v is not None]
        row_vals["mean"] = math.fsum(defined) / len(defined) if defined else None
        table[m] = row_vals
    out = []
    for m in methods:
        for tr in list(train_augs) + ["mean"]:
            r, note = _safe_rarg(table[baseline][tr], table[m][tr])
            out.append(GridSummaryRow(m, tr, table[m][tr], r, note))
    return out


@dataclass
class BenchRow:
    learner: str
    method: str
    pooling: str
    ttime_min: float
    fps: float
    fps_delta_pct: float | None = None


def bench_experiment(cfg, dataset=None):
    """Time the configured moment pooling against avg pooling for every learner.

    The moment spec is the first ``moments`` entry of the config (R=3 when
    none is configured). Unlike run and grid, the backbone is not cached here:
    TTime and FPS cover backbone, pooling and learner. Timings run
    sequentially so pipelines do not compete for cores. With R=1 the two
    pipelines are the same computation and the delta is 0 by definition.
    """
    dataset = load_dataset(cfg) if dataset is None else dataset
    full = build_cache(cfg, dataset)
    backbone = full.backbone
    cache = FeatureCache(dataset, None, aug_seed=cfg.seed)
    moments = next((s for s in cfg.poolings if s is not None and s.kind == "moments"), PoolingSpec.moments(3))
    avg = PoolingSpec("avg")
    tr, te = cfg.train_augs[0], cfg.test_augs[0]
    _warm(cache, sorted({("train", tr), ("test", te)}), cfg.threads)
    rows = []
    for kind in cfg.learners:
        measured = {}
        for spec in (avg, moments):
            jobs = [_ordering_job(cfg, cache, dataset, kind, spec, tr, te, cfg.seed + i, backbone)
                    for i in range(cfg.orderings)]
            measured[spec.label] = aggregate_runs(_execute(jobs, 1))
        ref = measured[avg.label]
        cand = measured[moments.label]
        rows.append(BenchRow(kind, f"{kind}+{avg.label}", avg.label, ref.mean["ttime_min"], ref.mean["fps"]))
        if moments.R == 1:
            delta = 0.0
        else:
            delta = 100.0 * (cand.mean["fps"] - ref.mean["fps"]) / ref.mean["fps"]
        rows.append(BenchRow(kind, f"{kind}+{moments.label}", moments.label, cand.mean["ttime_min"],
                             cand.mean["fps"], delta))
    return rows

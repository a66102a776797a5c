"""Experiment configuration files.

Grammar: one ``section.key = value`` pair per line. ``#`` starts a comment,
blank lines are ignored, list values are comma separated. Every key is
optional; unknown keys are rejected. Example::

    dataset.source = images
    dataset.classes = 5
    pooling.kind = avg, moments
    pooling.R = 3
    learner.kind = ncm, slda
    augment.train = clean
    augment.test = clean, illum
    run.orderings = 5
    run.out = results/demo

Keys and defaults are listed in ``KEYS``.
"""

import os
from dataclasses import dataclass, field, replace

from .augment import AUG_KINDS
from .errors import ConfigError, ContractError
from .learners import LEARNER_KINDS
from .pooling import KINDS as POOLING_KINDS
from .pooling import PoolingSpec

SOURCES = ("images", "features", "manifest")

KEYS = {
    "dataset.source": "images",
    "dataset.classes": "5",
    "dataset.train_per_class": "10",
    "dataset.test_per_class": "30",
    "dataset.seed": "0",
    "dataset.image_size": "32",
    "dataset.dim": "16",
    "dataset.anisotropy": "1",
    "dataset.skew": "0",
    "dataset.separation": "6",
    "dataset.manifest": "",
    "backbone.kind": "",  # toy for images, passthrough otherwise
    "backbone.seed": "0",
    "backbone.gain": "20",
    "pooling.kind": "",  # moments for spatial data, none for vectors
    "pooling.R": "3",
    "pooling.alpha": "0.5",
    "pooling.p": "2",
    "pooling.k_percent": "0.01",
    "pooling.sigma_floor": "1e-12",
    "learner.kind": "ncm",
    "learner.epsilon": "1e-4",
    "learner.lr": "0.01",
    "learner.buffer": "",
    "learner.cbcl_threshold": "17",
    "learner.cbcl_max": "44",
    "learner.sigma_floor": "1e-3",
    "augment.train": "clean",
    "augment.test": "clean",
    "run.shots": "all",
    "run.seed": "0",
    "run.orderings": "5",
    "run.threads": "1",
    "run.out": "results",
    "report.timing": "false",
    "report.clamp_forgetting": "false",
    "report.baseline": "",
}


def _split_list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_config_text(text, source="<config>"):
    """``{key: (value, line)}`` from config text."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}: unknown key", line=lineno, key=key)
        if key in entries:
            raise ConfigError(f"{source}: duplicate key (first set on line {entries[key][1]})", line=lineno, key=key)
        entries[key] = (value, lineno)
    return entries


@dataclass
class ExperimentConfig:
    source: str = "images"
    classes: int = 5
    train_per_class: int = 10
    test_per_class: int = 30
    dataset_seed: int = 0
    image_size: int = 32
    dim: int = 16
    anisotropy: float = 1.0
    skew: float = 0.0
    separation: float = 6.0
    manifest: str | None = None
    backbone: str = "toy"
    backbone_seed: int = 0
    backbone_gain: float = 20.0
    poolings: list = field(default_factory=lambda: [PoolingSpec.moments(3)])
    learners: list = field(default_factory=lambda: ["ncm"])
    learner_params: dict = field(default_factory=dict)
    train_augs: list = field(default_factory=lambda: ["clean"])
    test_augs: list = field(default_factory=lambda: ["clean"])
    shots: int | None = None
    seed: int = 0
    orderings: int = 5
    threads: int = 1
    out: str = "results"
    timing: bool = False
    clamp_forgetting: bool = False
    baseline: str | None = None

    @property
    def methods(self):
        """``(name, learner_kind, pooling_spec_or_None)`` in config order."""
        out = []
        for kind in self.learners:
            for spec in self.poolings:
                name = kind if spec is None else f"{kind}+{spec.label}"
                out.append((name, kind, spec))
        return out

    def with_overrides(self, out=None, seed=None, orderings=None, threads=None):
        changes = {}
        if out is not None:
            changes["out"] = out
        if seed is not None:
            changes["seed"] = int(seed)
        if orderings is not None:
            if orderings < 1:
                raise ConfigError("--orderings must be >= 1")
            changes["orderings"] = int(orderings)
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads must be >= 1")
            changes["threads"] = int(threads)
        return replace(self, **changes)


def _typed(entries, key, conv, what):
    value, line = entries.get(key, (KEYS[key], None))
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {what}, got {value!r}", line=line, key=key) from None


def _bool(value):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(value)


def build_config(entries, base_dir="."):
    def get(key):
        return entries.get(key, (KEYS[key], None))

    def line_of(key):
        return entries.get(key, (None, None))[1]

    source = get("dataset.source")[0]
    if source not in SOURCES:
        raise ConfigError(f"unknown dataset source {source!r}; expected one of {', '.join(SOURCES)}",
                          line=line_of("dataset.source"), key="dataset.source")
    cfg = ExperimentConfig(source=source)
    cfg.classes = _typed(entries, "dataset.classes", int, "an integer")
    cfg.train_per_class = _typed(entries, "dataset.train_per_class", int, "an integer")
    cfg.test_per_class = _typed(entries, "dataset.test_per_class", int, "an integer")
    cfg.dataset_seed = _typed(entries, "dataset.seed", int, "an integer")
    cfg.image_size = _typed(entries, "dataset.image_size", int, "an integer")
    cfg.dim = _typed(entries, "dataset.dim", int, "an integer")
    cfg.anisotropy = _typed(entries, "dataset.anisotropy", float, "a number")
    cfg.skew = _typed(entries, "dataset.skew", float, "a number")
    cfg.separation = _typed(entries, "dataset.separation", float, "a number")
    for key, lo in (("dataset.classes", 2), ("dataset.train_per_class", 1), ("dataset.test_per_class", 1)):
        if _typed(entries, key, int, "an integer") < lo:
            raise ConfigError(f"must be >= {lo}", line=line_of(key), key=key)
    if source == "manifest":
        path = get("dataset.manifest")[0]
        if not path:
            raise ConfigError("dataset.source = manifest needs dataset.manifest", key="dataset.manifest")
        path = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.exists(path):
            raise ConfigError(f"manifest not found: {path}", line=line_of("dataset.manifest"), key="dataset.manifest")
        cfg.manifest = path

    backbone = get("backbone.kind")[0] or ("toy" if source == "images" else "passthrough")
    if backbone not in ("toy", "passthrough"):
        raise ConfigError(f"unknown backbone {backbone!r}; expected toy or passthrough",
                          line=line_of("backbone.kind"), key="backbone.kind")
    if source == "features" and backbone == "toy":
        raise ConfigError("the toy backbone needs image data", line=line_of("backbone.kind"), key="backbone.kind")
    cfg.backbone = backbone
    cfg.backbone_seed = _typed(entries, "backbone.seed", int, "an integer")
    cfg.backbone_gain = _typed(entries, "backbone.gain", float, "a number")

    spatial = source != "features"
    kinds = _split_list(get("pooling.kind")[0]) or (["moments"] if spatial else ["none"])
    poolings = []
    for kind in kinds:
        if kind == "none":
            if spatial and backbone == "toy":
                raise ConfigError("feature maps must be pooled", line=line_of("pooling.kind"), key="pooling.kind")
            poolings.append(None)
            continue
        if kind not in POOLING_KINDS:
            raise ConfigError(f"unknown pooling kind {kind!r}; expected one of {', '.join(POOLING_KINDS)}",
                              line=line_of("pooling.kind"), key="pooling.kind")
        if not spatial:
            raise ConfigError("vector datasets cannot be pooled; use pooling.kind = none",
                              line=line_of("pooling.kind"), key="pooling.kind")
        params = {}
        if kind == "moments":
            params["R"] = _typed(entries, "pooling.R", int, "an integer")
            params["sigma_floor"] = _typed(entries, "pooling.sigma_floor", float, "a number")
        elif kind == "mix":
            params["alpha"] = _typed(entries, "pooling.alpha", float, "a number")
        elif kind == "lp":
            params["p"] = _typed(entries, "pooling.p", float, "a number")
        elif kind == "rap":
            params["k_percent"] = _typed(entries, "pooling.k_percent", float, "a number")
        try:
            poolings.append(PoolingSpec(kind, **params))
        except ContractError as exc:
            raise ConfigError(str(exc), line=line_of("pooling.kind"), key="pooling.kind") from None
    cfg.poolings = poolings

    learners = _split_list(get("learner.kind")[0])
    if not learners:
        raise ConfigError("at least one learner is required", line=line_of("learner.kind"), key="learner.kind")
    for kind in learners:
        if kind not in LEARNER_KINDS:
            raise ConfigError(f"unknown learner kind {kind!r}; expected one of {', '.join(LEARNER_KINDS)}",
                              line=line_of("learner.kind"), key="learner.kind")
    cfg.learners = learners
    buffer = get("learner.buffer")[0]
    cfg.learner_params = {
        "epsilon": _typed(entries, "learner.epsilon", float, "a number"),
        "lr": _typed(entries, "learner.lr", float, "a number"),
        "buffer": _typed(entries, "learner.buffer", int, "an integer") if buffer else None,
        "cbcl_threshold": _typed(entries, "learner.cbcl_threshold", float, "a number"),
        "cbcl_max": _typed(entries, "learner.cbcl_max", int, "an integer"),
        "sigma_floor": _typed(entries, "learner.sigma_floor", float, "a number"),
    }
    if not cfg.learner_params["epsilon"] > 0:
        raise ConfigError("must be > 0", line=line_of("learner.epsilon"), key="learner.epsilon")

    for key, attr in (("augment.train", "train_augs"), ("augment.test", "test_augs")):
        augs = _split_list(get(key)[0])
        if not augs:
            raise ConfigError("at least one augmentation is required", line=line_of(key), key=key)
        for a in augs:
            if a not in AUG_KINDS:
                raise ConfigError(f"unknown augmentation {a!r}; expected one of {', '.join(AUG_KINDS)}",
                                  line=line_of(key), key=key)
            if a != "clean" and source != "images":
                raise ConfigError("augmentations need image data", line=line_of(key), key=key)
        setattr(cfg, attr, augs)

    shots = get("run.shots")[0]
    cfg.shots = None if shots.lower() in ("", "all") else _typed(entries, "run.shots", int, "an integer or 'all'")
    if cfg.shots is not None and cfg.shots < 1:
        raise ConfigError("must be >= 1", line=line_of("run.shots"), key="run.shots")
    cfg.seed = _typed(entries, "run.seed", int, "an integer")
    cfg.orderings = _typed(entries, "run.orderings", int, "an integer")
    if cfg.orderings < 1:
        raise ConfigError("must be >= 1", line=line_of("run.orderings"), key="run.orderings")
    cfg.threads = _typed(entries, "run.threads", int, "an integer")
    cfg.out = get("run.out")[0]
    cfg.timing = _typed(entries, "report.timing", _bool, "true or false")
    cfg.clamp_forgetting = _typed(entries, "report.clamp_forgetting", _bool, "true or false")
    cfg.baseline = get("report.baseline")[0] or None
    names = [m[0] for m in cfg.methods]
    if cfg.baseline is not None and cfg.baseline not in names:
        raise ConfigError(f"baseline {cfg.baseline!r} is not one of the configured methods {names}",
                          line=line_of("report.baseline"), key="report.baseline")
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_config_text(text, source=path), base_dir=os.path.dirname(os.path.abspath(path)))

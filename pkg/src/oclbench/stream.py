"""Class-IID task streams: one class per task, no sample seen twice.

:func:`build_schedule` fixes the class order and the within-class shuffle
from a seed; :func:`run_stream` feeds the stream through
backbone -> pooling -> learner and evaluates on all seen classes after every
task, filling a lower-triangular accuracy matrix.
"""

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .metrics import MetricsReport
from .pooling import pool
from .rng import RngStream

EVAL_BATCH = 64


@dataclass(frozen=True)
class StreamEvent:
    sample_ref: int
    label: int
    task: int
    position: int


@dataclass(frozen=True)
class TaskSchedule:
    ordering: tuple
    per_class: dict  # class -> tuple of positions within that class's train samples
    seed: int
    shots: int | None = None

    @property
    def n_tasks(self):
        return len(self.ordering)

    def as_text(self):
        lines = [f"seed={self.seed}", f"shots={self.shots}", "ordering=" + ",".join(map(str, self.ordering))]
        for c in self.ordering:
            lines.append(f"{c}:" + ",".join(map(str, self.per_class[c])))
        return "\n".join(lines) + "\n"

    def events(self, train_y):
        """Resolve class-local positions to dataset indices."""
        train_y = np.asarray(train_y)
        for k, c in enumerate(self.ordering):
            idx = np.flatnonzero(train_y == c)
            for n, pos in enumerate(self.per_class[c]):
                yield StreamEvent(int(idx[pos]), int(c), k, n)


def build_schedule(class_ids, train_counts, shots=None, seed=0):
    """Random class order plus a shuffled, ``shots``-truncated sample list per class.

    ``train_counts`` maps class id to its number of training samples (a
    sequence aligned with ``class_ids`` is accepted too).
    """
    class_ids = [int(c) for c in class_ids]
    if len(set(class_ids)) != len(class_ids):
        raise DataError("duplicate class ids")
    if not isinstance(train_counts, dict):
        train_counts = dict(zip(class_ids, train_counts))
    if shots is not None and shots < 1:
        raise ContractError(f"shots must be >= 1, got {shots}")
    for c in class_ids:
        if train_counts.get(c, 0) < 1:
            raise DataError(f"class {c} has no training samples")
    root = RngStream(seed, "schedule")
    order = root.substream("ordering").permutation(len(class_ids))
    ordering = tuple(class_ids[i] for i in order)
    per_class = {}
    for c in ordering:
        perm = root.substream(f"shuffle/{c}").permutation(train_counts[c])
        if shots is not None:
            perm = perm[:shots]
        per_class[c] = tuple(int(i) for i in perm)
    return TaskSchedule(ordering, per_class, int(seed), shots)


@dataclass
class StepLog:
    task_index: int
    class_id: int
    seen_classes: int
    acc_seen: float
    ttime_s: float
    fps: float


@dataclass
class RunResult:
    ordering: tuple
    accuracy: np.ndarray
    steps: list = field(default_factory=list)
    task_test_counts: list = field(default_factory=list)
    final_correct: int = 0
    final_total: int = 0
    ttime_s: float = 0.0
    fps: float = float("nan")


class Embedder:
    """backbone (optional) -> pooling (optional) for single samples or batches."""

    def __init__(self, pooling=None, backbone=None, seed=0):
        self.pooling = pooling
        self.backbone = backbone
        self.rng = RngStream(seed, "pool/stochastic") if pooling is not None and pooling.kind == "stochastic" else None

    def __call__(self, batch):
        x = batch
        if self.backbone is not None:
            x = self.backbone.forward_batch(x)
        if self.pooling is not None:
            return pool(x, self.pooling, self.rng)
        return np.asarray(x, dtype=np.float64).reshape(len(x), -1)


def run_stream(schedule, learner, embed, train_x, train_y, test_x, test_y, clock=time.perf_counter):
    """Train on the schedule, evaluating on all seen classes after each task."""
    test_y = np.asarray(test_y)
    if not set(int(c) for c in np.unique(test_y)) <= set(schedule.ordering):
        raise ContractError("test set contains classes missing from the schedule")
    K = schedule.n_tasks
    R = np.full((K, K), np.nan)
    task_counts = [int(np.sum(test_y == c)) for c in schedule.ordering]
    result = RunResult(schedule.ordering, R, task_test_counts=task_counts)
    events = list(schedule.events(train_y))
    ttime = 0.0
    all_rates = []
    seen = []
    pos = 0
    for k, c in enumerate(schedule.ordering):
        start = clock()
        while pos < len(events) and events[pos].task == k:
            ev = events[pos]
            z = embed(train_x[ev.sample_ref : ev.sample_ref + 1])[0]
            learner.observe(z, ev.label)
            pos += 1
        ttime += clock() - start
        seen.append(c)

        idx = np.flatnonzero(np.isin(test_y, seen))
        correct = {s: 0 for s in seen}
        rates = []
        for b in range(0, len(idx), EVAL_BATCH):
            chunk = idx[b : b + EVAL_BATCH]
            t0 = clock()
            pred = learner.predict_batch(embed(test_x[chunk]))
            dt = clock() - t0
            if dt > 0:
                rates.append(len(chunk) / dt)
            truth = test_y[chunk]
            for s in seen:
                correct[s] += int(np.sum((pred == truth) & (truth == s)))
        for j, s in enumerate(seen):
            n_s = task_counts[j]
            R[k, j] = 100.0 * correct[s] / n_s if n_s else np.nan
        n_seen = len(idx)
        hits = sum(correct.values())
        result.steps.append(StepLog(k, int(c), len(seen), 100.0 * hits / n_seen if n_seen else float("nan"),
                                    ttime, statistics.median(rates) if rates else float("nan")))
        all_rates.extend(rates)
        if k == K - 1:
            result.final_correct, result.final_total = hits, n_seen
    result.ttime_s = ttime
    result.fps = statistics.median(all_rates) if all_rates else float("nan")
    return result


METRIC_NAMES = ("acc", "bwt", "forg", "pla", "fwt", "ttime_min", "fps")


@dataclass
class OrderingRun:
    seed: int
    result: RunResult
    metrics: MetricsReport

    def metric(self, name):
        m = self.metrics
        return {
            "acc": m.acc_final, "bwt": m.bwt, "forg": m.forg, "pla": m.pla,
            "fwt": m.fwt, "ttime_min": m.ttime_min, "fps": m.fps,
        }[name]


@dataclass
class OrderingsReport:
    runs: list
    mean: dict
    std: dict


def _aggregate(runs):
    mean, std = {}, {}
    for name in METRIC_NAMES:
        vals = [r.metric(name) for r in runs]
        if any(v is None for v in vals):
            mean[name] = std[name] = None
            continue
        arr = np.array(vals, dtype=np.float64)
        mean[name] = float(arr.mean())
        std[name] = float(arr.std())
    return mean, std


def run_ordering(seed, train_x, train_y, test_x, test_y, learner_factory, embed_factory, shots=None,
                 clamp_forgetting=False):
    """One ordering: schedule from ``seed``, fresh learner and embedder, metrics."""
    train_y = np.asarray(train_y)
    classes = sorted(set(int(c) for c in train_y))
    counts = {c: int(np.sum(train_y == c)) for c in classes}
    sched = build_schedule(classes, counts, shots=shots, seed=seed)
    res = run_stream(sched, learner_factory(seed), embed_factory(seed), train_x, train_y, test_x, test_y)
    return OrderingRun(seed, res, MetricsReport.from_run(res, clamp_forgetting=clamp_forgetting))


def multi_ordering_run(train_x, train_y, test_x, test_y, learner_factory, embed_factory, seed=0,
                       n_orderings=5, shots=None, threads=1, clamp_forgetting=False):
    """Repeat :func:`run_stream` over ordering seeds ``seed .. seed + n - 1``.

    ``learner_factory(ordering_seed)`` and ``embed_factory(ordering_seed)``
    must return fresh objects; each ordering owns its own state, so runs may
    execute on separate threads without changing the results.
    """
    if n_orderings < 1:
        raise ContractError("n_orderings must be >= 1")

    def one(i):
        return run_ordering(seed + i, train_x, train_y, test_x, test_y, learner_factory, embed_factory,
                            shots=shots, clamp_forgetting=clamp_forgetting)

    if threads > 1 and n_orderings > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            runs = list(ex.map(one, range(n_orderings)))
    else:
        runs = [one(i) for i in range(n_orderings)]
    return aggregate_runs(runs)


def aggregate_runs(runs):
    mean, std = _aggregate(runs)
    return OrderingsReport(list(runs), mean, std)

"""CSV and markdown report emission.

Every float is written with 4 decimals (``NA`` for missing values) so reruns
are byte-identical. Markdown reports are rendered from the parsed CSV text,
never from the in-memory floats, so the two cannot drift apart. Timing
columns are non-deterministic and are written as ``NA`` unless timing
output is requested.
"""

import csv
import math
import os

from .errors import DataError
from .metrics import rarg

METRICS_HEADER = ("method", "seed", "acc", "bwt", "forg", "pla", "fwt", "ttime_min", "fps")
PER_STEP_HEADER = ("method", "seed", "task_index", "class_id", "seen_classes", "acc_seen", "ttime_s", "fps")
GRID_HEADER = ("method", "train_aug", "test_aug", "acc", "acc_std")
GRID_SUMMARY_HEADER = ("method", "train_aug", "avg_od", "rarg")
BENCH_HEADER = ("learner", "method", "pooling", "ttime_min", "fps", "fps_delta_pct")

CONVENTIONS = (
    "All values are percentages except TTime (minutes) and FPS (frames per second).\n"
    "Acc: sample-weighted accuracy over all test samples after the last task.\n"
    "BwT: mean over tasks k < K-1 of R[K-1][k] - R[k][k]; negative values mean forgetting.\n"
    "Forg: mean over tasks k < K-1 of max_{k<=t<K-1} R[t][k] - R[K-1][k]; {forg_note}.\n"
    "Pla: mean of R[k][k], the accuracy on each task right after learning it.\n"
    "FwT: 0 by construction, tasks share no classes.\n"
)


def fmt(value):
    """4-decimal text, ``NA`` for None or NaN."""
    if value is None:
        return "NA"
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        return "NA"
    text = f"{value:.4f}"
    return "0.0000" if text == "-0.0000" else text


def parse_value(text):
    text = text.strip()
    if text == "NA" or text.startswith("NA("):
        return None
    try:
        return float(text)
    except ValueError:
        raise DataError(f"not a number: {text!r}") from None


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path, header=None):
    """``(header, rows)`` with rows as lists of strings; checks ``header`` when given."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if not lines:
        raise DataError(f"{path}: empty file")
    found = tuple(lines[0])
    if header is not None and found[: len(header)] != tuple(header):
        raise DataError(f"{path}: expected header {','.join(header)}, got {','.join(found)}")
    for n, row in enumerate(lines[1:], start=2):
        if len(row) != len(found):
            raise DataError(f"{path}:{n}: expected {len(found)} fields, got {len(row)}")
    return found, lines[1:]


def read_records(path, header):
    """Rows as dicts; numeric-looking columns other than text keys are parsed."""
    found, rows = read_csv(path, header)
    text_cols = {"method", "train_aug", "test_aug", "learner", "pooling"}
    out = []
    for row in rows:
        rec = {}
        for key, val in zip(found, row):
            if key in text_cols:
                rec[key] = val
            elif key in ("seed", "task_index", "class_id", "seen_classes", "step"):
                rec[key] = int(val)
            else:
                rec[key] = parse_value(val)
        out.append(rec)
    return out


def _timing(value, timing):
    return fmt(value) if timing else "NA"


# run


def metrics_rows(results, timing=False):
    rows = []
    for res in results:
        for run in res.report.runs:
            m = run.metrics
            rows.append([res.name, run.seed, fmt(m.acc_final), fmt(m.bwt), fmt(m.forg), fmt(m.pla), fmt(m.fwt),
                         _timing(m.ttime_min, timing), _timing(m.fps, timing)])
    return rows


def accuracy_rows(results):
    rows = []
    for res in results:
        for run in res.report.runs:
            for step, line in enumerate(run.result.accuracy):
                rows.append([res.name, run.seed, step] + [fmt(v) for v in line])
    return rows


def per_step_rows(results, timing=False):
    rows = []
    for res in results:
        for run in res.report.runs:
            for s in run.result.steps:
                rows.append([res.name, run.seed, s.task_index, s.class_id, s.seen_classes, fmt(s.acc_seen),
                             _timing(s.ttime_s, timing), _timing(s.fps, timing)])
    return rows


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if len(vals) != len(values) or not vals:
        return None, None
    mean = math.fsum(vals) / len(vals)
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
    return mean, std


def _md_table(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines.extend("| " + " | ".join(str(c) for c in row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def render_run_report(metrics_csv, clamp_forgetting=False):
    """Markdown summary of a ``metrics.csv`` file, computed from its text."""
    header, rows = read_csv(metrics_csv, METRICS_HEADER)
    methods = []
    by_method = {}
    for row in rows:
        if row[0] not in by_method:
            methods.append(row[0])
            by_method[row[0]] = []
        by_method[row[0]].append(row)
    cols = ("acc", "bwt", "forg", "pla", "ttime_min", "fps")
    idx = [header.index(c) for c in cols]
    summary = []
    for m in methods:
        cells = [m, str(len(by_method[m]))]
        for i in idx:
            mean, std = _mean_std([parse_value(r[i]) for r in by_method[m]])
            cells.append("NA" if mean is None else f"{fmt(mean)} ± {fmt(std)}")
        summary.append(cells)
    note = "each term is floored at 0" if clamp_forgetting else "raw, negative values mean accuracy rose"
    out = ["# Run report", "", CONVENTIONS.replace("{forg_note}", note).replace("\n", "  \n").rstrip(), "",
           "## Mean ± std over orderings", "",
           _md_table(("Method", "Orderings", "Acc", "BwT", "Forg", "Pla", "TTime [min]", "FPS"), summary),
           "## Per ordering", "",
           _md_table(header, rows)]
    return "\n".join(out)


def write_run_outputs(out_dir, results, timing=False, clamp_forgetting=False):
    os.makedirs(out_dir, exist_ok=True)
    k = results[0].report.runs[0].result.accuracy.shape[0]
    paths = {
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "accuracy": os.path.join(out_dir, "accuracy_matrix.csv"),
        "per_step": os.path.join(out_dir, "per_step.csv"),
        "report": os.path.join(out_dir, "report.md"),
    }
    write_csv(paths["metrics"], METRICS_HEADER, metrics_rows(results, timing))
    write_csv(paths["accuracy"], ("method", "seed", "step") + tuple(f"task_{j}" for j in range(k)),
              accuracy_rows(results))
    write_csv(paths["per_step"], PER_STEP_HEADER, per_step_rows(results, timing))
    with open(paths["report"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_run_report(paths["metrics"], clamp_forgetting))
    return paths


# grid


def grid_rows(cells):
    return [[c.method, c.train_aug, c.test_aug, fmt(c.acc), fmt(c.acc_std)] for c in cells]


def grid_summary_rows(summary):
    rows = []
    for s in summary:
        r = "NA(div0)" if s.rarg_note == "div0" else fmt(s.rarg)
        rows.append([s.method, s.train_aug, fmt(s.avg_od), r])
    return rows


def render_grid_report(grid_csv, summary_csv, baseline):
    _, cells = read_csv(grid_csv, GRID_HEADER)
    _, summary = read_csv(summary_csv, GRID_SUMMARY_HEADER)
    methods, trains, tests = [], [], []
    acc = {}
    for m, tr, te, a, _ in cells:
        for seq, v in ((methods, m), (trains, tr), (tests, te)):
            if v not in seq:
                seq.append(v)
        acc[m, tr, te] = a
    od = {(m, tr): (a, r) for m, tr, a, r in summary}
    out = ["# Augmentation grid", "",
           "Rows: training augmentation. Columns: test augmentation. Cells: final accuracy (%), mean over "
           "orderings; **bold** cells share the training augmentation. Avg-OD averages the other-domain "
           f"cells of a row (NA when there are none). RARG is relative to {baseline}.", ""]
    for m in methods:
        rows = []
        for tr in trains:
            line = [tr]
            for te in tests:
                v = acc.get((m, tr, te), "NA")
                line.append(f"**{v}**" if te == tr else v)
            line.extend(od[m, tr])
            rows.append(line)
        rows.append(["mean"] + [""] * len(tests) + list(od[m, "mean"]))
        out += [f"## {m}", "", _md_table(["train \\ test"] + tests + ["Avg-OD", "RARG"], rows)]
    return "\n".join(out)


def write_grid_outputs(out_dir, cells, summary, baseline):
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "grid": os.path.join(out_dir, "grid.csv"),
        "summary": os.path.join(out_dir, "grid_summary.csv"),
        "report": os.path.join(out_dir, "grid.md"),
    }
    write_csv(paths["grid"], GRID_HEADER, grid_rows(cells))
    write_csv(paths["summary"], GRID_SUMMARY_HEADER, grid_summary_rows(summary))
    with open(paths["report"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_grid_report(paths["grid"], paths["summary"], baseline))
    return paths


# bench


def write_bench_outputs(out_dir, rows):
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "bench.csv")
    md_path = os.path.join(out_dir, "bench.md")
    write_csv(csv_path, BENCH_HEADER, [[r.learner, r.method, r.pooling, fmt(r.ttime_min), fmt(r.fps),
                                        fmt(r.fps_delta_pct)] for r in rows])
    _, parsed = read_csv(csv_path, BENCH_HEADER)
    table = []
    for learner, method, _, ttime, fps, delta in parsed:
        table.append([method, ttime, fps if delta == "NA" else f"{fps} ({delta}%)"])
    text = ("# Throughput\n\nTTime: training time [min]. FPS: test frames per second through backbone, pooling "
            "and learner head, median over evaluation batches. Bracketed values give the FPS change of moment "
            "pooling relative to avg pooling with the same learner.\n\n"
            + _md_table(("Method", "TTime [min]", "FPS"), table))
    with open(md_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return {"bench": csv_path, "report": md_path}


# compare


def compare_table(metrics_files, method=None, baseline=None):
    """Markdown table of mean final accuracy: one row per method, one column per config.

    A file's config label is the name of the directory holding it. At least
    two files must share a config label. ``baseline`` and ``method`` default
    to the first and second method seen; the last row holds RARG of
    ``method`` over ``baseline`` per config.
    """
    if len(metrics_files) < 2:
        raise DataError("compare needs at least two metrics files")
    configs, methods = [], []
    values = {}
    label_files = {}
    for path in metrics_files:
        label = os.path.basename(os.path.dirname(os.path.abspath(path)))
        label_files.setdefault(label, []).append(path)
        if label not in configs:
            configs.append(label)
        per_method = {}
        for rec in read_records(path, METRICS_HEADER):
            per_method.setdefault(rec["method"], []).append(rec["acc"])
        for m, accs in per_method.items():
            if (m, label) in values:
                raise DataError(f"method {m!r} appears twice for config {label!r}")
            if m not in methods:
                methods.append(m)
            values[m, label] = _mean_std(accs)[0]
    if all(len(files) < 2 for files in label_files.values()):
        raise DataError("metrics files share no config: " + ", ".join(configs))
    if len(methods) < 2:
        raise DataError("compare needs at least two methods")
    baseline = baseline or methods[0]
    method = method or next(m for m in methods if m != baseline)
    for name in (baseline, method):
        if name not in methods:
            raise DataError(f"unknown method {name!r}; available: {', '.join(methods)}")
    rows = [[m] + [fmt(values.get((m, c))) for c in configs] for m in methods]
    gains = []
    for c in configs:
        base, new = values.get((baseline, c)), values.get((method, c))
        if base is None or new is None:
            gains.append("NA")
            continue
        try:
            gains.append(fmt(rarg(parse_value(fmt(base)), parse_value(fmt(new)))))
        except ZeroDivisionError:
            gains.append("NA(div0)")
    rows.append([f"RARG {method} vs {baseline}"] + gains)
    return _md_table(["Method"] + configs, rows)

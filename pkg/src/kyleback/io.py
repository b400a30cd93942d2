"""Artifact emission: path dumps and plot data as CSV, reports as JSON."""
import csv
import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

from .errors import IoError
from .model import ConditionResult, EquilibriumReport

SCHEMA_VERSION = "1.0"
PATH_COLUMNS = ("path_id", "t", "Z", "V", "X", "Y", "xi", "P")
PLOT_COLUMNS = ("t", "mean_P", "mean_V", "rms_gap", "lambda", "Sigma")
FILTER_COLUMNS = ("t", "m", "Sigma", "beta")


def _fmt(x):
    return format(float(x), ".17g")


def _open(path, mode="w"):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc


def _write_rows(path, header, rows):
    try:
        with _open(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow(r)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return Path(path)


def emit_paths_csv(bundles, path, stride=1):
    """Concatenate one or more PathBundles into a single CSV keyed by path_id.

    Every ``stride``-th grid point is written; the terminal point is always
    kept, so a 1000-step grid at stride 10 gives 101 rows per path.
    """
    if int(stride) < 1:
        raise ValueError("stride must be >= 1")
    stride = int(stride)
    if not isinstance(bundles, (list, tuple)):
        bundles = [bundles]

    def rows():
        for b in bundles:
            t = b.grid.times
            idx = np.arange(0, len(t), stride)
            if idx[-1] != len(t) - 1:
                idx = np.append(idx, len(t) - 1)
            cols = [b.Z, b.V, b.X, b.Y, b.xi, b.P]
            for p, pid in enumerate(b.path_ids):
                for i in idx:
                    yield [str(int(pid)), _fmt(t[i])] + [_fmt(c[p, i]) for c in cols]

    return _write_rows(path, PATH_COLUMNS, rows())


def read_paths_csv(path):
    """Inverse of emit_paths_csv: {path_id: {column: array}}."""
    out = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = next(r)
            if tuple(header) != PATH_COLUMNS:
                raise IoError(f"unexpected columns in {path}: {header}")
            for row in r:
                d = out.setdefault(int(row[0]), {c: [] for c in PATH_COLUMNS[1:]})
                for c, v in zip(PATH_COLUMNS[1:], row[1:]):
                    d[c].append(float(v))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return {k: {c: np.array(v) for c, v in d.items()} for k, d in out.items()}


def plot_data(bundles, Sigma=None):
    """Cross-sectional means on the grid of the first bundle.  Columns that do
    not apply are NaN."""
    if not isinstance(bundles, (list, tuple)):
        bundles = [bundles]
    t = bundles[0].grid.times
    P = np.concatenate([b.P for b in bundles])
    V = np.concatenate([b.V for b in bundles])
    lam = bundles[0].lam
    Sig = np.full(len(t), np.nan) if Sigma is None else np.broadcast_to(np.asarray(Sigma, float), t.shape)
    with np.errstate(invalid="ignore"):
        gap = np.sqrt(np.nanmean((P - V) ** 2, axis=0))
    return {"t": t, "mean_P": np.nanmean(P, axis=0), "mean_V": np.nanmean(V, axis=0),
            "rms_gap": gap, "lambda": np.asarray(lam, float) * np.ones(len(t)), "Sigma": Sig}


def emit_plot_csv(data, path):
    cols = [np.asarray(data[c], float) for c in PLOT_COLUMNS]
    return _write_rows(path, PLOT_COLUMNS, ([_fmt(c[i]) for c in cols] for i in range(len(cols[0]))))


def emit_filter_csv(times, state, path):
    Sigma = np.broadcast_to(state.Sigma, np.shape(times))
    beta = np.broadcast_to(state.beta, np.shape(times))
    m = np.asarray(state.m)
    m = m if m.ndim == 1 else m[0]
    return _write_rows(path, FILTER_COLUMNS,
                       ([_fmt(times[i]), _fmt(m[i]), _fmt(Sigma[i]), _fmt(beta[i])] for i in range(len(times))))


# ---------------------------------------------------------------- JSON

def _clean(x):
    """Make a value JSON safe; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        f = float(x)
        if math.isnan(f):
            return "NaN"
        if math.isinf(f):
            return "Infinity" if f > 0 else "-Infinity"
        return f
    if x is None or isinstance(x, str):
        return x
    return str(x)


def report_document(report: EquilibriumReport, meta=None, deterministic=False):
    doc = {"schema_version": SCHEMA_VERSION}
    if not deterministic:
        doc["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    doc["name"] = report.name
    doc.update(meta or {})
    doc["passed"] = report.passed
    doc["calibration"] = dict(report.calibration)
    doc["conditions"] = [c.to_dict() for c in report.conditions]
    doc["diagnostics"] = dict(report.diagnostics)
    return _clean(doc)


def emit_report_json(report, path, meta=None, deterministic=False):
    doc = report if isinstance(report, dict) else report_document(report, meta, deterministic)
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    try:
        with _open(path) as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return Path(path)


def _unclean(x):
    if isinstance(x, str) and x in ("NaN", "Infinity", "-Infinity"):
        return float(x.replace("Infinity", "inf"))
    if isinstance(x, dict):
        return {k: _unclean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_unclean(v) for v in x]
    return x


def read_report_json(path):
    """Load a report file back into (EquilibriumReport, document)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read report {path}: {exc}") from exc
    if "schema_version" not in doc:
        raise IoError(f"{path} is not a report (no schema_version)")
    d = _unclean(doc)
    rep = EquilibriumReport(d.get("name", ""), calibration=d.get("calibration", {}),
                            diagnostics=d.get("diagnostics", {}))
    for c in d.get("conditions", []):
        rep.add(ConditionResult(c["name"], c["statistic"], c["threshold"], c["pass"], c.get("details", {})))
    return rep, doc


def render_text(doc):
    """Human-readable summary of a report document."""
    lines = [f"{doc.get('name', '')}: {'PASS' if doc.get('passed') else 'FAIL'}"]
    for k, v in doc.get("calibration", {}).items():
        lines.append(f"  {k} = {v}")
    for c in doc.get("conditions", []):
        lines.append(f"  [{'pass' if c['pass'] else 'FAIL'}] {c['name']}: {c['statistic']} (threshold {c['threshold']})")
    return "\n".join(lines)

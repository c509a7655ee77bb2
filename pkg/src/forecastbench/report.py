"""Output writers: history and summary CSV, JSON records and SVG plots.

All writers go through :func:`atomic_write` so a failed run never leaves a
half-written file behind.
"""
import json
import math
import os
import tempfile
from xml.sax.saxutils import escape

import numpy as np

from .errors import DomainError

SCHEMA_VERSION = 1


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _full(x):
    return repr(float(x))


def _sig6(x):
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.6g}"


def history_csv(history):
    lines = ["epoch,train_mae,val_mae"]
    for r in history.records:
        lines.append(f"{r.epoch},{_full(r.train_mae)},{_full(r.val_mae)}")
    return "\n".join(lines) + "\n"


def summary_csv(reports):
    lines = ["model,optimizer,val_mae,test_mae,epochs"]
    for r in reports:
        lines.append(f"{r.model},{r.optimizer},{_sig6(r.val_mae)},{_sig6(r.test_mae)},{r.epochs}")
    return "\n".join(lines) + "\n"


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def report_dict(report, normalizer=None):
    out = {
        "schema": SCHEMA_VERSION,
        "model": report.model,
        "optimizer": report.optimizer,
        "seed": report.seed,
        "val_mae": _num(report.val_mae),
        "test_mae": _num(report.test_mae),
        "epochs": report.epochs,
        "steps": report.steps,
        "error": report.error,
    }
    h = report.history
    if h is not None:
        out["initial_run"] = {"epochs": h.epochs, "best_epoch": h.best_epoch,
                              "stopped_early": h.stopped_early}
    if report.test_predictions is not None:
        pred = report.test_predictions.ravel()
        actual = report.test_targets.ravel()
        out["test"] = {"origins": [int(i) for i in report.test_origins],
                       "predicted": [float(x) for x in pred],
                       "actual": [float(x) for x in actual]}
        if normalizer is not None:
            out["normalizer"] = {"min": normalizer.min_t, "max": normalizer.max_t}
            out["test"]["predicted_denormalized"] = [float(x) for x in normalizer.invert(pred)]
            out["test"]["actual_denormalized"] = [float(x) for x in normalizer.invert(actual)]
    return out


def to_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def prediction_svg(actual, predicted, title="predicted vs actual (normalized)",
                   width=800, height=400):
    actual = np.asarray(actual, dtype=np.float64).ravel()
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    if actual.size == 0 or predicted.size == 0:
        raise DomainError("cannot plot an empty series")
    if actual.size != predicted.size:
        raise DomainError("actual and predicted differ in length")
    both = np.concatenate([actual, predicted])
    finite = both[np.isfinite(both)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    left, right, top, bottom = 60, 20, 40, 40
    pw, ph = width - left - right, height - top - bottom
    n = actual.size

    def pts(y):
        xs = left + (np.arange(n) * pw / max(n - 1, 1))
        ys = top + ph - (np.clip(np.nan_to_num(y, nan=lo), lo, hi) - lo) / (hi - lo) * ph
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))

    ticks = []
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = top + ph - ph * k / 4
        ticks.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>'
                     f'<text x="{left - 6}" y="{y + 4:.2f}" font-size="10" text-anchor="end">'
                     f'{v:.3g}</text>')
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{escape(title)}</title>',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" font-size="14" text-anchor="middle">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        *ticks,
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" font-size="11" text-anchor="middle">'
        f'sample ({n} points)</text>',
        f'<polyline id="actual" fill="none" stroke="#1f77b4" stroke-width="1.2" points="{pts(actual)}"/>',
        f'<polyline id="predicted" fill="none" stroke="#d62728" stroke-width="1.2" '
        f'points="{pts(predicted)}"/>',
        f'<g font-size="11"><line x1="{left + 10}" y1="{top + 10}" x2="{left + 30}" y2="{top + 10}" '
        f'stroke="#1f77b4"/><text x="{left + 35}" y="{top + 14}">actual</text>'
        f'<line x1="{left + 10}" y1="{top + 26}" x2="{left + 30}" y2="{top + 26}" stroke="#d62728"/>'
        f'<text x="{left + 35}" y="{top + 30}">predicted</text></g>',
        '</svg>',
    ]
    return "\n".join(parts) + "\n"


def emit_prediction_svg(actual, predicted, path, **kw):
    atomic_write(path, prediction_svg(actual, predicted, **kw))

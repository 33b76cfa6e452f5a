"""Bit-exact persistence of frame stacks, result tables and plots.

Frame stacks use the minimal EMF1 container: a 20-byte little-endian
header (magic ``EMF1``, version, dtype code, width, height, n_frames)
followed by the raw pixel payload, frame-major then row-major.  A JSON
sidecar ``<path>.meta.json`` records the stack kind and the generating
parameters.  Calibration curves are written as CSV with full double
precision, and plots are emitted as self-contained SVG 1.1 documents with
no external assets, so every artifact is diffable byte for byte.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .estim import CalibrationCurve, Histogram
from .exceptions import (
    BadMagicError,
    EmptyDataError,
    FrameFormatError,
    ParseError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .readout import KIND_CLICKS, KIND_COUNTS, KIND_PHOTOELECTRONS, FrameStack

__all__ = [
    "write_stack",
    "read_stack",
    "write_curve_csv",
    "read_curve_csv",
    "render_svg",
    "CSV_HEADER",
]

_MAGIC = b"EMF1"
_VERSION = 1
_HEADER = struct.Struct("<4sHHIII")  # magic, version, dtype, width, height, n_frames

_DTYPE_CODES = {KIND_COUNTS: 0, KIND_CLICKS: 1, KIND_PHOTOELECTRONS: 2}
_CODE_KINDS = {0: KIND_COUNTS, 1: KIND_CLICKS, 2: KIND_PHOTOELECTRONS}
_CODE_NPTYPES = {0: np.dtype("<u2"), 1: np.dtype("<u1"), 2: np.dtype("<u4")}

CSV_HEADER = "T,eta_meas,eta_err,eta_pred,noise_meas,noise_err,noise_pred"


# ---------------------------------------------------------------------------
# EMF1 stacks
# ---------------------------------------------------------------------------
def write_stack(stack: FrameStack, path: str | Path, meta: dict | None = None) -> None:
    """Write a frame stack to ``path`` with its JSON sidecar."""
    path = Path(path)
    code = _DTYPE_CODES[stack.kind]
    header = _HEADER.pack(_MAGIC, _VERSION, code, stack.width, stack.height,
                          stack.n_frames)
    payload = np.ascontiguousarray(stack.data, dtype=_CODE_NPTYPES[code]).tobytes()
    path.write_bytes(header + payload)

    sidecar = {
        "kind": stack.kind,
        "width": stack.width,
        "height": stack.height,
        "n_frames": stack.n_frames,
    }
    if meta:
        sidecar.update(meta)
    Path(str(path) + ".meta.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_stack(path: str | Path) -> FrameStack:
    """Read an EMF1 stack, validating magic, version and payload size."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than the EMF1 header")
    magic, version, code, width, height, n_frames = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if code not in _CODE_KINDS:
        raise FrameFormatError(f"{path}: unknown dtype code {code}")
    dtype = _CODE_NPTYPES[code]
    expected = width * height * n_frames * dtype.itemsize
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, header promises {expected}")
    if len(payload) > expected:
        raise FrameFormatError(f"{path}: {len(payload) - expected} trailing bytes")
    data = np.frombuffer(payload, dtype=dtype).reshape(n_frames, height, width)
    # native byte order copy so downstream arithmetic is unaffected
    data = np.ascontiguousarray(data.astype(dtype.newbyteorder("=")))
    return FrameStack(width, height, n_frames, _CODE_KINDS[code], data)


# ---------------------------------------------------------------------------
# Calibration-curve CSV
# ---------------------------------------------------------------------------
def _fmt(value: float) -> str:
    return repr(float(value))


def write_curve_csv(curve: CalibrationCurve, path: str | Path,
                    include_validity: bool = False) -> None:
    """Write a calibration curve as CSV (one row per threshold).

    Numbers use shortest round-trip formatting, so parsing the file back
    recovers the doubles exactly.  ``include_validity`` appends a
    ``below_validity`` 0/1 column.
    """
    header = CSV_HEADER + (",below_validity" if include_validity else "")
    lines = [header]
    for i in range(len(curve)):
        row = [
            _fmt(curve.thresholds[i]),
            _fmt(curve.eta_measured[i]), _fmt(curve.eta_uncert[i]),
            _fmt(curve.eta_predicted[i]),
            _fmt(curve.noise_measured[i]), _fmt(curve.noise_uncert[i]),
            _fmt(curve.noise_predicted[i]),
        ]
        if include_validity:
            row.append("1" if curve.below_validity[i] else "0")
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve_csv(path: str | Path) -> CalibrationCurve:
    """Parse a curve CSV produced by :func:`write_curve_csv`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].strip()
    base_cols = CSV_HEADER.split(",")
    cols = header.split(",")
    if cols[:7] != base_cols or len(cols) > 8:
        raise ParseError(f"{path}: unexpected header {header!r}")
    has_validity = len(cols) == 8
    if has_validity and cols[7] != "below_validity":
        raise ParseError(f"{path}: unexpected extra column {cols[7]!r}")

    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise ParseError(f"{path}: row has {len(parts)} fields, expected {len(cols)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(f"{path}: non-numeric field in row {ln!r}") from exc
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), len(cols))
    below = (arr[:, 7] != 0) if has_validity else np.zeros(len(rows), dtype=bool)
    return CalibrationCurve(
        thresholds=arr[:, 0],
        eta_measured=arr[:, 1], eta_uncert=arr[:, 2],
        noise_measured=arr[:, 4], noise_uncert=arr[:, 5],
        eta_predicted=arr[:, 3], noise_predicted=arr[:, 6],
        below_validity=below,
    )


# ---------------------------------------------------------------------------
# SVG plotting
# ---------------------------------------------------------------------------
_W, _H = 640, 440
_ML, _MR, _MT, _MB = 80, 20, 30, 55
_PW, _PH = _W - _ML - _MR, _H - _MT - _MB

_MEASURED_COLOR = "#1f77b4"
_PREDICTED_COLOR = "#d62728"


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


class _Axes:
    """Maps data coordinates onto the fixed SVG plot box."""

    def __init__(self, xlim: tuple[float, float], ylim: tuple[float, float],
                 log_y: bool) -> None:
        self.x0, self.x1 = xlim
        self.log_y = log_y
        self.y0, self.y1 = ylim
        if log_y:
            self.y0 = math.log10(self.y0)
            self.y1 = math.log10(self.y1)

    def x(self, v: float) -> float:
        return _ML + (v - self.x0) / (self.x1 - self.x0) * _PW

    def y(self, v: float) -> float:
        if self.log_y:
            v = math.log10(v) if v > 0 else self.y0
        return _MT + _PH - (v - self.y0) / (self.y1 - self.y0) * _PH

    def y_ticks(self) -> list[tuple[float, str]]:
        if self.log_y:
            decades = range(math.floor(self.y0), math.ceil(self.y1) + 1)
            return [(10.0 ** d, f"1e{d}") for d in decades
                    if self.y0 - 1e-9 <= d <= self.y1 + 1e-9]
        return [(t, f"{t:g}") for t in _nice_ticks(self.y0, self.y1)]

    def x_ticks(self) -> list[tuple[float, str]]:
        return [(t, f"{t:g}") for t in _nice_ticks(self.x0, self.x1)]


def _svg_document(body: list[str], title: str) -> str:
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]
    parts.extend(body)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _axes_elements(ax: _Axes, xlabel: str, ylabel: str) -> list[str]:
    el = [
        f'<rect x="{_ML}" y="{_MT}" width="{_PW}" height="{_PH}" '
        f'fill="none" stroke="black"/>'
    ]
    for tx, label in ax.x_ticks():
        px = ax.x(tx)
        el.append(f'<line x1="{px:.2f}" y1="{_MT + _PH}" x2="{px:.2f}" '
                  f'y2="{_MT + _PH + 5}" stroke="black"/>')
        el.append(f'<text x="{px:.2f}" y="{_MT + _PH + 18}" text-anchor="middle" '
                  f'font-family="sans-serif" font-size="11">{label}</text>')
    for ty, label in ax.y_ticks():
        py = ax.y(ty)
        el.append(f'<line x1="{_ML - 5}" y1="{py:.2f}" x2="{_ML}" y2="{py:.2f}" '
                  f'stroke="black"/>')
        el.append(f'<text x="{_ML - 8}" y="{py + 4:.2f}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="11">{label}</text>')
    el.append(f'<text x="{_ML + _PW / 2:.1f}" y="{_H - 12}" text-anchor="middle" '
              f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    el.append(f'<text x="18" y="{_MT + _PH / 2:.1f}" text-anchor="middle" '
              f'font-family="sans-serif" font-size="12" '
              f'transform="rotate(-90 18 {_MT + _PH / 2:.1f})">{escape(ylabel)}</text>')
    return el


def _positive_limits(values: np.ndarray, log_y: bool) -> tuple[float, float]:
    vals = values[np.isfinite(values)]
    if log_y:
        vals = vals[vals > 0]
    if vals.size == 0:
        raise EmptyDataError("no finite data to plot")
    lo, hi = float(vals.min()), float(vals.max())
    if log_y:
        return lo / 1.5, hi * 1.5
    pad = 0.05 * (hi - lo) if hi > lo else max(abs(hi), 1.0) * 0.1
    return lo - pad, hi + pad


def _curve_svg(curve: CalibrationCurve, which: str, log_y: bool, title: str) -> str:
    if len(curve) == 0:
        raise EmptyDataError("cannot plot an empty curve")
    if which == "eta":
        meas, err, pred = curve.eta_measured, curve.eta_uncert, curve.eta_predicted
        ylabel = "detection efficiency"
    elif which == "noise":
        meas, err, pred = curve.noise_measured, curve.noise_uncert, curve.noise_predicted
        ylabel = "noise click probability"
    else:
        raise ValueError(f"unknown curve selector {which!r}")

    x = curve.thresholds
    stacked = np.concatenate([meas, pred, meas - err, meas + err])
    ylim = _positive_limits(stacked, log_y)
    ax = _Axes((float(x.min()), float(x.max())), ylim, log_y)

    body = _axes_elements(ax, "threshold (counts)", ylabel)
    pts = " ".join(f"{ax.x(float(xv)):.2f},{ax.y(float(yv)):.2f}"
                   for xv, yv in zip(x, pred) if math.isfinite(yv))
    body.append(f'<polyline points="{pts}" fill="none" '
                f'stroke="{_PREDICTED_COLOR}" stroke-width="1.5"/>')
    for xv, yv, ev in zip(x, meas, err):
        if not math.isfinite(yv):
            continue
        px = ax.x(float(xv))
        if math.isfinite(ev) and ev > 0:
            lo, hi = float(yv - ev), float(yv + ev)
            if log_y:
                lo = max(lo, ylim[0])
            y1, y2 = ax.y(lo), ax.y(hi)
            body.append(f'<line x1="{px:.2f}" y1="{y1:.2f}" x2="{px:.2f}" '
                        f'y2="{y2:.2f}" stroke="{_MEASURED_COLOR}"/>')
            for yy in (y1, y2):
                body.append(f'<line x1="{px - 3:.2f}" y1="{yy:.2f}" '
                            f'x2="{px + 3:.2f}" y2="{yy:.2f}" '
                            f'stroke="{_MEASURED_COLOR}"/>')
        body.append(f'<circle cx="{px:.2f}" cy="{ax.y(float(yv)):.2f}" r="3" '
                    f'fill="{_MEASURED_COLOR}"/>')
    body.append(f'<text x="{_ML + _PW - 8}" y="{_MT + 16}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11" '
                f'fill="{_MEASURED_COLOR}">measured</text>')
    body.append(f'<text x="{_ML + _PW - 8}" y="{_MT + 30}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11" '
                f'fill="{_PREDICTED_COLOR}">predicted</text>')
    return _svg_document(body, title)


def _histogram_svg(hist: Histogram, log_y: bool, title: str) -> str:
    if hist.total == 0 or len(hist.bin_counts) == 0:
        raise EmptyDataError("cannot plot an empty histogram")
    centers = hist.centers
    counts = hist.bin_counts.astype(np.float64)
    mask = counts > 0 if log_y else np.ones(len(counts), dtype=bool)
    if not mask.any():
        raise EmptyDataError("histogram has no plottable bins")
    ylim = _positive_limits(counts[mask], log_y)
    ax = _Axes((float(hist.bin_edges[0]), float(hist.bin_edges[-1])), ylim, log_y)
    body = _axes_elements(ax, "counts", "pixels per bin")
    for xv, yv in zip(centers[mask], counts[mask]):
        body.append(f'<circle cx="{ax.x(float(xv)):.2f}" '
                    f'cy="{ax.y(float(yv)):.2f}" r="2" fill="{_MEASURED_COLOR}"/>')
    return _svg_document(body, title)


def render_svg(data: CalibrationCurve | Histogram, path: str | Path,
               which: str = "eta", log_y: bool = False, title: str = "") -> None:
    """Render a calibration curve or histogram as a standalone SVG file.

    Curves show measured points with error bars and the predicted line;
    histograms show bin counts as points.  ``log_y`` switches to a
    decade-labelled logarithmic axis.
    """
    if isinstance(data, CalibrationCurve):
        text = _curve_svg(data, which, log_y, title or f"{which} vs threshold")
    elif isinstance(data, Histogram):
        text = _histogram_svg(data, log_y, title or "electron-count histogram")
    else:
        raise TypeError("render_svg accepts a CalibrationCurve or Histogram")
    Path(path).write_text(text)

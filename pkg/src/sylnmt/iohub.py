"""Model files, training-history CSV and SVG charts.

Model file layout (all integers little-endian u32)::

    b"SYLNMT01" | version | len + UTF-8 JSON metadata | tensor count
    | per tensor: len + UTF-8 name, rank, dims..., float32 values
    | CRC32 of every preceding byte
"""
from __future__ import annotations

import csv
import io
import json
import struct
import zlib
from html import escape
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .models import Model, ModelConfig, Vocabs, build_model
from .textproc import Vocab
from .training import EpochRecord

MAGIC = b"SYLNMT01"
FORMAT_VERSION = 1
HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


class ModelFileError(Exception):
    pass


class BadMagic(ModelFileError):
    pass


class UnsupportedVersion(ModelFileError):
    def __init__(self, found: int, expected: int = FORMAT_VERSION):
        super().__init__(f"model file version {found}, expected {expected}")
        self.found, self.expected = found, expected


class TruncatedFile(ModelFileError):
    pass


class ChecksumMismatch(ModelFileError):
    pass


class EmptyInput(ValueError):
    pass


class IoFailure(OSError):
    pass


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def _blob(b: bytes) -> bytes:
    return _u32(len(b)) + b


def encode_model(model: Model, vocabs: Vocabs, extra: Mapping | None = None) -> bytes:
    meta = {
        "config": model.config.to_dict(),
        "joint_vocab": vocabs.joint,
        "vocab_src": vocabs.src.id_to_token,
        "vocab_tgt": None if vocabs.joint else vocabs.tgt.id_to_token,
        **(dict(extra) if extra else {}),
    }
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_u32(FORMAT_VERSION))
    out.write(_blob(json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")))
    params = model.params()
    out.write(_u32(len(params)))
    for name, arr in params.items():
        out.write(_blob(name.encode("utf-8")))
        out.write(_u32(arr.ndim))
        for d in arr.shape:
            out.write(_u32(d))
        out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    payload = out.getvalue()
    return payload + _u32(zlib.crc32(payload))


def save_model(model: Model, vocabs: Vocabs, path, extra: Mapping | None = None) -> None:
    try:
        Path(path).write_bytes(encode_model(model, vocabs, extra))
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"file ends at byte {len(self.buf)}, needed {self.pos + n}")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode_model(buf: bytes):
    """Parse model file bytes into ``(model, vocabs, metadata)``."""
    r = _Reader(buf)
    if len(buf) >= len(MAGIC) and buf[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"bad magic {buf[:len(MAGIC)]!r}")
    r.take(len(MAGIC))
    version = r.u32()
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(version)
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    tensors = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        if name in tensors:
            raise ModelFileError(f"duplicate tensor {name!r}")
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    body_end = r.pos
    crc = r.u32()
    if r.pos != len(buf):
        raise ModelFileError(f"{len(buf) - r.pos} trailing bytes after checksum")
    if zlib.crc32(buf[:body_end]) != crc:
        raise ChecksumMismatch("CRC32 of payload does not match")

    src = Vocab(meta["vocab_src"], max(len(meta["vocab_src"]), 5))
    tgt = src if meta["joint_vocab"] else Vocab(meta["vocab_tgt"], max(len(meta["vocab_tgt"]), 5))
    config = ModelConfig.from_dict(meta["config"])
    model = build_model(config, 0)
    model.set_params(tensors)
    return model, Vocabs(src, tgt), meta


def load_model(path):
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return decode_model(buf)


# history -------------------------------------------------------------------

def history_csv(history: Sequence[EpochRecord]) -> str:
    lines = [",".join(HISTORY_FIELDS)]
    for r in history:
        lines.append(",".join([str(r.epoch)] + [
            f"{v:.6g}" for v in (r.train_loss, r.train_acc, r.val_loss, r.val_acc)
        ]))
    return "\n".join(lines) + "\n"


def export_history(history: Sequence[EpochRecord], path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(history_csv(history))
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_history(path) -> list[EpochRecord]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return [EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]),
                        float(r["val_loss"]), float(r["val_acc"])) for r in rows]


# SVG -----------------------------------------------------------------------

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _svg(title: str, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">\n'
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n'
        f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _axes(xlabel: str, ylabel: str, y_lo: float, y_hi: float) -> list[str]:
    x0, x1, y0, y1 = LEFT, W - RIGHT, H - BOTTOM, TOP
    out = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{H - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="18" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {(y0 + y1) / 2:.0f})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        v = y_lo + (y_hi - y_lo) * k / 4
        y = y0 - (y0 - y1) * k / 4
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{v:.3g}</text>')
    return out


def x_position(epoch: int, n_epochs: int) -> float:
    span = W - RIGHT - LEFT
    if n_epochs <= 1:
        return LEFT + span / 2
    return LEFT + span * (epoch - 1) / (n_epochs - 1)


def curves_svg(histories: Mapping[str, Sequence[EpochRecord]], kind: str) -> str:
    if not histories or not any(histories.values()):
        raise EmptyInput("need at least one non-empty history")
    series = []
    for name, hist in histories.items():
        if kind == "accuracy":
            series.append((f"{name} train", hist, [r.train_acc for r in hist]))
            series.append((f"{name} validation", hist, [r.val_acc for r in hist]))
        else:
            series.append((f"{name} train", hist, [r.train_loss for r in hist]))
            series.append((f"{name} validation", hist, [r.val_loss for r in hist]))
    values = [v for _, _, vals in series for v in vals]
    lo, hi = min(values), max(values)
    if kind == "accuracy":
        lo, hi = min(lo, 0.0), max(hi, 1.0)
    if hi == lo:
        hi = lo + 1.0
    n_epochs = max(len(h) for h in histories.values())
    y0, y1 = H - BOTTOM, TOP
    body = _axes("Epoch", "Accuracy" if kind == "accuracy" else "Loss", lo, hi)
    for i, (label, hist, vals) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(
            f"{_fmt(x_position(r.epoch, n_epochs))},{_fmt(y0 - (y0 - y1) * (v - lo) / (hi - lo))}"
            for r, v in zip(hist, vals)
        )
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = TOP + 14 + 16 * i
        body.append(f'<rect x="{W - RIGHT - 170}" y="{ly - 9}" width="12" height="3" fill="{color}"/>')
        body.append(f'<text x="{W - RIGHT - 152}" y="{ly}" font-size="12">{escape(label)}</text>')
    title = ("Train and Validation Accuracy" if kind == "accuracy"
             else "Train and Validation Loss")
    return _svg(title, body)


def bar_svg(scores: Mapping[str, float]) -> str:
    if not scores:
        raise EmptyInput("need at least one score")
    n = len(scores)
    y0, y1 = H - BOTTOM, TOP
    span = W - RIGHT - LEFT
    slot = span / n
    body = _axes("Model", "Accuracy (%)", 0.0, 100.0)
    for i, (name, acc) in enumerate(scores.items()):
        pct = 100.0 * acc
        h = (y0 - y1) * pct / 100.0
        x = LEFT + slot * i + slot * 0.2
        color = PALETTE[i % len(PALETTE)]
        body.append(f'<rect x="{_fmt(x)}" y="{_fmt(y0 - h)}" width="{_fmt(slot * 0.6)}" '
                    f'height="{_fmt(h)}" fill="{color}"/>')
        cx = x + slot * 0.3
        body.append(f'<text x="{_fmt(cx)}" y="{_fmt(y0 - h - 6)}" text-anchor="middle" '
                    f'font-size="12">{pct:.1f}%</text>')
        body.append(f'<text x="{_fmt(cx)}" y="{y0 + 16}" text-anchor="middle" '
                    f'font-size="12">{escape(name)}</text>')
    return _svg("Accuracy comparison", body)


def render_curves(histories: Mapping[str, Sequence[EpochRecord]], kind: str, path) -> None:
    """Write an accuracy/loss line chart, or a bar chart of final validation accuracy."""
    if kind == "bar":
        if not histories:
            raise EmptyInput("need at least one history")
        scores = {}
        for name, hist in histories.items():
            if not hist:
                raise EmptyInput(f"history {name!r} is empty")
            scores[name] = hist[-1].val_acc
        text = bar_svg(scores)
    elif kind in ("accuracy", "loss"):
        text = curves_svg(histories, kind)
    else:
        raise ValueError(f"unknown chart kind {kind!r}")
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e

import struct
import xml.etree.ElementTree as ET
import zlib

import numpy as np
import pytest

from sylnmt.iohub import (
    MAGIC, BadMagic, ChecksumMismatch, EmptyInput, IoFailure, TruncatedFile,
    UnsupportedVersion, decode_model, encode_model, export_history, history_csv,
    load_model, read_history, render_curves, save_model, x_position,
)
from sylnmt.models import ModelConfig, Vocabs, build_model
from sylnmt.textproc import Vocab
from sylnmt.training import EpochRecord

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def saved():
    v = Vocab(["<pad>", "<unk>", "<s>", "</s>", "ক", "খ"], 100)
    cfg = ModelConfig.default("lstm", vocab_src=6, max_len_src=3, embed_dim=4, hidden_dim=3)
    m = build_model(cfg, 0)
    return m, Vocabs(v, v), encode_model(m, Vocabs(v, v), {"direction": "syl2bn"})


def test_layout(saved):
    _, _, buf = saved
    assert buf[:8] == MAGIC == b"SYLNMT01"
    assert struct.unpack("<I", buf[8:12])[0] == 1
    assert struct.unpack("<I", buf[-4:])[0] == zlib.crc32(buf[:-4])


def test_round_trip(saved):
    m, vocabs, buf = saved
    m2, v2, meta = decode_model(buf)
    assert m2.config == m.config and meta["direction"] == "syl2bn"
    assert v2.joint and v2.src.id_to_token == vocabs.src.id_to_token
    src = np.array([[4, 5, 0]])
    assert np.array_equal(m.logits(src), m2.logits(src))
    assert encode_model(m2, v2, {"direction": "syl2bn"}) == buf


def test_separate_vocabs_round_trip():
    vs = Vocab(["<pad>", "<unk>", "<s>", "</s>", "ক"], 10)
    vt = Vocab(["<pad>", "<unk>", "<s>", "</s>", "খ", "গ"], 10)
    cfg = ModelConfig.default("seq2seq", vocab_src=5, vocab_tgt=6, max_len_src=3,
                              max_len_tgt=3, embed_dim=4, hidden_dim=3)
    _, v2, _ = decode_model(encode_model(build_model(cfg, 0), Vocabs(vs, vt)))
    assert not v2.joint and v2.tgt.id_to_token == vt.id_to_token


def test_corruptions(saved):
    _, _, buf = saved
    with pytest.raises(BadMagic):
        decode_model(b"XXXXXXXX" + buf[8:])
    with pytest.raises(TruncatedFile):
        decode_model(buf[:-7])
    with pytest.raises(TruncatedFile):
        decode_model(buf[:5])
    flipped = bytearray(buf)
    flipped[-20] ^= 0xFF
    with pytest.raises(ChecksumMismatch):
        decode_model(bytes(flipped))
    bumped = buf[:8] + struct.pack("<I", 2) + buf[12:]
    with pytest.raises(UnsupportedVersion) as e:
        decode_model(bumped)
    assert (e.value.found, e.value.expected) == (2, 1)


def test_file_io(saved, tmp_path):
    m, vocabs, buf = saved
    save_model(m, vocabs, tmp_path / "m.bin", {"direction": "syl2bn"})
    assert (tmp_path / "m.bin").read_bytes() == buf
    assert load_model(tmp_path / "m.bin")[0].config == m.config
    with pytest.raises(IoFailure):
        load_model(tmp_path / "missing.bin")


def _history(n):
    return [EpochRecord(i, 2.0 / i, 1 - 1 / (i + 1), 2.5 / i, 0.9 - 1 / (i + 2))
            for i in range(1, n + 1)]


def test_history_csv(tmp_path):
    h = _history(3)
    text = history_csv(h)
    lines = text.splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
    assert lines[1] == "1,2,0.5,2.5,0.566667"
    export_history(h, tmp_path / "h.csv")
    back = read_history(tmp_path / "h.csv")
    assert [r.epoch for r in back] == [1, 2, 3]
    assert back[1].train_loss == pytest.approx(1.0)


def test_x_position():
    assert x_position(1, 50) == 70
    assert x_position(50, 50) == 620
    assert x_position(1, 1) == 345


@pytest.mark.parametrize("kind", ["accuracy", "loss"])
def test_curve_svg_structure(kind, tmp_path):
    render_curves({"LSTM": _history(50)}, kind, tmp_path / "c.svg")
    root = ET.parse(tmp_path / "c.svg").getroot()
    assert root.tag == f"{SVG}svg"
    lines = root.findall(f"{SVG}polyline")
    assert len(lines) == 2
    for pl in lines:
        pts = pl.get("points").split()
        assert len(pts) == 50
        xs = [float(p.split(",")[0]) for p in pts]
        assert xs == sorted(xs)
    labels = [t.text for t in root.findall(f"{SVG}text")]
    assert "LSTM train" in labels and "LSTM validation" in labels


def test_bar_svg(tmp_path):
    render_curves({"A": _history(3), "B": _history(5)}, "bar", tmp_path / "b.svg")
    root = ET.parse(tmp_path / "b.svg").getroot()
    assert len(root.findall(f"{SVG}rect")) == 3
    labels = [t.text for t in root.findall(f"{SVG}text")]
    assert f"{100 * _history(3)[-1].val_acc:.1f}%" in labels


def test_plot_errors(tmp_path):
    with pytest.raises(EmptyInput):
        render_curves({}, "accuracy", tmp_path / "x.svg")
    with pytest.raises(EmptyInput):
        render_curves({"A": []}, "bar", tmp_path / "x.svg")

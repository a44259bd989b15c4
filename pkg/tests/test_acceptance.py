"""Acceptance suite. Each test carries the criterion number it checks; the
terminal summary prints one PASS/FAIL line per criterion."""
import io
import itertools
import math
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sylnmt.cli import run_cli
from sylnmt.corpus import (
    Direction, load_corpus, save_corpus, split_corpus, synthetic_corpus, table1_path,
)
from sylnmt.gradsuite import CHECKS, TOLERANCE, run_suite
from sylnmt.iohub import BadMagic, TruncatedFile, decode_model, encode_model
from sylnmt.layers import LSTM, LstmState, lstm_cell_step
from sylnmt.metrics import score
from sylnmt.models import REFERENCE_COUNTS, ModelConfig, build_model, translate_greedy
from sylnmt.training import EncodedSplit, TrainConfig, build_vocabs, encode_corpus, fit

from test_metrics import brute_force


def acceptance(n, title):
    return pytest.mark.acceptance(n, title)


def report_line(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")


# 1 ---------------------------------------------------------------------------

@acceptance(1, "itemized parameter counts")
def test_parameter_counts():
    t0 = time.perf_counter()
    b = {n: k for n, _, k in build_model(ModelConfig.default("bilstm"), 0).summary()}
    c = {n: k for n, _, k in build_model(
        ModelConfig.default("seq2seq", vocab_src=1240, vocab_tgt=885), 0).summary()}
    got = {
        "embedding(1240,256)": c["encoder_embedding"],
        "embedding(885,256)": c["decoder_embedding"],
        "dense(256->885)": c["output"],
        "bilstm(256->512/dir)": b["bilstm"],
        "attention(1024,T=15)": b["attention"],
        "dense(1024->512)": b["dense"],
        "dense(512->1240)": b["output"],
    }
    want = {
        "embedding(1240,256)": 317_440,
        "embedding(885,256)": 226_560,
        "dense(256->885)": 227_445,
        "bilstm(256->512/dir)": 3_149_824,
        "attention(1024,T=15)": 1_039,
        "dense(1024->512)": 524_800,
        "dense(512->1240)": 636_120,
    }
    assert b["embedding"] == 317_440
    built = {"bilstm": b, "seq2seq": c}
    for (kind, layer), n in REFERENCE_COUNTS.items():
        assert built[kind][layer] == n, (kind, layer)
    elapsed = time.perf_counter() - t0
    report_line(1, got == want, f"{len(want)} counts in {elapsed:.2f}s")
    assert got == want
    assert elapsed < 1.0


# 2 ---------------------------------------------------------------------------

@acceptance(2, "finite-difference gradient suite")
def test_gradient_suite():
    t0 = time.perf_counter()
    results = run_suite(range(10))
    elapsed = time.perf_counter() - t0
    assert {r.layer for r in results} == set(CHECKS) and len(results) == 10 * len(CHECKS)
    worst = max(r.report.max_rel_err for r in results)
    failed = [(r.layer, r.seed, r.report.max_rel_err) for r in results if not r.passed]
    report_line(2, not failed and elapsed < 60,
                f"{len(results)} checks, worst rel err {worst:.2e}, {elapsed:.1f}s")
    assert not failed
    assert worst < TOLERANCE
    assert elapsed < 60


# 3 ---------------------------------------------------------------------------

MEMO_LR = {"lstm": 1e-2, "bilstm": 3e-3, "seq2seq": 2e-3}


def _memorize(corpus, kind):
    cfg0 = ModelConfig.default(kind)
    vocabs = build_vocabs(corpus, cfg0.joint_vocab)
    cfg = cfg0.with_vocabs(vocabs)
    data = encode_corpus(corpus, vocabs, cfg)
    model = build_model(cfg, 0)
    tcfg = TrainConfig(epochs=300, batch_size=64 if kind == "bilstm" else 32, seed=1,
                       lr=MEMO_LR[kind], stop_at_accuracy=1.0)
    t0 = time.perf_counter()
    history = fit(model, EncodedSplit(data, data), tcfg)
    elapsed = time.perf_counter() - t0
    exact = sum(translate_greedy(model, s, vocabs) == " ".join(t.split())
                for s, t in zip(corpus.sources(), corpus.targets()))
    return history, elapsed, exact


@pytest.mark.slow
@acceptance(3, "memorization of 20 synthetic pairs and the five table pairs")
@pytest.mark.parametrize("corpus_name", ["synthetic20", "table1"])
@pytest.mark.parametrize("kind", ["lstm", "bilstm", "seq2seq"])
def test_memorization(kind, corpus_name):
    if corpus_name == "synthetic20":
        corpus = synthetic_corpus(20, seed=7)
    else:
        corpus = load_corpus(table1_path(), direction=Direction.BanglaToSylheti)
    history, elapsed, exact = _memorize(corpus, kind)
    acc = history[-1].train_acc
    ok = acc >= 0.99 and elapsed < 300 and exact == len(corpus)
    report_line(3, ok, f"{kind}/{corpus_name}: acc {acc:.4f} after {len(history)} epochs, "
                       f"{exact}/{len(corpus)} exact, {elapsed:.1f}s")
    assert len(history) <= 300
    assert acc >= 0.99
    assert elapsed < 300
    assert exact == len(corpus)


# 4 ---------------------------------------------------------------------------

@acceptance(4, "weighted recall equals accuracy")
def test_recall_equals_accuracy():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        n, k = int(rng.integers(1, 500)), int(rng.integers(2, 50))
        rep = score(rng.integers(0, k, n), rng.integers(0, k, n), k)
        worst = max(worst, abs(rep.recall_w - rep.accuracy))
    report_line(4, worst <= 1e-12, f"100 random cases, max |R_w - acc| = {worst:.1e}")
    assert worst <= 1e-12


def _compare(yt, yp, k):
    got = score(yt, yp, k).as_tuple()
    ref = brute_force(yt, yp, k)
    return max(abs(a - b) for a, b in zip(got, ref))


@acceptance(4, "confusion/report pipeline against brute force")
def test_metrics_against_brute_force():
    worst, cases = 0.0, 0
    # every label sequence pair while C^(2N) stays small
    for k, n_max in ((1, 12), (2, 6), (3, 4), (4, 3)):
        for n in range(1, n_max + 1):
            for yt in itertools.product(range(k), repeat=n):
                for yp in itertools.product(range(k), repeat=n):
                    worst = max(worst, _compare(yt, yp, k))
                    cases += 1
    # every confusion multiset beyond that; the metrics are order-free
    for k, n_max in ((2, 12), (3, 7), (4, 4)):
        cells = list(itertools.product(range(k), repeat=2))
        for n in range(1, n_max + 1):
            for combo in itertools.combinations_with_replacement(cells, n):
                yt, yp = zip(*combo)
                worst = max(worst, _compare(yt, yp, k))
                cases += 1
    rng = np.random.default_rng(12)
    for _ in range(3000):
        k, n = int(rng.integers(1, 5)), int(rng.integers(1, 13))
        yt, yp = rng.integers(0, k, n).tolist(), rng.integers(0, k, n).tolist()
        worst = max(worst, _compare(yt, yp, k))
        cases += 1
    report_line(4, worst <= 1e-12, f"{cases} cases, max deviation {worst:.1e}")
    assert worst <= 1e-12


# 5 ---------------------------------------------------------------------------

@acceptance(5, "LSTM cell point check")
def test_lstm_point():
    layer = LSTM(1, 1, 0).astype(np.float64)
    layer.params["W"][:] = 0.0
    layer.params["b"][:] = 0.0
    s = lstm_cell_step(np.zeros(1), LstmState(np.zeros(1), np.ones(1)), layer)
    h, c = float(s.h[0, 0]), float(s.c[0, 0])
    ok = abs(h - 0.23105858) < 1e-7 and abs(c - 0.5) < 1e-7
    report_line(5, ok, f"h={h:.10f} c={c:.10f}")
    assert h == pytest.approx(0.23105858, abs=1e-7)
    assert c == pytest.approx(0.5, abs=1e-7)
    # independent scalar derivation: i = f = o = sigmoid(0), candidate = tanh(0)
    assert h == pytest.approx(0.5 * math.tanh(0.5 * 1 + 0.5 * 0), abs=1e-15)


# 6 ---------------------------------------------------------------------------

def _cli(*argv):
    err = io.StringIO()
    rc = run_cli([str(a) for a in argv], io.StringIO(), err)
    assert rc == 0, err.getvalue()


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    d = tmp_path_factory.mktemp("accept")
    save_corpus(synthetic_corpus(40, seed=21, max_words=5), d / "corpus.tsv")
    _cli("prepare", "--corpus", d / "corpus.tsv", "--out", d / "data", "--seed", 3)
    return d


SMALL = ["--embed-dim", "16", "--hidden-dim", "16", "--max-len", "7"]


@acceptance(6, "deterministic training and split")
@pytest.mark.parametrize("kind", ["lstm", "bilstm", "seq2seq"])
def test_determinism(prepared, kind):
    outs = []
    for run in ("a", "b"):
        model, hist = prepared / f"{kind}-{run}.bin", prepared / f"{kind}-{run}.csv"
        _cli("train", "--model", kind, "--data", prepared / "data", "--epochs", 4,
             "--dropout", 0.2 if kind == "bilstm" else 0.0,
             "--out", model, "--history", hist, "--seed", 5, *SMALL)
        outs.append((model.read_bytes(), hist.read_bytes()))
    same = outs[0] == outs[1]
    report_line(6, same, f"{kind}: two train runs byte-identical")
    assert outs[0][0] == outs[1][0]
    assert outs[0][1] == outs[1][1]


@acceptance(6, "deterministic training and split")
def test_split_1200():
    s = split_corpus(synthetic_corpus(1200, seed=0), 0.8, seed=0)
    report_line(6, (len(s.train), len(s.validation)) == (960, 240),
                f"split 1200 -> {len(s.train)}/{len(s.validation)}")
    assert (len(s.train), len(s.validation)) == (960, 240)
    assert s == split_corpus(synthetic_corpus(1200, seed=0), 0.8, seed=0)


# 7 ---------------------------------------------------------------------------

@acceptance(7, "persistence round trip and typed corruption errors")
@pytest.mark.parametrize("kind", ["lstm", "bilstm", "seq2seq"])
def test_persistence(kind):
    corpus = synthetic_corpus(6, seed=2)
    cfg0 = ModelConfig.default(kind, embed_dim=8, hidden_dim=8, max_len_src=7,
                               **({"max_len_tgt": 8} if kind == "seq2seq" else {}))
    vocabs = build_vocabs(corpus, cfg0.joint_vocab)
    cfg = cfg0.with_vocabs(vocabs)
    model = build_model(cfg, 4)
    data = encode_corpus(corpus, vocabs, cfg)
    fit(model, EncodedSplit(data, data), TrainConfig(epochs=2, lr=1e-2))
    buf = encode_model(model, vocabs)
    loaded, v2, _ = decode_model(buf)
    exact = np.array_equal(model.forward(data.src, data.tgt), loaded.forward(data.src, data.tgt))
    exact &= np.array_equal(model.greedy_decode(data.src), loaded.greedy_decode(data.src))
    exact &= v2.src.id_to_token == vocabs.src.id_to_token
    with pytest.raises(BadMagic):
        decode_model(b"NOTMAGIC" + buf[8:])
    with pytest.raises(TruncatedFile):
        decode_model(buf[: len(buf) // 2])
    report_line(7, exact, f"{kind}: save/load/forward bit-exact, corruptions typed")
    assert exact


# 8 ---------------------------------------------------------------------------

@acceptance(8, "50-epoch curve export")
def test_curve_export(prepared):
    hist = prepared / "curve.csv"
    _cli("train", "--model", "lstm", "--data", prepared / "data", "--epochs", 50,
         "--out", prepared / "curve.bin", "--history", hist, "--seed", 0, *SMALL)
    lines = hist.read_text().splitlines()
    ok = len(lines) == 51
    for kind in ("accuracy", "loss"):
        svg = prepared / f"{kind}.svg"
        _cli("plot", "--history", f"LSTM={hist}", "--kind", kind, "--out", svg)
        root = ET.parse(svg).getroot()
        polylines = root.findall("{http://www.w3.org/2000/svg}polyline")
        ok &= len(polylines) == 2
        ok &= all(len(p.get("points").split()) == 50 for p in polylines)
    report_line(8, ok, f"{len(lines)} CSV lines, two 50-point series per chart")
    assert ok

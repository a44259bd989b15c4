"""The three translation architectures and greedy decoding.

* ``lstm``    embedding -> LSTM -> position-wise dense softmax (transducer)
* ``bilstm``  embedding -> BiLSTM -> attention -> dense -> dropout -> dense softmax
* ``seq2seq`` LSTM encoder whose final (h, c) seeds an LSTM decoder

Transducers emit one distribution per padded source position. The
encoder-decoder is trained with teacher forcing and decodes greedily.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from . import BOS, EOS, PAD
from .layers import LSTM, Attention, BiLSTM, Dense, Dropout, Embedding, Layer, LstmState
from .numcore import make_rng, softmax, softmax_cross_entropy
from .textproc import StemRules, Vocab, decode_sequence, encode_sequence, preprocess


class ModelError(ValueError):
    pass


class InvalidConfig(ModelError):
    def __init__(self, field_name: str, detail: str):
        super().__init__(f"{field_name}: {detail}")
        self.field = field_name


class MissingTarget(ModelError):
    pass


class EmptyInput(ModelError):
    pass


class ModelKind(enum.Enum):
    LstmA = "lstm"
    BiLstmB = "bilstm"
    Seq2SeqC = "seq2seq"


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind
    vocab_src: int
    vocab_tgt: int
    max_len_src: int
    max_len_tgt: int
    embed_dim: int
    hidden_dim: int
    dropout_rate: float = 0.0
    joint_vocab: bool = True
    pad_mask: bool = False

    @classmethod
    def default(cls, kind, **overrides) -> "ModelConfig":
        kind = ModelKind(kind)
        if kind is ModelKind.LstmA:
            base = dict(vocab_src=10000, vocab_tgt=10000, max_len_src=50, max_len_tgt=50,
                        embed_dim=64, hidden_dim=128)
        elif kind is ModelKind.BiLstmB:
            base = dict(vocab_src=1240, vocab_tgt=1240, max_len_src=15, max_len_tgt=15,
                        embed_dim=256, hidden_dim=512, dropout_rate=0.2)
        else:
            base = dict(vocab_src=1240, vocab_tgt=885, max_len_src=12, max_len_tgt=11,
                        embed_dim=256, hidden_dim=256, joint_vocab=False, pad_mask=True)
        base.update(overrides)
        # one shared length for transducers unless both were given
        if kind is not ModelKind.Seq2SeqC:
            if "max_len_src" in overrides and "max_len_tgt" not in overrides:
                base["max_len_tgt"] = overrides["max_len_src"]
            if base.get("joint_vocab", True) and "vocab_src" in overrides and "vocab_tgt" not in overrides:
                base["vocab_tgt"] = overrides["vocab_src"]
        cfg = cls(kind=kind, **base)
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("vocab_src", "vocab_tgt", "max_len_src", "max_len_tgt",
                     "embed_dim", "hidden_dim"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(name, "must be a positive integer")
        if self.vocab_src < 5 or self.vocab_tgt < 5:
            raise InvalidConfig("vocab_src" if self.vocab_src < 5 else "vocab_tgt",
                                "needs room for the 4 reserved ids plus one token")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate", "must lie in [0, 1)")
        if self.kind is not ModelKind.Seq2SeqC:
            if self.max_len_src != self.max_len_tgt:
                raise InvalidConfig("max_len_tgt", "transducers need max_len_tgt == max_len_src")
            if not self.joint_vocab:
                raise InvalidConfig("joint_vocab", "transducers use one joint vocabulary")
        if self.joint_vocab and self.vocab_src != self.vocab_tgt:
            raise InvalidConfig("vocab_tgt", "joint vocabulary needs vocab_src == vocab_tgt")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown config field")
        cfg = cls(**{**d, "kind": ModelKind(d["kind"])})
        cfg.validate()
        return cfg

    def with_vocabs(self, vocabs: "Vocabs") -> "ModelConfig":
        return replace(self, vocab_src=len(vocabs.src), vocab_tgt=len(vocabs.tgt))


class Vocabs(NamedTuple):
    src: Vocab
    tgt: Vocab

    @property
    def joint(self) -> bool:
        return self.src is self.tgt


def shift_right(tgt):
    """Decoder input for teacher forcing: BOS followed by the target minus its last id."""
    tgt = np.asarray(tgt)
    out = np.empty_like(tgt)
    out[:, 0] = BOS
    out[:, 1:] = tgt[:, :-1]
    return out


class Model:
    def __init__(self, config: ModelConfig, layers: dict[str, Layer]):
        self.config = config
        self.layers = layers

    @property
    def kind(self) -> ModelKind:
        return self.config.kind

    @property
    def total_params(self) -> int:
        return sum(layer.num_params for layer in self.layers.values())

    def summary(self) -> list[tuple[str, str, int]]:
        return [(name, type(layer).__name__, layer.num_params)
                for name, layer in self.layers.items()]

    def params(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": arr
                for ln, layer in self.layers.items()
                for pn, arr in layer.params.items()}

    def set_params(self, values: dict[str, np.ndarray]):
        for ln, layer in self.layers.items():
            for pn in layer.params:
                key = f"{ln}.{pn}"
                if key not in values:
                    raise ModelError(f"missing parameter {key}")
                _assign(layer, pn, values[key])
        extra = set(values) - set(self.params())
        if extra:
            raise ModelError(f"unexpected parameters: {sorted(extra)}")

    def astype(self, dtype) -> "Model":
        for layer in self.layers.values():
            layer.astype(dtype)
        return self

    # forward / backward -------------------------------------------------

    def _run(self, src, tgt, train, rng):
        L = self.layers
        tapes = {}
        if self.kind is ModelKind.Seq2SeqC:
            if tgt is None:
                raise MissingTarget("seq2seq forward needs target ids for teacher forcing")
            x, tapes["encoder_embedding"] = L["encoder_embedding"].forward(src)
            mask = (src != PAD) if self.config.pad_mask else None
            (_, (h, c)), tapes["encoder_lstm"] = L["encoder_lstm"].forward(x, mask=mask)
            y, tapes["decoder_embedding"] = L["decoder_embedding"].forward(shift_right(tgt))
            (hs, _), tapes["decoder_lstm"] = L["decoder_lstm"].forward(y, h, c)
            logits, tapes["output"] = L["output"].forward(hs)
            return logits, tapes
        if self.kind is ModelKind.LstmA:
            x, tapes["embedding"] = L["embedding"].forward(src)
            (hs, _), tapes["lstm"] = L["lstm"].forward(x)
            logits, tapes["output"] = L["output"].forward(hs)
            return logits, tapes
        x = src
        for name in ("embedding", "bilstm", "attention", "dense", "dropout", "output"):
            x, tapes[name] = L[name].forward(x, train=train, rng=rng)
        return x, tapes

    def _backprop(self, tapes, dlogits):
        L = self.layers
        grads = {}

        def put(name, g):
            for pn, arr in g.items():
                grads[f"{name}.{pn}"] = arr

        if self.kind is ModelKind.Seq2SeqC:
            dhs, g = L["output"].backward(tapes["output"], dlogits)
            put("output", g)
            (dy, dh0, dc0), g = L["decoder_lstm"].backward(tapes["decoder_lstm"], dhs)
            put("decoder_lstm", g)
            put("decoder_embedding", L["decoder_embedding"].backward(tapes["decoder_embedding"], dy)[1])
            (dx, _, _), g = L["encoder_lstm"].backward(tapes["encoder_lstm"], None, dh0, dc0)
            put("encoder_lstm", g)
            put("encoder_embedding", L["encoder_embedding"].backward(tapes["encoder_embedding"], dx)[1])
            return grads
        if self.kind is ModelKind.LstmA:
            dhs, g = L["output"].backward(tapes["output"], dlogits)
            put("output", g)
            (dx, _, _), g = L["lstm"].backward(tapes["lstm"], dhs)
            put("lstm", g)
            put("embedding", L["embedding"].backward(tapes["embedding"], dx)[1])
            return grads
        d = dlogits
        for name in ("output", "dropout", "dense", "attention", "bilstm", "embedding"):
            d, g = L[name].backward(tapes[name], d)
            put(name, g)
        return grads

    def logits(self, src, tgt=None, train=False, rng=None):
        return self._run(np.asarray(src), None if tgt is None else np.asarray(tgt), train, rng)[0]

    def forward(self, src, tgt=None, train=False, rng=None):
        """Per-position target distributions, shape ``(B, T_out, V_tgt)``."""
        return softmax(self.logits(src, tgt, train, rng), axis=-1)

    def loss_and_grads(self, src, tgt, mask_pad=False, train=True, rng=None):
        src, tgt = np.asarray(src), np.asarray(tgt)
        logits, tapes = self._run(src, tgt, train, rng)
        mask = (tgt != PAD) if mask_pad else None
        loss, probs, dlogits = softmax_cross_entropy(logits, tgt, mask)
        return loss, probs, self._backprop(tapes, dlogits)

    def loss(self, src, tgt, mask_pad=False, train=False, rng=None) -> float:
        logits, _ = self._run(np.asarray(src), np.asarray(tgt), train, rng)
        mask = (np.asarray(tgt) != PAD) if mask_pad else None
        return softmax_cross_entropy(logits, np.asarray(tgt), mask)[0]

    # inference ------------------------------------------------------------

    def greedy_decode(self, src) -> np.ndarray:
        """Greedy ids, ``(B, T)``. Seq2seq rows stop at EOS (PAD afterwards)."""
        src = np.asarray(src)
        if self.kind is not ModelKind.Seq2SeqC:
            return self.logits(src).argmax(axis=-1)
        L = self.layers
        x, _ = L["encoder_embedding"].forward(src)
        mask = (src != PAD) if self.config.pad_mask else None
        (_, state), _ = L["encoder_lstm"].forward(x, mask=mask)
        B = src.shape[0]
        out = np.full((B, self.config.max_len_tgt), PAD, dtype=np.int64)
        prev = np.full(B, BOS, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        for t in range(self.config.max_len_tgt):
            e, _ = L["decoder_embedding"].forward(prev)
            state = L["decoder_lstm"].step(e, state)
            nxt = (state.h @ L["output"].params["W"] + L["output"].params["b"]).argmax(axis=-1)
            out[:, t] = np.where(done, PAD, nxt)
            done |= nxt == EOS
            if done.all():
                break
            prev = nxt
        return out


def _assign(layer: Layer, name: str, value: np.ndarray):
    if isinstance(layer, BiLSTM):
        side, _, pn = name.partition(".")
        _assign(getattr(layer, side), pn, value)
        return
    current = layer.params[name]
    if current.shape != value.shape:
        raise ModelError(f"{name}: shape {value.shape} != {current.shape}")
    layer.params[name] = np.array(value, dtype=current.dtype)


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    config.validate()
    rng = make_rng(seed)
    c = config
    if c.kind is ModelKind.LstmA:
        layers = {
            "embedding": Embedding(c.vocab_src, c.embed_dim, rng),
            "lstm": LSTM(c.embed_dim, c.hidden_dim, rng),
            "output": Dense(c.hidden_dim, c.vocab_tgt, rng),
        }
    elif c.kind is ModelKind.BiLstmB:
        layers = {
            "embedding": Embedding(c.vocab_src, c.embed_dim, rng),
            "bilstm": BiLSTM(c.embed_dim, c.hidden_dim, rng),
            "attention": Attention(2 * c.hidden_dim, c.max_len_src, rng),
            "dense": Dense(2 * c.hidden_dim, c.hidden_dim, rng),
            "dropout": Dropout(c.dropout_rate),
            "output": Dense(c.hidden_dim, c.vocab_tgt, rng),
        }
    else:
        layers = {
            "encoder_embedding": Embedding(c.vocab_src, c.embed_dim, rng),
            "encoder_lstm": LSTM(c.embed_dim, c.hidden_dim, rng),
            "decoder_embedding": Embedding(c.vocab_tgt, c.embed_dim, rng),
            "decoder_lstm": LSTM(c.embed_dim, c.hidden_dim, rng),
            "output": Dense(c.hidden_dim, c.vocab_tgt, rng),
        }
    return Model(config, layers)


# published per-layer counts of the reference configurations, keyed by
# (kind, layer name); bilstm at V=1240, seq2seq at 1240/885
REFERENCE_COUNTS = {
    ("bilstm", "embedding"): 317_440,
    ("bilstm", "bilstm"): 3_149_824,
    ("bilstm", "attention"): 1_039,
    ("bilstm", "dense"): 524_800,
    ("bilstm", "dropout"): 0,
    ("bilstm", "output"): 636_120,
    ("seq2seq", "encoder_embedding"): 317_440,
    ("seq2seq", "decoder_embedding"): 226_560,
    ("seq2seq", "output"): 227_445,
}


# encoding helpers shared by training and inference --------------------------

def encode_sources(model_cfg: ModelConfig, vocab: Vocab, token_seqs) -> np.ndarray:
    return np.array([encode_sequence(vocab, t, model_cfg.max_len_src) for t in token_seqs],
                    dtype=np.int64).reshape(len(token_seqs), model_cfg.max_len_src)


def encode_targets(model_cfg: ModelConfig, vocab: Vocab, token_seqs) -> np.ndarray:
    if model_cfg.kind is ModelKind.Seq2SeqC:
        # tokens + EOS, EOS kept on truncation
        rows = [encode_sequence(vocab, t, model_cfg.max_len_tgt + 1, add_bos_eos=True)[1:]
                for t in token_seqs]
    else:
        rows = [encode_sequence(vocab, t, model_cfg.max_len_tgt) for t in token_seqs]
    return np.array(rows, dtype=np.int64).reshape(len(token_seqs), model_cfg.max_len_tgt)


def translate_greedy(model: Model, text: str, vocabs: Vocabs,
                     stem: StemRules | None = None) -> str:
    tokens = preprocess(text, stem)
    if not tokens:
        raise EmptyInput("nothing to translate after normalization")
    src = encode_sources(model.config, vocabs.src, [tokens])
    return decode_sequence(vocabs.tgt, model.greedy_decode(src)[0])

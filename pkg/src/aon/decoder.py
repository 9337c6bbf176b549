"""Attention decoder: additive attention over the fused sequence feeding an
LSTM that emits one symbol distribution per step until EOS."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, DataError, ShapeError
from .layers import Embedding, LSTMCell, uniform_init
from .tensor import ParameterSet, Tensor

DEFAULT_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789"


class Vocabulary:
    """Ordered symbol set plus a reserved EOS index (always last).

    Recognition is case-insensitive: text is lowercased on encode.
    """

    def __init__(self, chars: str = DEFAULT_CHARS):
        chars = chars.lower()
        if len(set(chars)) != len(chars):
            raise DataError("vocabulary characters must be unique")
        if not chars:
            raise DataError("vocabulary needs at least one character")
        self.chars = chars
        self.size = len(chars) + 1
        self.eos = len(chars)
        self._index = {ch: i for i, ch in enumerate(chars)}

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(DEFAULT_CHARS)

    def __contains__(self, ch: str) -> bool:
        return ch.lower() in self._index

    def encode(self, text: str) -> list[int]:
        out = []
        for ch in text.lower():
            if ch not in self._index:
                raise DataError(f"character {ch!r} not in vocabulary")
            out.append(self._index[ch])
        return out

    def decode(self, indices) -> str:
        out = []
        for i in indices:
            if i == self.eos:
                break
            out.append(self.chars[i])
        return "".join(out)


@dataclass
class DecoderConfig:
    hidden: int = 256
    embed_dim: int = 64
    attn_dim: int = 128
    max_len: int = 25

    def to_dict(self) -> dict:
        return {"hidden": self.hidden, "embed_dim": self.embed_dim,
                "attn_dim": self.attn_dim, "max_len": self.max_len}

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderConfig":
        return cls(hidden=int(d["hidden"]), embed_dim=int(d["embed_dim"]),
                   attn_dim=int(d["attn_dim"]), max_len=int(d["max_len"]))


@dataclass
class DecodeTrace:
    """Per-step attention weights, output distributions, and emitted symbols."""

    alphas: list[np.ndarray] = field(default_factory=list)   # each [L, N]
    dists: list[np.ndarray] = field(default_factory=list)    # each [N, V]
    emitted: list[list[int]] = field(default_factory=list)   # per sample, EOS included
    truncated: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.dists)


class AttentionDecoder:
    def __init__(self, params: ParameterSet, name: str, config: DecoderConfig,
                 feat_dim: int, vocab_size: int, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.feat_dim = feat_dim
        self.vocab_size = vocab_size
        self.dtype = dtype
        hd, ad, ed = config.hidden, config.attn_dim, config.embed_dim
        self.embed = Embedding(params, f"{name}.embed", vocab_size, ed, rng, dtype)
        self.attn_ws = params.add(f"{name}.attn.ws", Tensor(uniform_init(rng, (hd, ad), hd, dtype)))
        self.attn_wh = params.add(f"{name}.attn.wh", Tensor(uniform_init(rng, (feat_dim, ad), feat_dim, dtype)))
        self.attn_v = params.add(f"{name}.attn.v", Tensor(uniform_init(rng, (ad, 1), ad, dtype)))
        self.cell = LSTMCell(params, f"{name}.lstm", ed + feat_dim, hd, rng, dtype)
        self.w_out = params.add(f"{name}.out.w", Tensor(uniform_init(rng, (hd, vocab_size), hd, dtype)))

    # -- single building blocks -------------------------------------------------

    def init_state(self, n: int) -> tuple[Tensor, Tensor]:
        return self.cell.init_state(n, self.dtype)

    def _project_frames(self, h_hat: Tensor) -> Tensor:
        l, n, d = h_hat.data.shape
        if d != self.feat_dim:
            raise ShapeError(f"decoder built for feature dim {self.feat_dim}, got {d}")
        flat = T.reshape(h_hat, (l * n, d))
        return T.reshape(T.matmul(flat, self.attn_wh), (l, n, -1))

    def _attend(self, s_prev: Tensor, frames_proj: Tensor) -> Tensor:
        l, n, a = frames_proj.data.shape
        s_proj = T.matmul(s_prev, self.attn_ws)             # [N, A]
        e = T.tanh(T.add(frames_proj, s_proj))              # broadcast over L
        scores = T.matmul(T.reshape(e, (l * n, a)), self.attn_v)
        scores = T.reshape(scores, (l, n))
        return T.softmax(scores, axis=0)

    def attend(self, s_prev: Tensor, h_hat: Tensor) -> Tensor:
        """Additive attention: softmax over frames of v . tanh(Ws s + Wh h_j)."""
        return self._attend(s_prev, self._project_frames(h_hat))

    @staticmethod
    def glimpse(alpha: Tensor, h_hat: Tensor) -> Tensor:
        """Attention-weighted frame sum: g = sum_j alpha_j h_j, shape [N, D]."""
        l, n = alpha.data.shape
        if h_hat.data.shape[:2] != (l, n):
            raise ShapeError(f"alpha {alpha.shape} does not match frames {h_hat.shape}")
        return T.tsum(T.mul(T.reshape(alpha, (l, n, 1)), h_hat), axis=0)

    def step(self, y_prev: np.ndarray | None, g: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
        """One decoder LSTM step; y_prev None means the all-zero start embedding."""
        n = g.data.shape[0]
        if y_prev is None:
            emb = Tensor(np.zeros((n, self.config.embed_dim), dtype=self.dtype))
        else:
            emb = self.embed(np.asarray(y_prev))
        x = T.concat([emb, g], axis=1)
        return self.cell(x, state[0], state[1])

    def output(self, s: Tensor) -> Tensor:
        """Symbol distribution softmax(W^T s), rows summing to 1."""
        return T.softmax(T.matmul(s, self.w_out), axis=1)

    def output_log(self, s: Tensor) -> Tensor:
        return T.log_softmax(T.matmul(s, self.w_out), axis=1)

    # -- sequence-level paths ----------------------------------------------------

    def seq_scores(self, h_hat: Tensor, targets: list[list[int]]) -> Tensor:
        """Teacher-forced negative log-likelihood per sample, shape [N].

        Each target must end with EOS; steps after a sample's EOS are masked.
        """
        n = h_hat.data.shape[1]
        if len(targets) != n:
            raise ShapeError(f"{len(targets)} targets for batch of {n}")
        for t in targets:
            if len(t) == 0:
                raise ContractError("empty target: the minimum target is [EOS]")
        t_max = max(len(t) for t in targets)
        tgt = np.zeros((t_max, n), dtype=np.int64)
        mask = np.zeros((t_max, n), dtype=self.dtype)
        for i, seq in enumerate(targets):
            tgt[: len(seq), i] = seq
            mask[: len(seq), i] = 1.0

        frames_proj = self._project_frames(h_hat)
        state = self.init_state(n)
        total = None
        for t in range(t_max):
            alpha = self._attend(state[0], frames_proj)
            g = self.glimpse(alpha, h_hat)
            y_prev = None if t == 0 else tgt[t - 1]
            state = self.step(y_prev, g, state)
            logp = self.output_log(state[0])
            nll = T.scale(T.take_rows(logp, tgt[t]), -1.0)
            nll = T.mul(nll, Tensor(mask[t]))
            total = nll if total is None else T.add(total, nll)
        return total

    def seq_loss(self, h_hat: Tensor, targets: list[list[int]]) -> Tensor:
        """Batch-mean teacher-forced loss (scalar)."""
        scores = self.seq_scores(h_hat, targets)
        return T.scale(T.tsum(scores), 1.0 / len(targets))

    def greedy(self, h_hat: Tensor, max_len: int | None = None) -> DecodeTrace:
        """Feed back the argmax symbol until EOS or max_len steps."""
        max_len = self.config.max_len if max_len is None else max_len
        if max_len < 1:
            raise ContractError(f"max_len must be >= 1, got {max_len}")
        n = h_hat.data.shape[1]
        frames_proj = self._project_frames(h_hat)
        state = self.init_state(n)
        trace = DecodeTrace(emitted=[[] for _ in range(n)], truncated=[False] * n)
        done = np.zeros(n, dtype=bool)
        y_prev: np.ndarray | None = None
        for _ in range(max_len):
            alpha = self._attend(state[0], frames_proj)
            g = self.glimpse(alpha, h_hat)
            state = self.step(y_prev, g, state)
            dist = self.output(state[0])
            sym = dist.data.argmax(axis=1)
            trace.alphas.append(alpha.data.copy())
            trace.dists.append(dist.data.copy())
            for i in range(n):
                if not done[i]:
                    trace.emitted[i].append(int(sym[i]))
            done |= sym == self.vocab_size - 1
            if done.all():
                break
            y_prev = sym
        for i in range(n):
            trace.truncated[i] = not (trace.emitted[i] and trace.emitted[i][-1] == self.vocab_size - 1)
        return trace


def score_lexicon(decoder: AttentionDecoder, h_hat: Tensor, words: list[str],
                  vocab: Vocabulary) -> tuple[str, dict[str, float]]:
    """Teacher-force every lexicon word against one sample and pick the best.

    ``h_hat`` must hold a single sample ([L,1,D]). Words with characters
    outside the vocabulary are skipped with a warning; ties resolve to the
    first word in lexicon order. Scores are per-word log-probabilities.
    """
    if not words:
        raise ContractError("lexicon must not be empty")
    if h_hat.data.shape[1] != 1:
        raise ShapeError(f"lexicon scoring expects a single sample, got batch {h_hat.data.shape[1]}")
    usable: list[str] = []
    targets: list[list[int]] = []
    seen = set()
    for w in words:
        lw = w.lower()
        if lw in seen:
            continue
        try:
            enc = vocab.encode(lw)
        except DataError:
            warnings.warn(f"lexicon word {w!r} has out-of-vocabulary characters; skipped")
            continue
        seen.add(lw)
        usable.append(lw)
        targets.append(enc + [vocab.eos])
    if not usable:
        raise DataError("every lexicon word was out of vocabulary")
    m = len(usable)
    rep = Tensor(np.repeat(h_hat.data, m, axis=1))
    nll = decoder.seq_scores(rep, targets).data
    scores = {w: -float(v) for w, v in zip(usable, nll)}
    best = usable[int(np.argmin(nll))]
    return best, scores

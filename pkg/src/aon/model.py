"""The full recognizer: encoder -> filter gate -> attention decoder."""

from __future__ import annotations

import numpy as np

from .decoder import AttentionDecoder, DecodeTrace, DecoderConfig, Vocabulary, score_lexicon
from .encoder import AonEncoder, EncoderConfig
from .errors import ShapeError
from .fusion import fuse
from .tensor import ParameterSet, Tensor


class Recognizer:
    """End-to-end model owning the parameter set and all buffers.

    Construction is fully determined by (configs, vocab, seed, dtype), so two
    instances built from the same arguments are bitwise identical.
    """

    def __init__(self, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig, vocab: Vocabulary,
                 seed: int = 0, dtype=np.float32):
        self.enc_cfg = enc_cfg
        self.dec_cfg = dec_cfg
        self.vocab = vocab
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.buffers: dict[str, np.ndarray] = {}
        self.encoder = AonEncoder(enc_cfg, self.params, self.buffers, rng, self.dtype)
        feat_dim = enc_cfg.feature_dim * (2 if enc_cfg.mode == "concat_channel" else 1)
        self.decoder = AttentionDecoder(self.params, "dec", dec_cfg, feat_dim,
                                        vocab.size, rng, self.dtype)

    @property
    def mode(self) -> str:
        return self.enc_cfg.mode

    def _as_tensor(self, images: np.ndarray) -> Tensor:
        arr = np.asarray(images)
        if arr.ndim == 2:
            arr = arr[None, None]
        elif arr.ndim == 3:
            arr = arr[:, None]
        if arr.ndim != 4:
            raise ShapeError(f"images must be [N,1,S,S], [N,S,S] or [S,S]; got {arr.shape}")
        return Tensor(arr.astype(self.dtype, copy=False))

    def features(self, images: np.ndarray, train: bool = False) -> tuple[Tensor, Tensor | None]:
        """Fused (or mode-appropriate) decoder input plus placement clues, if any."""
        result = self.encoder.encode(self._as_tensor(images), train)
        if result.mode == "aon":
            return fuse(result.features, result.clues), result.clues
        return result.sequence, None

    def loss(self, images: np.ndarray, labels: list[str], train: bool = True) -> Tensor:
        """Teacher-forced batch-mean negative log-likelihood."""
        targets = [self.vocab.encode(lbl) + [self.vocab.eos] for lbl in labels]
        h_hat, _ = self.features(images, train)
        return self.decoder.seq_loss(h_hat, targets)

    def recognize(self, images: np.ndarray, max_len: int | None = None
                  ) -> tuple[list[str], DecodeTrace, Tensor | None]:
        """Greedy decode; returns texts (EOS stripped), the trace, and clues."""
        h_hat, clues = self.features(images, train=False)
        trace = self.decoder.greedy(h_hat, max_len)
        texts = [self.vocab.decode(seq) for seq in trace.emitted]
        return texts, trace, clues

    def lexicon_recognize(self, image: np.ndarray, words: list[str]) -> tuple[str, dict[str, float]]:
        """Pick the lexicon word with the highest teacher-forced log-probability."""
        h_hat, _ = self.features(image, train=False)
        if h_hat.data.shape[1] != 1:
            raise ShapeError("lexicon_recognize expects a single image")
        return score_lexicon(self.decoder, h_hat, words, self.vocab)

"""Four-direction feature encoder.

A basal convolution trunk (BCNN) turns the square input image into square
feature maps. The horizontal network (HN) collapses their height to 1 with
a tower of five shared convolution blocks and encodes the resulting frame
sequence with a bidirectional LSTM; the vertical network (VN) is the same
tower and BLSTM applied to the maps rotated by 90 degrees. Reversed copies
of both sequences give the four direction features. The clue network (CN)
maps the feature maps to one softmax-normalized 4-vector per frame, the
placement clues consumed by the filter gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .layers import BiLSTM, ConvBlock, Linear
from .nnops import pool_out_len
from .tensor import ParameterSet, Tensor

MODES = ("aon", "concat_channel", "concat_temporal", "hn_only")


def tower_pool_schedule(height: int) -> list[tuple[int, int]]:
    """Height-only pool kernels that bring ``height`` to exactly 1 in 5 blocks."""
    sched = []
    h = height
    for _ in range(5):
        if h > 1:
            sched.append((2, 1))
            h = pool_out_len(h, 2, 2, ceil_mode=True)
        else:
            sched.append((1, 1))
    if h != 1:
        raise ConfigError(f"feature-map height {height} not reducible to 1 by five height pools (ends at {h})")
    return sched


@dataclass
class EncoderConfig:
    """Architecture of the encoder; widths are configuration, not ground truth."""

    input_size: int = 32
    bcnn_channels: tuple[int, int, int, int] = (8, 16, 32, 32)
    tower_channels: tuple[int, ...] = (32, 32, 32, 32, 32)
    blstm_hidden: int = 32
    cn_channels: tuple[int, int] = (32, 32)
    cn_fc: int = 64
    mode: str = "aon"
    fmap_size: int = field(init=False)
    seq_len: int = field(init=False)
    feature_dim: int = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown encoder mode {self.mode!r}; expected one of {MODES}")
        if len(self.bcnn_channels) != 4:
            raise ConfigError("bcnn_channels must list 4 widths")
        if len(self.tower_channels) != 5:
            raise ConfigError("tower_channels must list 5 widths")
        if len(self.cn_channels) != 2:
            raise ConfigError("cn_channels must list 2 widths")
        s = self.input_size
        if s < 4:
            raise ConfigError(f"input_size {s} too small")
        for _ in range(2):
            s = pool_out_len(s, 2, 2, ceil_mode=False)
        self.fmap_size = s
        self.seq_len = s
        self.feature_dim = 2 * self.blstm_hidden
        tower_pool_schedule(s)  # raises if the height schedule cannot end at 1

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "bcnn_channels": list(self.bcnn_channels),
            "tower_channels": list(self.tower_channels),
            "blstm_hidden": self.blstm_hidden,
            "cn_channels": list(self.cn_channels),
            "cn_fc": self.cn_fc,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(
            input_size=int(d["input_size"]),
            bcnn_channels=tuple(d["bcnn_channels"]),
            tower_channels=tuple(d["tower_channels"]),
            blstm_hidden=int(d["blstm_hidden"]),
            cn_channels=tuple(d["cn_channels"]),
            cn_fc=int(d["cn_fc"]),
            mode=str(d["mode"]),
        )


@dataclass
class FourDirectionFeatures:
    """The four equal-length direction sequences, each [L, N, D]."""

    fwd_h: Tensor
    rev_h: Tensor
    fwd_v: Tensor
    rev_v: Tensor

    def as_tuple(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return (self.fwd_h, self.rev_h, self.fwd_v, self.rev_v)


@dataclass
class EncodeResult:
    mode: str
    sequence: Tensor | None = None            # decoder input for the non-aon modes
    features: FourDirectionFeatures | None = None
    clues: Tensor | None = None               # [L, N, 4]


class AonEncoder:
    def __init__(self, config: EncoderConfig, params: ParameterSet, buffers: dict,
                 rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        cb = config.bcnn_channels
        self.bcnn_blocks = [
            ConvBlock(params, buffers, "bcnn.b0", 1, cb[0], rng, dtype, pool=(2, 2)),
            ConvBlock(params, buffers, "bcnn.b1", cb[0], cb[1], rng, dtype, pool=(2, 2)),
            ConvBlock(params, buffers, "bcnn.b2", cb[1], cb[2], rng, dtype),
            ConvBlock(params, buffers, "bcnn.b3", cb[2], cb[3], rng, dtype),
        ]
        sched = tower_pool_schedule(config.fmap_size)
        tc = config.tower_channels
        self.tower_blocks = []
        c_in = cb[3]
        for i, (pool, c_out) in enumerate(zip(sched, tc)):
            self.tower_blocks.append(
                ConvBlock(params, buffers, f"tower.b{i}", c_in, c_out, rng, dtype,
                          pool=pool, pool_ceil=True))
            c_in = c_out
        self.blstm = BiLSTM(params, "blstm", tc[-1], config.blstm_hidden, rng, dtype)

        if config.mode == "aon":
            cn = config.cn_channels
            s = config.fmap_size
            self.cn_blocks = [
                ConvBlock(params, buffers, "cn.b0", cb[3], cn[0], rng, dtype, pool=(2, 2), pool_ceil=True),
                ConvBlock(params, buffers, "cn.b1", cn[0], cn[1], rng, dtype, pool=(2, 2), pool_ceil=True),
            ]
            for _ in range(2):
                s = pool_out_len(s, 2, 2, ceil_mode=True)
            self.cn_flat = cn[1] * s * s
            self.cn_fc1 = Linear(params, "cn.fc1", self.cn_flat, config.cn_fc, rng, dtype)
            # zero init: training starts from uniform clues, i.e. neutral fusion
            self.cn_fc2 = Linear(params, "cn.fc2", config.cn_fc, config.seq_len * 4, rng, dtype,
                                 zero_init=True)

    def _check_images(self, images: Tensor) -> None:
        if images.data.ndim != 4 or images.data.shape[1] != 1:
            raise ShapeError(f"expected grayscale [N,1,S,S] images, got {images.shape}")
        n, _, h, w = images.data.shape
        if h != w:
            raise ShapeError(f"input images must be square, got {h}x{w}")
        if h != self.config.input_size:
            raise ShapeError(f"input size {h} != configured {self.config.input_size}")
        lo, hi = float(images.data.min()), float(images.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ShapeError(f"image values must lie in [0,1], got [{lo}, {hi}]")

    def bcnn_forward(self, images: Tensor, train: bool) -> Tensor:
        self._check_images(images)
        x = images
        for block in self.bcnn_blocks:
            x = block(x, train)
        return x

    def shared_tower(self, fmaps: Tensor, train: bool) -> Tensor:
        if fmaps.data.shape[-1] != fmaps.data.shape[-2]:
            raise ShapeError(f"shared tower needs square maps, got {fmaps.shape}")
        x = fmaps
        for block in self.tower_blocks:
            x = block(x, train)
        return x

    def _sequence_from_tower(self, tower_out: Tensor) -> Tensor:
        n, c, h, length = tower_out.data.shape
        if h != 1:
            raise ShapeError(f"tower output height must be 1, got {h}")
        x = T.reshape(tower_out, (n, c, length))
        return T.transpose(x, (2, 0, 1))  # [L, N, C]

    def hn_forward(self, fmaps: Tensor, train: bool) -> tuple[Tensor, Tensor]:
        seq = self._sequence_from_tower(self.shared_tower(fmaps, train))
        fwd = self.blstm(seq)
        return fwd, T.reverse_seq(fwd)

    def vn_forward(self, fmaps: Tensor, train: bool) -> tuple[Tensor, Tensor]:
        return self.hn_forward(T.rot90(fmaps), train)

    def cn_forward(self, fmaps: Tensor, train: bool) -> Tensor:
        if self.config.mode != "aon":
            raise ConfigError(f"clue network is only built in aon mode, not {self.config.mode!r}")
        x = fmaps
        for block in self.cn_blocks:
            x = block(x, train)
        n = x.data.shape[0]
        x = T.reshape(x, (n, self.cn_flat))
        x = T.relu(self.cn_fc1(x))
        logits = self.cn_fc2(x)
        logits = T.reshape(logits, (n, self.config.seq_len, 4))
        clues = T.softmax(logits, axis=2)
        return T.transpose(clues, (1, 0, 2))  # [L, N, 4]

    def encode(self, images: Tensor, train: bool = False) -> EncodeResult:
        mode = self.config.mode
        fmaps = self.bcnn_forward(images, train)
        fwd_h, rev_h = self.hn_forward(fmaps, train)
        if mode == "hn_only":
            return EncodeResult(mode=mode, sequence=fwd_h)
        fwd_v, rev_v = self.vn_forward(fmaps, train)
        if mode == "concat_channel":
            return EncodeResult(mode=mode, sequence=T.concat([fwd_h, fwd_v], axis=2))
        if mode == "concat_temporal":
            return EncodeResult(mode=mode, sequence=T.concat([fwd_h, fwd_v], axis=0))
        features = FourDirectionFeatures(fwd_h, rev_h, fwd_v, rev_v)
        return EncodeResult(mode=mode, features=features, clues=self.cn_forward(fmaps, train))

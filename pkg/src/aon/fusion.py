"""Filter gate: clue-weighted fusion of the four direction sequences.

The gate has no parameters. At each position i the four direction vectors
are combined convexly with the 4-vector clue c_i and squashed with tanh,
so every fused coordinate lies strictly inside (-1, 1).
"""

from __future__ import annotations

from . import tensor as T
from .encoder import FourDirectionFeatures
from .errors import ShapeError
from .tensor import Tensor


def fuse(features: FourDirectionFeatures, clues: Tensor) -> Tensor:
    """Weighted sum of the four [L,N,D] sequences under [L,N,4] clues, then tanh."""
    seqs = features.as_tuple()
    l, n, d = seqs[0].data.shape
    for s in seqs:
        if s.data.shape != (l, n, d):
            raise ShapeError(f"direction sequences disagree: {s.shape} vs {(l, n, d)}")
    if clues.data.shape != (l, n, 4):
        raise ShapeError(f"clues must be [L,N,4] = {(l, n, 4)}, got {clues.shape}")
    acc = None
    for k, s in enumerate(seqs):
        w = T.slice_axis(clues, 2, k, k + 1)       # [L,N,1]
        term = T.mul(s, w)
        acc = term if acc is None else T.add(acc, term)
    return T.tanh(acc)

"""Gray labeling, intensity modulation and bit-LLR demapping.

Bits within a symbol are ordered MSB first. LLRs are natural-log ratios
``log P(bit=0) / P(bit=1)``, so positive values favour 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .airate import gaussian_loglik
from .constellation import Constellation
from .errors import DomainError


@dataclass(frozen=True, eq=False)
class Labeling:
    bits: int
    index_to_bits: np.ndarray  # (M, bits) uint8
    bits_to_index: np.ndarray  # (M,) int, indexed by the integer value of the bit word

    @property
    def m_size(self) -> int:
        return 2**self.bits

    def to_json(self) -> str:
        table = {str(i): "".join(map(str, row)) for i, row in enumerate(self.index_to_bits)}
        return json.dumps({"bits": self.bits, "msb_first": True, "labels": table}, indent=2)


def gray_labeling(bits: int) -> Labeling:
    """Binary reflected Gray code: level i carries ``i ^ (i >> 1)``."""
    if int(bits) != bits or not 1 <= bits <= 8:
        raise DomainError(f"bits must be in [1, 8], got {bits}")
    idx = np.arange(2**bits)
    words = idx ^ (idx >> 1)
    shifts = np.arange(bits - 1, -1, -1)
    table = ((words[:, None] >> shifts) & 1).astype(np.uint8)
    inverse = np.empty_like(idx)
    inverse[words] = idx
    table.setflags(write=False)
    inverse.setflags(write=False)
    return Labeling(bits, table, inverse)


def _check_pair(labeling: Labeling, c: Constellation):
    if c.m_size != labeling.m_size:
        raise DomainError(f"constellation has {c.m_size} levels, labeling expects {labeling.m_size}")


def bits_to_indices(bit_block, labeling: Labeling) -> np.ndarray:
    bits = np.asarray(bit_block, dtype=np.int64)
    b = labeling.bits
    if bits.shape[-1] % b:
        raise DomainError(f"bit block length {bits.shape[-1]} not divisible by {b}")
    groups = bits.reshape(*bits.shape[:-1], -1, b)
    words = groups @ (1 << np.arange(b - 1, -1, -1))
    return labeling.bits_to_index[words]


def modulate(bit_block, labeling: Labeling, c: Constellation) -> np.ndarray:
    """Map each group of ``b`` bits to its intensity level.

    Works on a 1-D block or on a batch along leading axes.
    """
    _check_pair(labeling, c)
    return c.levels[bits_to_indices(bit_block, labeling)]


def bit_llrs(y, c: Constellation, labeling: Labeling, sigma: float, max_log: bool = False) -> np.ndarray:
    """Per-bit LLRs for received samples ``y``; output shape ``y.shape + (b,)``.

    Exact log-sum-exp by default; ``max_log=True`` keeps only the dominant term.
    """
    _check_pair(labeling, c)
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    ll = gaussian_loglik(y, c.levels, sigma)
    out = np.empty(ll.shape[:-1] + (labeling.bits,))
    for k in range(labeling.bits):
        zero = labeling.index_to_bits[:, k] == 0
        if max_log:
            out[..., k] = ll[..., zero].max(axis=-1) - ll[..., ~zero].max(axis=-1)
        else:
            out[..., k] = logsumexp(ll[..., zero], axis=-1) - logsumexp(ll[..., ~zero], axis=-1)
    return out


def hard_demap(y, c: Constellation) -> np.ndarray:
    """Nearest level index; exact midpoints go to the lower index."""
    levels = c.levels
    y = np.asarray(y, dtype=float)
    mids = 0.5 * (levels[1:] + levels[:-1])
    return np.searchsorted(mids, y, side="left")


def demap_bits(indices, labeling: Labeling) -> np.ndarray:
    """Flattened MSB-first bit words of level indices."""
    words = labeling.index_to_bits[np.asarray(indices)]
    return words.reshape(*words.shape[:-2], -1)

"""Exponential-like geometric shaping for the optical intensity channel.

Levels are generated in three stages:

1. centroids of the M equiprobable intervals of an exponential density
   with mean ``energy``;
2. a mean-preserving stretch that moves the smallest level to zero;
3. quantization onto an integer grid of ``2**(b + n) - 1`` steps, after
   which the basic level is re-tuned so the mean is met exactly.

Standard (DC-biased) PAM is provided for comparison.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CollisionError, DomainError

DEFAULT_EXTRA_BITS = 2


@dataclass(frozen=True)
class ChannelParams:
    """Average intensity budget and Gaussian noise level of ``Y = X + Z``."""

    energy: float
    sigma: float

    def __post_init__(self):
        if not (self.energy > 0 and math.isfinite(self.energy)):
            raise DomainError(f"energy must be positive, got {self.energy}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    @property
    def snr(self) -> float:
        """Optical SNR, energy / sigma (not a squared-amplitude ratio)."""
        return self.energy / self.sigma

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)

    @classmethod
    def from_snr_db(cls, snr_db: float, energy: float = 1.0) -> "ChannelParams":
        return cls(energy=energy, sigma=energy / db_to_linear(snr_db))


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Ascending, nonnegative, equiprobable intensity levels."""

    levels: np.ndarray
    mean: float = field(init=False)

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        if levels.ndim != 1 or levels.size < 1:
            raise DomainError("levels must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(levels)):
            raise DomainError("levels must be finite")
        if levels[0] < 0:
            raise DomainError(f"levels must be nonnegative, got {levels[0]}")
        if np.any(np.diff(levels) <= 0):
            raise DomainError("levels must be strictly ascending")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "mean", float(np.mean(levels)))

    @property
    def m_size(self) -> int:
        return int(self.levels.size)

    @property
    def bits(self) -> int:
        """log2(M); raises for sizes that are not a power of two."""
        m = self.m_size
        if m < 2 or m & (m - 1):
            raise DomainError(f"constellation size {m} is not a power of two")
        return m.bit_length() - 1

    def scaled_to(self, energy: float) -> "Constellation":
        """Same shape with mean ``energy``."""
        return Constellation(self.levels * (energy / self.mean))

    def shifted(self, offset: float) -> "Constellation":
        return Constellation(self.levels + offset)

    def __len__(self):
        return self.m_size

    def __eq__(self, other):
        if not isinstance(other, Constellation):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash(self.levels.tobytes())

    def __repr__(self):
        return f"Constellation(M={self.m_size}, mean={self.mean:.6g}, levels={self.levels.tolist()!r})"


def _check_size(m_size: int, minimum: int = 2):
    if int(m_size) != m_size or m_size < minimum:
        raise DomainError(f"constellation size must be an integer >= {minimum}, got {m_size}")


def _check_energy(energy: float):
    if not (energy > 0 and math.isfinite(energy)):
        raise DomainError(f"energy must be positive, got {energy}")


def quantile(m_size: int, m: int, energy: float = 1.0) -> float:
    """m-th M-quantile of the exponential density with mean ``energy``.

    ``quantile(M, 0) == 0`` and ``quantile(M, M)`` is ``math.inf``.
    """
    _check_size(m_size, 1)
    _check_energy(energy)
    if int(m) != m or not 0 <= m <= m_size:
        raise DomainError(f"quantile index must lie in [0, {m_size}], got {m}")
    if m == m_size:
        return math.inf
    if m == 0:
        return 0.0
    return energy * math.log(m_size / (m_size - m))


def _epsilon(k: int, energy: float) -> float:
    # offset of the centroid above its quantile; k = M - m - 1 >= 1
    return energy * (1.0 - k * math.log1p(1.0 / k))


def centroid(m_size: int, m: int, energy: float = 1.0) -> float:
    """Conditional mean of the exponential density on ``[q_m, q_{m+1})``."""
    _check_size(m_size, 1)
    _check_energy(energy)
    if int(m) != m or not 0 <= m <= m_size - 1:
        raise DomainError(f"centroid index must lie in [0, {m_size - 1}], got {m}")
    if m == m_size - 1:
        return energy * (math.log(m_size) + 1.0)
    return quantile(m_size, m, energy) + _epsilon(m_size - m - 1, energy)


def centroid_constellation(m_size: int, energy: float = 1.0) -> Constellation:
    _check_size(m_size)
    return Constellation([centroid(m_size, m, energy) for m in range(m_size)])


def _scaling_divisor(m_size: int) -> float:
    # (M-1) ln(M/(M-1)) = 1 - c_0/E, i.e. 1/g(M)
    return (m_size - 1) * math.log1p(1.0 / (m_size - 1))


def shift_scale(x_c: Constellation, energy: float | None = None) -> Constellation:
    """Move the smallest centroid to zero and stretch so the mean is kept.

    ``energy`` is accepted for symmetry with the other stages; the stretch
    only depends on M because the centroid constellation already has mean
    ``energy``.
    """
    levels = x_c.levels
    _check_size(levels.size)
    if energy is not None:
        _check_energy(energy)
    out = (levels - levels[0]) / _scaling_divisor(levels.size)
    out[0] = 0.0
    return Constellation(out)


def scaling_gain(m_size: int) -> float:
    """Linear optical SNR gain g(M) of the shift-and-scale step."""
    _check_size(m_size)
    return 1.0 / _scaling_divisor(m_size)


def scaling_gain_db(m_size: int) -> float:
    return 10.0 * math.log10(scaling_gain(m_size))


def approx_gain_db(m_size: int) -> float:
    """First-order approximation 5 / ((M-1) ln 10) of :func:`scaling_gain_db`."""
    _check_size(m_size)
    return 5.0 / ((m_size - 1) * math.log(10.0))


def _bits_of(m_size: int) -> int:
    if m_size < 2 or m_size & (m_size - 1):
        raise DomainError(f"M must be a power of two, got {m_size}")
    return m_size.bit_length() - 1


def quantize_levels(x_l: Constellation, bits: int, extra_bits: int = DEFAULT_EXTRA_BITS):
    """Round stretched levels onto the grid ``{0, d, 2d, ...}``.

    Returns ``(integer_levels, d)`` with ``d = l_max / (2**(bits+extra_bits) - 1)``.
    Rounding is half-up (``floor(x + 1/2)``). Raises :class:`CollisionError`
    if two levels share a grid point.
    """
    if x_l.m_size != 2**bits:
        raise DomainError(f"constellation has {x_l.m_size} levels, expected 2**{bits}")
    if int(extra_bits) != extra_bits or extra_bits < 0:
        raise DomainError(f"extra_bits must be a nonnegative integer, got {extra_bits}")
    top = 2 ** (bits + extra_bits) - 1
    levels = x_l.levels
    d = levels[-1] / top
    ell = np.floor(levels / d + 0.5).astype(np.int64)
    # l_max / d can land one ulp below top
    ell[-1] = top
    dup = np.nonzero(np.diff(ell) <= 0)[0]
    if dup.size:
        pairs = [(int(i), int(i + 1)) for i in dup]
        raise CollisionError(
            f"M={x_l.m_size} with {extra_bits} extra bits: levels {pairs} "
            f"map to the same grid point; increase extra_bits",
            pairs,
        )
    return [int(v) for v in ell], float(d)


def basic_level(integer_levels, energy: float = 1.0) -> float:
    """Basic level Delta so that ``mean(ell) * Delta == energy``."""
    _check_energy(energy)
    ell = np.asarray(integer_levels, dtype=np.int64)
    if ell.size == 0:
        raise DomainError("integer levels must be nonempty")
    total = int(ell.sum())
    if total <= 0:
        raise DomainError("integer levels must have a positive sum")
    return energy * ell.size / total


def min_extra_bits(bits: int, limit: int = 16) -> int:
    """Smallest ``extra_bits`` for which quantization is collision-free."""
    x_l = shift_scale(centroid_constellation(2**bits))
    for n in range(limit + 1):
        try:
            quantize_levels(x_l, bits, n)
        except CollisionError:
            continue
        return n
    raise DomainError(f"no collision-free grid with up to {limit} extra bits for b={bits}")


@dataclass(frozen=True, eq=False)
class ShapedDesign:
    """All intermediate stages of the shaping pipeline for one (b, n, energy)."""

    bits: int
    extra_bits: int
    energy: float
    quantiles: tuple
    centroids: tuple
    stretched: tuple
    integer_levels: tuple
    grid_step_raw: float
    basic_level: float
    constellation: Constellation

    @property
    def m_size(self) -> int:
        return 2**self.bits

    @property
    def centroid_constellation(self) -> Constellation:
        return Constellation(self.centroids)

    @property
    def stretched_constellation(self) -> Constellation:
        return Constellation(self.stretched)

    def to_dict(self) -> dict:
        return {
            "m_size": self.m_size,
            "bits": self.bits,
            "extra_bits": self.extra_bits,
            "energy": self.energy,
            "quantiles": list(self.quantiles),
            "centroids": list(self.centroids),
            "stretched": list(self.stretched),
            "integer_levels": list(self.integer_levels),
            "grid_step_raw": self.grid_step_raw,
            "basic_level": self.basic_level,
            "levels": self.constellation.levels.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "q_m", "c_m", "l_m", "ell_m", "level"])
        rows = zip(
            self.quantiles, self.centroids, self.stretched,
            self.integer_levels, self.constellation.levels,
        )
        for m, (q, c, l, ell, level) in enumerate(rows):
            w.writerow([m, repr(float(q)), repr(float(c)), repr(float(l)), ell, repr(float(level))])
        return buf.getvalue()


def build_shaped(bits: int, extra_bits: int = DEFAULT_EXTRA_BITS, energy: float = 1.0) -> ShapedDesign:
    """Run the full quantile/centroid, stretch and quantize pipeline."""
    if int(bits) != bits or bits < 1:
        raise DomainError(f"bits must be a positive integer, got {bits}")
    _check_energy(energy)
    m_size = 2**bits
    x_c = centroid_constellation(m_size, energy)
    x_l = shift_scale(x_c, energy)
    ell, d = quantize_levels(x_l, bits, extra_bits)
    delta = basic_level(ell, energy)
    return ShapedDesign(
        bits=bits,
        extra_bits=extra_bits,
        energy=energy,
        quantiles=tuple(quantile(m_size, m, energy) for m in range(m_size)),
        centroids=tuple(x_c.levels.tolist()),
        stretched=tuple(x_l.levels.tolist()),
        integer_levels=tuple(ell),
        grid_step_raw=d,
        basic_level=delta,
        constellation=Constellation(np.asarray(ell, dtype=float) * delta),
    )


def pam(m_size: int, energy: float = 1.0) -> Constellation:
    """Uniformly spaced levels ``i * 2E/(M-1)``, mean ``energy``."""
    _check_size(m_size)
    _check_energy(energy)
    return Constellation(np.arange(m_size) * (2.0 * energy / (m_size - 1)))


def papr(c: Constellation) -> float:
    """Peak-to-average ratio: largest level over the mean."""
    if not c.mean > 0:
        raise DomainError("PAPR undefined for a zero-mean constellation")
    return float(c.levels[-1] / c.mean)

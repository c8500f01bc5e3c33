"""Monte-Carlo link simulation: LDPC-coded, Gray-labelled intensity
modulation over ``Y = X + Z``.

Every block draws its information bits and noise from its own generator,
seeded with ``mix(master_seed, point_index, block_index)``. Blocks are
processed in fixed-size batches and the stopping rule is applied in block
order, so statistics do not depend on how many threads ran the batch.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from . import __version__
from .constellation import DEFAULT_EXTRA_BITS, ChannelParams, Constellation, build_shaped, pam
from .errors import ConfigError, DomainError
from .ldpc import BPDecoder, DEFAULT_MAX_ITER, build_encoder, random_regular_code, read_alist
from .mapping import bit_llrs, gray_labeling, hard_demap, modulate

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 output function (Steele, Lea and Flood)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix(*words: int) -> int:
    """Fold integers into one 64-bit seed, ``h <- splitmix64(h ^ w)``."""
    h = 0
    for w in words:
        h = splitmix64(h ^ (int(w) & MASK64))
    return h


def block_rng(master_seed: int, point_index: int, block_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix(master_seed, point_index, block_index)))


# ------------------------------------------------------------ configuration

@dataclass(frozen=True)
class ConstellationSpec:
    kind: str = "shaped"
    bits: int = 4
    extra_bits: int = DEFAULT_EXTRA_BITS

    def build(self, energy: float) -> Constellation:
        if self.kind == "shaped":
            return build_shaped(self.bits, self.extra_bits, energy).constellation
        return pam(2**self.bits, energy)


@dataclass(frozen=True)
class CodeSpec:
    kind: str = "regular"
    n: int = 4000
    dv: int = 3
    dc: int = 6
    seed: int = 1
    path: str | None = None


@dataclass(frozen=True)
class Stopping:
    min_block_errors: int = 100
    max_blocks: int = 10_000


@dataclass(frozen=True)
class SimConfig:
    constellation: ConstellationSpec = field(default_factory=ConstellationSpec)
    code: CodeSpec = field(default_factory=CodeSpec)
    snr_grid_db: tuple = (10.0,)
    stopping: Stopping = field(default_factory=Stopping)
    master_seed: int = 0
    max_iter: int = DEFAULT_MAX_ITER
    energy: float = 1.0
    batch_size: int = 32
    demapper: str = "exact"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_grid_db"] = list(self.snr_grid_db)
        if self.code.kind == "regular":
            d["code"].pop("path")
        else:
            d["code"] = {"kind": "alist", "path": self.code.path}
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | os.PathLike | None = None) -> "SimConfig":
        """Validate a JSON-style mapping; errors name the offending field path."""
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        known = {"constellation", "code", "snr_grid_db", "stopping", "master_seed",
                 "max_iter", "energy", "batch_size", "demapper"}
        _no_extra(data, known, "config")

        cdata = _section(data, "constellation")
        _no_extra(cdata, {"kind", "bits", "extra_bits"}, "constellation")
        kind = cdata.get("kind", "shaped")
        if kind not in ("shaped", "pam"):
            raise ConfigError(f"constellation.kind: expected 'shaped' or 'pam', got {kind!r}")
        const = ConstellationSpec(
            kind=kind,
            bits=_int(cdata, "bits", 4, "constellation.bits", lo=1, hi=8),
            extra_bits=_int(cdata, "extra_bits", DEFAULT_EXTRA_BITS, "constellation.extra_bits", lo=0),
        )

        kdata = _section(data, "code")
        ckind = kdata.get("kind", "regular")
        if ckind == "regular":
            _no_extra(kdata, {"kind", "n", "dv", "dc", "seed"}, "code")
            code = CodeSpec(
                kind="regular",
                n=_int(kdata, "n", 4000, "code.n", lo=2),
                dv=_int(kdata, "dv", 3, "code.dv", lo=1),
                dc=_int(kdata, "dc", 6, "code.dc", lo=2),
                seed=_int(kdata, "seed", 1, "code.seed", lo=0),
            )
            if (code.n * code.dv) % code.dc:
                raise ConfigError("code: n*dv must be divisible by dc")
        elif ckind == "alist":
            _no_extra(kdata, {"kind", "path"}, "code")
            path = kdata.get("path")
            if not isinstance(path, str) or not path:
                raise ConfigError("code.path: expected a file path")
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            code = CodeSpec(kind="alist", path=path)
        else:
            raise ConfigError(f"code.kind: expected 'regular' or 'alist', got {ckind!r}")

        grid = data.get("snr_grid_db", [10.0])
        if not isinstance(grid, list) or not grid:
            raise ConfigError("snr_grid_db: expected a nonempty list of numbers")
        for i, v in enumerate(grid):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"snr_grid_db[{i}]: expected a finite number")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("snr_grid_db: must be strictly increasing")

        sdata = _section(data, "stopping")
        _no_extra(sdata, {"min_block_errors", "max_blocks"}, "stopping")
        stopping = Stopping(
            min_block_errors=_int(sdata, "min_block_errors", 100, "stopping.min_block_errors", lo=1),
            max_blocks=_int(sdata, "max_blocks", 10_000, "stopping.max_blocks", lo=1),
        )
        energy = data.get("energy", 1.0)
        if isinstance(energy, bool) or not isinstance(energy, (int, float)) or not energy > 0:
            raise ConfigError("energy: expected a positive number")
        demapper = data.get("demapper", "exact")
        if demapper not in ("exact", "max_log"):
            raise ConfigError(f"demapper: expected 'exact' or 'max_log', got {demapper!r}")
        return cls(
            constellation=const,
            code=code,
            snr_grid_db=tuple(float(v) for v in grid),
            stopping=stopping,
            master_seed=_int(data, "master_seed", 0, "master_seed", lo=0),
            max_iter=_int(data, "max_iter", DEFAULT_MAX_ITER, "max_iter", lo=1),
            energy=float(energy),
            batch_size=_int(data, "batch_size", 32, "batch_size", lo=1),
            demapper=demapper,
        )

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        p = Path(path)
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, base_dir=p.parent)


def _section(data, key):
    sec = data.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected an object")
    return sec


def _no_extra(d, allowed, where):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}.{extra[0]}: unknown field")


def _int(d, key, default, path, lo=None, hi=None):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{path}: {v} outside [{lo}, {hi if hi is not None else 'inf'}]")
    return v


# --------------------------------------------------------------- statistics

def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval; with zero errors, the one-sided upper bound."""
    if trials <= 0:
        return 0.0, 1.0
    if errors == 0:
        return 0.0, 1.0 - (1.0 - confidence) ** (1.0 / trials)
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = errors / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class ErrorStats:
    snr_db: float
    blocks_run: int
    bit_errors: int
    block_errors: int
    info_bits_per_block: int
    ber: float
    bler: float
    ci_low: float
    ci_high: float
    mean_iterations: float = 0.0

    @classmethod
    def from_counts(cls, snr_db, blocks, bit_errors, block_errors, info_bits, iterations=0):
        lo, hi = wilson_interval(block_errors, blocks)
        return cls(
            snr_db=float(snr_db),
            blocks_run=int(blocks),
            bit_errors=int(bit_errors),
            block_errors=int(block_errors),
            info_bits_per_block=int(info_bits),
            ber=bit_errors / (blocks * info_bits) if blocks else float("nan"),
            bler=block_errors / blocks if blocks else float("nan"),
            ci_low=lo,
            ci_high=hi,
            mean_iterations=iterations / blocks if blocks else 0.0,
        )


CSV_HEADER = ["snr_db", "blocks", "bit_errors", "block_errors", "ber", "bler", "ci_low", "ci_high"]


def stats_to_csv(stats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in stats:
        w.writerow([repr(s.snr_db), s.blocks_run, s.bit_errors, s.block_errors,
                    repr(s.ber), repr(s.bler), repr(s.ci_low), repr(s.ci_high)])
    return buf.getvalue()


def stats_from_csv(text: str, info_bits_per_block: int = 0) -> list[ErrorStats]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        out.append(ErrorStats(
            snr_db=float(r["snr_db"]), blocks_run=int(r["blocks"]), bit_errors=int(r["bit_errors"]),
            block_errors=int(r["block_errors"]), info_bits_per_block=info_bits_per_block,
            ber=float(r["ber"]), bler=float(r["bler"]), ci_low=float(r["ci_low"]), ci_high=float(r["ci_high"]),
        ))
    return out


# ---------------------------------------------------------------- the link

class Link:
    """Code, encoder, decoder, constellation and labeling for one config."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        if cfg.code.kind == "alist":
            try:
                self.h = read_alist(cfg.code.path)
            except OSError as exc:
                raise ConfigError(f"code.path: cannot read {cfg.code.path!r} ({exc.strerror})") from exc
        else:
            try:
                self.h = random_regular_code(cfg.code.n, cfg.code.dv, cfg.code.dc, cfg.code.seed)
            except DomainError as exc:
                raise ConfigError(f"code: {exc}") from exc
        b = cfg.constellation.bits
        if self.h.n % b:
            raise ConfigError(f"code length {self.h.n} is not a multiple of {b} bits per symbol")
        try:
            self.constellation = cfg.constellation.build(cfg.energy)
        except (DomainError, ValueError) as exc:
            raise ConfigError(f"constellation: {exc}") from exc
        self.labeling = gray_labeling(b)
        self.encoder = build_encoder(self.h)
        self.decoder = BPDecoder(self.h, cfg.max_iter)
        self.symbols_per_block = self.h.n // b

    @property
    def k(self) -> int:
        return self.encoder.k

    def run_blocks(self, sigma: float, point_index: int, block_indices) -> np.ndarray:
        """Simulate the given blocks; returns ``(len, 3)`` of bit errors,
        block error flag and BP iterations, in input order."""
        cfg = self.cfg
        idx = list(block_indices)
        info = np.empty((len(idx), self.k), dtype=np.uint8)
        noise = np.empty((len(idx), self.symbols_per_block))
        for row, blk in enumerate(idx):
            rng = block_rng(cfg.master_seed, point_index, blk)
            info[row] = rng.integers(0, 2, self.k, dtype=np.uint8)
            noise[row] = rng.standard_normal(self.symbols_per_block)
        code = self.encoder.encode(info)
        x = modulate(code, self.labeling, self.constellation)
        y = x + sigma * noise
        llr = bit_llrs(y, self.constellation, self.labeling, sigma, max_log=cfg.demapper == "max_log")
        llr = llr.reshape(len(idx), self.h.n)
        bits, iters, _ = self.decoder.decode_batch(llr)
        errs = (self.encoder.extract_info(bits) != info).sum(axis=1)
        return np.stack([errs, errs > 0, iters], axis=1).astype(np.int64)


def default_threads() -> int:
    env = os.environ.get("OIS_SHAPE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"OIS_SHAPE_THREADS: expected an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_point(cfg: SimConfig, snr_db: float, point_index: int = 0, threads: int = 1,
              link: Link | None = None) -> ErrorStats:
    """Simulate one SNR point until ``min_block_errors`` or ``max_blocks``."""
    link = link or Link(cfg)
    sigma = ChannelParams.from_snr_db(snr_db, cfg.energy).sigma
    stop = cfg.stopping
    blocks = bit_errors = block_errors = iterations = 0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while blocks < stop.max_blocks and block_errors < stop.min_block_errors:
            batch = range(blocks, min(blocks + cfg.batch_size, stop.max_blocks))
            if pool is None:
                res = link.run_blocks(sigma, point_index, batch)
            else:
                parts = np.array_split(np.array(batch), threads)
                futures = [pool.submit(link.run_blocks, sigma, point_index, p) for p in parts if p.size]
                res = np.concatenate([f.result() for f in futures])
            for errs, failed, its in res:
                blocks += 1
                bit_errors += int(errs)
                block_errors += int(failed)
                iterations += int(its)
                if block_errors >= stop.min_block_errors:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return ErrorStats.from_counts(snr_db, blocks, bit_errors, block_errors, link.k, iterations)


def sweep(cfg: SimConfig, threads: int = 1, link: Link | None = None, progress=None) -> list[ErrorStats]:
    """:func:`run_point` over the grid; point i is seeded with index i."""
    link = link or Link(cfg)
    out = []
    for i, s in enumerate(cfg.snr_grid_db):
        st = run_point(cfg, s, i, threads, link)
        if progress is not None:
            progress(st)
        out.append(st)
    return out


def manifest(cfg: SimConfig, link: Link, extra: dict | None = None) -> dict:
    d = {
        "tool": "ois-shape",
        "version": __version__,
        "config": cfg.to_dict(),
        "code_sha256": link.h.digest(),
        "code_n": link.h.n,
        "code_k": link.k,
        "seed_mix": "splitmix64 fold: h=0; h=splitmix64(h^w) for w in (master_seed, point, block)",
    }
    if extra:
        d.update(extra)
    return d


# ------------------------------------------------------------ gap read-out

def crossing_snr(snr_db, values, target: float) -> float:
    """SNR where a decreasing error curve first drops to ``target``.

    Interpolates log10(value) linearly between the bracketing points.
    """
    s = np.asarray(snr_db, dtype=float)
    v = np.asarray(values, dtype=float)
    for i in range(len(v) - 1):
        if v[i] >= target > v[i + 1] or v[i] > target >= v[i + 1]:
            if v[i + 1] <= 0:
                return float(s[i + 1])
            a, b = math.log10(v[i]), math.log10(v[i + 1])
            return float(s[i] + (math.log10(target) - a) / (b - a) * (s[i + 1] - s[i]))
    raise DomainError(f"curve does not cross {target}")


@dataclass(frozen=True)
class CodedGap:
    gap_db: float
    gap_low_db: float
    reference_crossing: float
    candidate_crossing: float


def coded_gap(reference, candidate, target_bler: float = 1e-2) -> CodedGap:
    """SNR gap ``reference - candidate`` at ``target_bler``.

    ``gap_low_db`` is the conservative gap: the reference crossing taken from
    its lower CI curve and the candidate crossing from its upper CI curve.
    """
    def cross(st, attr):
        return crossing_snr([x.snr_db for x in st], [getattr(x, attr) for x in st], target_bler)

    ref, cand = cross(reference, "bler"), cross(candidate, "bler")
    low = cross(reference, "ci_low") - cross(candidate, "ci_high")
    return CodedGap(ref - cand, low, ref, cand)


# --------------------------------------------------------------- uncoded

def uncoded_ser(c: Constellation, snr_db: float, n_symbols: int, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo symbol error rate with nearest-level detection.

    ``snr_db`` is the optical SNR relative to the constellation mean.
    Returns (rate, standard error).
    """
    if n_symbols <= 0:
        raise DomainError("n_symbols must be positive")
    sigma = ChannelParams.from_snr_db(snr_db, c.mean).sigma
    rng = np.random.default_rng(seed)
    errors = 0
    done = 0
    while done < n_symbols:
        n = min(1 << 20, n_symbols - done)
        idx = rng.integers(0, c.m_size, n)
        y = c.levels[idx] + sigma * rng.standard_normal(n)
        errors += int(np.count_nonzero(hard_demap(y, c) != idx))
        done += n
    p = errors / n_symbols
    return p, math.sqrt(max(p * (1 - p), 0.0) / n_symbols)


def ser_analytic(c: Constellation, sigma: float) -> float:
    """Exact nearest-level SER for equiprobable levels in Gaussian noise."""
    a = c.levels
    half = np.diff(a) / (2.0 * sigma)
    q = ndtr(-half)  # Q(d / 2 sigma) per boundary
    # each interior boundary is crossed from both neighbours
    return float(2.0 * q.sum() / a.size)

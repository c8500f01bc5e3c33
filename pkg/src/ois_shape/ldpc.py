"""Binary LDPC codes: alist I/O, random regular construction, systematic
encoding over GF(2) and flooding sum-product decoding.

LLR convention matches :mod:`ois_shape.mapping`: positive favours bit 0.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import sparse

from .errors import AlistParseError, DomainError

LLR_CLIP = 30.0
DEFAULT_MAX_ITER = 50


@dataclass(frozen=True, eq=False)
class ParityCheckMatrix:
    """Sparse binary parity-check matrix stored as an edge list.

    Edges are sorted by (check, variable).
    """

    n: int
    m_rows: int
    edge_checks: np.ndarray
    edge_vars: np.ndarray
    _cols: tuple = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.edge_checks, dtype=np.int64)
        v = np.asarray(self.edge_vars, dtype=np.int64)
        if c.shape != v.shape or c.ndim != 1:
            raise DomainError("edge arrays must be 1-D and of equal length")
        if c.size and (c.min() < 0 or c.max() >= self.m_rows or v.min() < 0 or v.max() >= self.n):
            raise DomainError("edge index out of bounds")
        order = np.lexsort((v, c))
        c, v = c[order], v[order]
        if np.any((np.diff(c) == 0) & (np.diff(v) == 0)):
            raise DomainError("duplicate edge")
        row_deg = np.bincount(c, minlength=self.m_rows)
        col_deg = np.bincount(v, minlength=self.n)
        if np.any(row_deg == 0):
            raise DomainError(f"empty row {int(np.argmin(row_deg))}")
        if np.any(col_deg == 0):
            raise DomainError(f"empty column {int(np.argmin(col_deg))}")
        for arr in (c, v):
            arr.setflags(write=False)
        object.__setattr__(self, "edge_checks", c)
        object.__setattr__(self, "edge_vars", v)
        vorder = np.lexsort((c, v))
        object.__setattr__(self, "_cols", (vorder, row_deg, col_deg))

    @classmethod
    def from_dense(cls, h) -> "ParityCheckMatrix":
        h = np.asarray(h)
        c, v = np.nonzero(h % 2)
        return cls(h.shape[1], h.shape[0], c, v)

    @classmethod
    def from_supports(cls, n: int, row_supports) -> "ParityCheckMatrix":
        checks = [i for i, row in enumerate(row_supports) for _ in row]
        vars_ = [j for row in row_supports for j in row]
        return cls(n, len(row_supports), np.array(checks, dtype=np.int64), np.array(vars_, dtype=np.int64))

    @property
    def design_rate(self) -> float:
        return 1.0 - self.m_rows / self.n

    @property
    def row_degrees(self) -> np.ndarray:
        return self._cols[1]

    @property
    def col_degrees(self) -> np.ndarray:
        return self._cols[2]

    @property
    def row_supports(self) -> list[list[int]]:
        starts = np.concatenate(([0], np.cumsum(self.row_degrees)))
        return [self.edge_vars[starts[i]:starts[i + 1]].tolist() for i in range(self.m_rows)]

    @property
    def col_supports(self) -> list[list[int]]:
        vorder = self._cols[0]
        checks = self.edge_checks[vorder]
        starts = np.concatenate(([0], np.cumsum(self.col_degrees)))
        return [checks[starts[j]:starts[j + 1]].tolist() for j in range(self.n)]

    @property
    def num_edges(self) -> int:
        return int(self.edge_checks.size)

    def to_dense(self) -> np.ndarray:
        h = np.zeros((self.m_rows, self.n), dtype=np.uint8)
        h[self.edge_checks, self.edge_vars] = 1
        return h

    def to_sparse(self) -> sparse.csr_matrix:
        data = np.ones(self.num_edges, dtype=np.int32)
        return sparse.csr_matrix((data, (self.edge_checks, self.edge_vars)), shape=(self.m_rows, self.n))

    def digest(self) -> str:
        """SHA-256 over the canonical alist text."""
        return hashlib.sha256(write_alist(self).encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ParityCheckMatrix):
            return NotImplemented
        return (self.n == other.n and self.m_rows == other.m_rows
                and np.array_equal(self.edge_checks, other.edge_checks)
                and np.array_equal(self.edge_vars, other.edge_vars))

    __hash__ = None


# ----------------------------------------------------------------- alist I/O

def parse_alist(text: str) -> ParityCheckMatrix:
    """Parse MacKay's alist format. Zero entries are padding and ignored."""
    lines = [(k + 1, ln.split()) for k, ln in enumerate(text.splitlines())]
    lines = [(k, toks) for k, toks in lines if toks]
    pos = 0

    def take(count=None, what="line"):
        nonlocal pos
        if pos >= len(lines):
            raise AlistParseError(f"unexpected end of input while reading {what}")
        lineno, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistParseError(f"non-integer token in {what}", lineno) from None
        if count is not None and len(vals) != count:
            raise AlistParseError(f"{what}: expected {count} values, got {len(vals)}", lineno)
        return lineno, vals

    ln, (n, m) = take(2, "header 'n m'")
    if n <= 0 or m <= 0:
        raise AlistParseError("n and m must be positive", ln)
    ln, (max_dv, max_dc) = take(2, "maximum degrees")
    ln_dv, col_deg = take(n, "column degrees")
    ln_dc, row_deg = take(m, "row degrees")
    for lineno, degs, mx, name in ((ln_dv, col_deg, max_dv, "column"), (ln_dc, row_deg, max_dc, "row")):
        for idx, d in enumerate(degs):
            if d <= 0:
                raise AlistParseError(f"empty {name} {idx}", lineno)
            if d > mx:
                raise AlistParseError(f"{name} {idx} degree {d} exceeds declared maximum {mx}", lineno)

    def read_lists(count, degs, bound, name):
        out = []
        for idx in range(count):
            lineno, vals = take(None, f"{name} {idx} support")
            nz = [x for x in vals if x != 0]
            if len(nz) != degs[idx]:
                raise AlistParseError(f"{name} {idx}: {len(nz)} entries but degree {degs[idx]}", lineno)
            if any(x < 0 or x > bound for x in nz):
                raise AlistParseError(f"{name} {idx}: index out of range 1..{bound}", lineno)
            if len(set(nz)) != len(nz):
                raise AlistParseError(f"{name} {idx}: repeated index", lineno)
            out.append((lineno, [x - 1 for x in nz]))
        return out

    col_lists = read_lists(n, col_deg, m, "column")
    row_lists = read_lists(m, row_deg, n, "row")
    if pos != len(lines):
        raise AlistParseError("trailing content", lines[pos][0])

    from_cols = {(r, j) for j, (_, rows) in enumerate(col_lists) for r in rows}
    from_rows = {(i, c) for i, (_, cols) in enumerate(row_lists) for c in cols}
    if from_cols != from_rows:
        bad = sorted(from_cols ^ from_rows)[0]
        lineno = row_lists[bad[0]][0]
        raise AlistParseError(f"row and column listings disagree at entry (row {bad[0]}, col {bad[1]})", lineno)
    return ParityCheckMatrix.from_supports(n, [cols for _, cols in row_lists])


def write_alist(h: ParityCheckMatrix) -> str:
    """Canonical alist text: sorted 1-based supports, no zero padding."""
    cols = h.col_supports
    rows = h.row_supports
    out = [
        f"{h.n} {h.m_rows}",
        f"{int(h.col_degrees.max())} {int(h.row_degrees.max())}",
        " ".join(str(int(d)) for d in h.col_degrees),
        " ".join(str(int(d)) for d in h.row_degrees),
    ]
    out += [" ".join(str(r + 1) for r in col) for col in cols]
    out += [" ".join(str(c + 1) for c in row) for row in rows]
    return "\n".join(out) + "\n"


def read_alist(path) -> ParityCheckMatrix:
    with open(path, encoding="ascii") as fh:
        return parse_alist(fh.read())


# ------------------------------------------------------- random construction

def _four_cycle_edges(checks, vars_, n, m) -> np.ndarray:
    """Indices of edges that sit on a length-4 cycle (one edge per cycle)."""
    h = sparse.csr_matrix((np.ones(checks.size, dtype=np.int32), (checks, vars_)), shape=(m, n))
    overlap = sparse.triu(h @ h.T, k=1).tocoo()
    hot = overlap.data >= 2
    bad = set()
    if not np.any(hot):
        return np.empty(0, dtype=np.int64)
    edge_id = {(int(c), int(v)): e for e, (c, v) in enumerate(zip(checks, vars_))}
    rows = h.tolil().rows
    for c1, c2 in zip(overlap.row[hot], overlap.col[hot]):
        shared = sorted(set(rows[c1]) & set(rows[c2]))
        bad.add(edge_id[(int(c2), int(shared[0]))])
    return np.array(sorted(bad), dtype=np.int64)


def random_regular_code(n: int, dv: int, dc: int, seed: int = 0, max_passes: int = 100) -> ParityCheckMatrix:
    """(dv, dc)-regular code by random socket matching plus edge swaps.

    Double edges are always removed; 4-cycles are removed best-effort within
    ``max_passes`` swap passes. Deterministic in ``seed``.
    """
    if min(n, dv, dc) <= 0:
        raise DomainError("n, dv and dc must be positive")
    if (n * dv) % dc:
        raise DomainError(f"n*dv = {n * dv} is not divisible by dc = {dc}")
    m = n * dv // dc
    if dv > m:
        raise DomainError(f"dv = {dv} exceeds the number of checks {m}")
    rng = np.random.default_rng(seed)
    vars_ = np.repeat(np.arange(n), dv)
    checks = rng.permutation(np.repeat(np.arange(m), dc))

    def duplicates():
        key = checks * n + vars_
        _, first, counts = np.unique(key, return_index=True, return_counts=True)
        seen = np.zeros(key.size, dtype=bool)
        seen[first] = True
        return np.nonzero(~seen)[0]

    for _ in range(max_passes):
        bad = duplicates()
        if bad.size == 0:
            bad = _four_cycle_edges(checks, vars_, n, m)
        if bad.size == 0:
            break
        pairs = set(zip(checks.tolist(), vars_.tolist()))
        for e in bad:
            for _attempt in range(20):
                f = int(rng.integers(checks.size))
                ce, cf = int(checks[e]), int(checks[f])
                ve, vf = int(vars_[e]), int(vars_[f])
                if ce == cf or (cf, ve) in pairs or (ce, vf) in pairs:
                    continue
                pairs.discard((ce, ve))
                pairs.discard((cf, vf))
                pairs.add((cf, ve))
                pairs.add((ce, vf))
                checks[e], checks[f] = cf, ce
                break
    if duplicates().size:
        raise DomainError("could not remove double edges; try another seed")
    return ParityCheckMatrix(n, m, checks, vars_)


def count_four_cycles(h: ParityCheckMatrix) -> int:
    s = h.to_sparse()
    overlap = sparse.triu(s @ s.T, k=1).tocoo()
    d = overlap.data
    return int(np.sum(d * (d - 1) // 2))


# ------------------------------------------------------------------ encoding

def _gf2_rref(dense: np.ndarray):
    """Reduced row echelon form over GF(2) on bit-packed rows.

    Returns (reduced rows restricted to the rank, pivot column per row).
    """
    m, n = dense.shape
    words = (n + 63) // 64
    padded = np.zeros((m, words * 64), dtype=np.uint8)
    padded[:, :n] = dense
    packed = np.packbits(padded, axis=1, bitorder="little").view(np.uint64).copy()
    pivots = []
    r = 0
    for col in range(n):
        if r == m:
            break
        w, bit = divmod(col, 64)
        colbits = (packed[r:, w] >> np.uint64(bit)) & np.uint64(1)
        hits = np.flatnonzero(colbits)
        if hits.size == 0:
            continue
        p = r + int(hits[0])
        if p != r:
            packed[[r, p]] = packed[[p, r]]
        mask = ((packed[:, w] >> np.uint64(bit)) & np.uint64(1)).astype(bool)
        mask[r] = False
        packed[mask] ^= packed[r]
        pivots.append(col)
        r += 1
    bits = np.unpackbits(packed[:r].view(np.uint8), axis=1, bitorder="little")[:, :n]
    return bits, np.array(pivots, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Encoder:
    """Systematic encoder: info bits occupy ``info_cols`` of the codeword."""

    h: ParityCheckMatrix
    k: int
    info_cols: np.ndarray
    parity_cols: np.ndarray
    parity_map: np.ndarray  # (rank, k) uint8; parity = parity_map @ info mod 2
    rank: int

    @property
    def n(self) -> int:
        return self.h.n

    @property
    def column_permutation(self) -> np.ndarray:
        return np.concatenate((self.info_cols, self.parity_cols))

    def encode(self, info) -> np.ndarray:
        """Encode one block (length k) or a batch (..., k)."""
        u = np.asarray(info, dtype=np.uint8)
        if u.shape[-1] != self.k:
            raise DomainError(f"expected {self.k} information bits, got {u.shape[-1]}")
        flat = u.reshape(-1, self.k)
        out = np.zeros((flat.shape[0], self.n), dtype=np.uint8)
        out[:, self.info_cols] = flat
        uf = flat.astype(np.float32)
        # float32 sums of at most k ones are exact for k < 2**24
        for lo in range(0, self.rank, 4096):
            block = self.parity_map[lo:lo + 4096].astype(np.float32)
            out[:, self.parity_cols[lo:lo + 4096]] = (uf @ block.T).astype(np.int64) % 2
        return out.reshape(u.shape[:-1] + (self.n,))

    def extract_info(self, codeword) -> np.ndarray:
        return np.asarray(codeword)[..., self.info_cols]


def build_encoder(h: ParityCheckMatrix) -> Encoder:
    """Gaussian elimination over GF(2) with column pivoting."""
    reduced, pivots = _gf2_rref(h.to_dense())
    rank = int(pivots.size)
    info_mask = np.ones(h.n, dtype=bool)
    info_mask[pivots] = False
    info_cols = np.flatnonzero(info_mask)
    if rank < h.m_rows:
        warnings.warn(
            f"parity-check matrix has {h.m_rows - rank} redundant row(s); "
            f"k = {h.n - rank} exceeds the design value {h.n - h.m_rows}",
            stacklevel=2,
        )
    parity_map = np.ascontiguousarray(reduced[:, info_cols])
    for arr in (info_cols, pivots, parity_map):
        arr.setflags(write=False)
    return Encoder(h, h.n - rank, info_cols, pivots, parity_map, rank)


# ------------------------------------------------------------------ decoding

def syndrome(h: ParityCheckMatrix, bits) -> np.ndarray | bool:
    """True where every check has even parity; batched over leading axes."""
    b = np.asarray(bits)
    if b.shape[-1] != h.n:
        raise DomainError(f"expected {h.n} bits, got {b.shape[-1]}")
    flat = b.reshape(-1, h.n).astype(np.int64)
    starts = np.concatenate(([0], np.cumsum(h.row_degrees)[:-1]))
    parity = np.add.reduceat(flat[:, h.edge_vars], starts, axis=1) & 1
    ok = ~parity.any(axis=1)
    if b.ndim == 1:
        return bool(ok[0])
    return ok.reshape(b.shape[:-1])


@dataclass(frozen=True)
class DecodeResult:
    bits: np.ndarray
    iterations_used: int
    syndrome_ok: bool


@njit(cache=True)
def _parity_ok(hard, edge_vars, row_ptr):
    for i in range(row_ptr.size - 1):
        acc = 0
        for e in range(row_ptr[i], row_ptr[i + 1]):
            acc ^= hard[edge_vars[e]]
        if acc:
            return False
    return True


@njit(cache=True, nogil=True)
def _bp_batch(llr, edge_vars, row_ptr, max_iter, early_stop, clip, bits, iters, ok):
    batch, n = llr.shape
    n_edges = edge_vars.size
    max_deg = 0
    for i in range(row_ptr.size - 1):
        max_deg = max(max_deg, row_ptr[i + 1] - row_ptr[i])
    c2v = np.empty(n_edges)
    t = np.empty(max_deg)
    suffix = np.empty(max_deg + 1)
    post = np.empty(n)
    hard = np.empty(n, dtype=np.uint8)
    # |2 atanh(p)| <= clip  <=>  |p| <= tanh(clip / 2)
    p_max = math.tanh(0.5 * clip)
    for b in range(batch):
        for j in range(n):
            hard[j] = 1 if llr[b, j] < 0 else 0
        good = _parity_ok(hard, edge_vars, row_ptr)
        used = 0
        if not (good and early_stop):
            for e in range(n_edges):
                c2v[e] = 0.0
            for j in range(n):
                post[j] = llr[b, j]
            for it in range(1, max_iter + 1):
                for i in range(row_ptr.size - 1):
                    lo = row_ptr[i]
                    deg = row_ptr[i + 1] - lo
                    for k in range(deg):
                        e = lo + k
                        x = post[edge_vars[e]] - c2v[e]
                        x = min(max(x, -clip), clip)
                        t[k] = math.tanh(0.5 * x)
                    suffix[deg] = 1.0
                    for k in range(deg - 1, -1, -1):
                        suffix[k] = suffix[k + 1] * t[k]
                    prefix = 1.0
                    for k in range(deg):
                        p = prefix * suffix[k + 1]
                        p = min(max(p, -p_max), p_max)
                        c2v[lo + k] = math.log((1.0 + p) / (1.0 - p))
                        prefix *= t[k]
                for j in range(n):
                    post[j] = llr[b, j]
                for e in range(n_edges):
                    post[edge_vars[e]] += c2v[e]
                for j in range(n):
                    hard[j] = 1 if post[j] < 0 else 0
                used = it
                good = _parity_ok(hard, edge_vars, row_ptr)
                if good and early_stop:
                    break
        bits[b, :] = hard
        iters[b] = used
        ok[b] = good


class BPDecoder:
    """Flooding sum-product decoder bound to one parity-check matrix.

    Check updates use the tanh rule with leave-one-out products; message
    magnitudes are clipped at ``LLR_CLIP``. Sums are accumulated in a fixed
    edge order, so results do not depend on batching.
    """

    def __init__(self, h: ParityCheckMatrix, max_iter: int = DEFAULT_MAX_ITER, early_stop: bool = True):
        self.h = h
        self.max_iter = int(max_iter)
        self.early_stop = early_stop
        self._edge_vars = np.ascontiguousarray(h.edge_vars, dtype=np.int64)
        self._row_ptr = np.concatenate(([0], np.cumsum(h.row_degrees))).astype(np.int64)

    def decode_batch(self, llrs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Decode ``(B, n)`` channel LLRs.

        Returns (hard bits ``(B, n)`` uint8, iterations used ``(B,)``,
        syndrome flags ``(B,)``).
        """
        llr = np.asarray(llrs, dtype=float)
        if llr.ndim != 2 or llr.shape[1] != self.h.n:
            raise DomainError(f"expected LLRs of shape (B, {self.h.n})")
        if not np.all(np.isfinite(llr)):
            raise DomainError("channel LLRs must be finite")
        llr = np.ascontiguousarray(np.clip(llr, -LLR_CLIP, LLR_CLIP))
        batch = llr.shape[0]
        bits = np.empty((batch, self.h.n), dtype=np.uint8)
        iters = np.empty(batch, dtype=np.int64)
        ok = np.empty(batch, dtype=np.bool_)
        _bp_batch(llr, self._edge_vars, self._row_ptr, self.max_iter, self.early_stop,
                  LLR_CLIP, bits, iters, ok)
        return bits, iters, ok

    def decode(self, llrs) -> DecodeResult:
        bits, iters, ok = self.decode_batch(np.asarray(llrs, dtype=float)[None, :])
        return DecodeResult(bits[0], int(iters[0]), bool(ok[0]))


def decode_bp(h: ParityCheckMatrix, channel_llrs, max_iter: int = DEFAULT_MAX_ITER) -> DecodeResult:
    return BPDecoder(h, max_iter).decode(channel_llrs)

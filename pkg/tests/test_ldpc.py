import itertools
import warnings

import numpy as np
import pytest

from ois_shape.errors import AlistParseError, DomainError
from ois_shape.ldpc import (
    BPDecoder,
    ParityCheckMatrix,
    build_encoder,
    count_four_cycles,
    decode_bp,
    parse_alist,
    random_regular_code,
    read_alist,
    syndrome,
    write_alist,
)

TOY = np.array([[1, 1, 0, 1, 0, 0], [0, 1, 1, 0, 1, 0], [1, 0, 1, 0, 0, 1]])
# same shape with the (row 3, col 1) edge removed: the Tanner graph is a tree
TREE = np.array([[1, 1, 0, 1, 0, 0], [0, 1, 1, 0, 1, 0], [0, 0, 1, 0, 0, 1]])

TOY_ALIST = """6 3
2 3
2 2 2 1 1 1
3 3 3
1 3
1 2
2 3
1 0
2 0
3 0
1 2 4
2 3 5
1 3 6
"""


def codebook(h_dense):
    n = h_dense.shape[1]
    words = np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.int64)
    return words[np.all((words @ h_dense.T) % 2 == 0, axis=1)]


def bitwise_map(h_dense, llr):
    """Exact per-bit posterior decisions by enumerating the codebook."""
    cw = codebook(h_dense)
    # log P(c | y) up to a constant; LLR > 0 favours 0
    score = -(cw * llr).sum(axis=1)
    w = np.exp(score - score.max())
    p1 = (w[:, None] * cw).sum(axis=0) / w.sum()
    return (p1 > 0.5).astype(np.uint8), p1


class TestParityCheckMatrix:
    def test_supports(self):
        h = ParityCheckMatrix.from_dense(TOY)
        assert h.row_supports == [[0, 1, 3], [1, 2, 4], [0, 2, 5]]
        assert h.col_supports == [[0, 2], [0, 1], [1, 2], [0], [1], [2]]
        assert h.design_rate == 0.5
        assert h.num_edges == 9
        assert np.array_equal(h.to_dense(), TOY)
        assert np.array_equal(h.to_sparse().toarray(), TOY)

    def test_empty_column(self):
        with pytest.raises(DomainError):
            ParityCheckMatrix.from_dense([[1, 0], [1, 0]])

    def test_duplicate_edge(self):
        with pytest.raises(DomainError):
            ParityCheckMatrix(2, 1, np.array([0, 0, 0]), np.array([0, 1, 1]))

    def test_equality_and_digest(self):
        a = ParityCheckMatrix.from_dense(TOY)
        b = ParityCheckMatrix.from_supports(6, [[3, 1, 0], [1, 2, 4], [0, 2, 5]])
        assert a == b
        assert a.digest() == b.digest()
        assert a != ParityCheckMatrix.from_dense(TREE)


class TestAlist:
    def test_parse_hand_written(self):
        assert parse_alist(TOY_ALIST) == ParityCheckMatrix.from_dense(TOY)

    def test_round_trip(self):
        h = random_regular_code(24, 3, 6, seed=4)
        assert parse_alist(write_alist(h)) == h
        h0 = ParityCheckMatrix.from_dense(TOY)
        assert parse_alist(write_alist(h0)) == h0

    def test_canonical_form(self):
        text = write_alist(parse_alist(TOY_ALIST))
        assert " 0" not in text
        assert text.splitlines()[4:10] == ["1 3", "1 2", "2 3", "1", "2", "3"]

    def test_file(self, tmp_path):
        p = tmp_path / "toy.alist"
        p.write_text(TOY_ALIST)
        assert read_alist(p) == ParityCheckMatrix.from_dense(TOY)

    @pytest.mark.parametrize("edit,line", [
        (lambda L: L.__setitem__(2, "2 2 2 0 1 1"), 3),   # empty column
        (lambda L: L.__setitem__(4, "1 4"), 5),           # row index out of range
        (lambda L: L.__setitem__(12, "1 2 5"), 13),       # listings disagree
        (lambda L: L.__setitem__(3, "3 3"), 4),           # wrong count
        (lambda L: L.__setitem__(1, "1 3"), 3),           # degree above maximum
        (lambda L: L.__setitem__(0, "6 x"), 1),           # non-integer
    ])
    def test_errors_carry_line(self, edit, line):
        lines = TOY_ALIST.splitlines()
        edit(lines)
        with pytest.raises(AlistParseError) as err:
            parse_alist("\n".join(lines))
        assert str(err.value).startswith(f"line {line}:")

    def test_truncated(self):
        with pytest.raises(AlistParseError):
            parse_alist("\n".join(TOY_ALIST.splitlines()[:8]))


class TestRandomCode:
    def test_degrees(self):
        h = random_regular_code(12, 3, 6, seed=0)
        assert h.m_rows == 6
        assert np.all(h.col_degrees == 3) and np.all(h.row_degrees == 6)
        assert h.to_dense().max() == 1

    def test_deterministic(self):
        assert random_regular_code(200, 3, 6, seed=7) == random_regular_code(200, 3, 6, seed=7)
        assert random_regular_code(200, 3, 6, seed=7) != random_regular_code(200, 3, 6, seed=8)

    def test_girth_at_moderate_length(self):
        h = random_regular_code(1000, 3, 6, seed=1)
        assert count_four_cycles(h) == 0
        assert h.to_dense().max() == 1

    @pytest.mark.parametrize("n,dv,dc", [(10, 3, 4), (12, 0, 6), (4, 5, 5)])
    def test_infeasible(self, n, dv, dc):
        with pytest.raises(DomainError):
            random_regular_code(n, dv, dc)

    def test_count_four_cycles(self):
        assert count_four_cycles(ParityCheckMatrix.from_dense(TOY)) == 0
        assert count_four_cycles(ParityCheckMatrix.from_dense([[1, 1, 0], [1, 1, 1]])) == 1


class TestEncoder:
    def test_toy(self):
        enc = build_encoder(ParityCheckMatrix.from_dense(TOY))
        assert enc.k == 3
        assert not enc.encode([0, 0, 0]).any()
        words = enc.encode(np.array(list(itertools.product([0, 1], repeat=3))))
        assert len({tuple(w) for w in words}) == 8
        assert np.all((words.astype(int) @ TOY.T) % 2 == 0)
        assert {tuple(w) for w in words} == {tuple(w) for w in codebook(TOY)}

    def test_systematic(self):
        enc = build_encoder(ParityCheckMatrix.from_dense(TOY))
        u = np.array([1, 0, 1])
        assert np.array_equal(enc.extract_info(enc.encode(u)), u)
        assert sorted(enc.column_permutation.tolist()) == list(range(6))

    def test_duplicate_row(self):
        h = ParityCheckMatrix.from_dense(np.vstack([TOY, TOY[:1]]))
        with pytest.warns(UserWarning, match="redundant"):
            enc = build_encoder(h)
        assert enc.k == 3 and enc.rank == 3

    def test_full_rank_no_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            build_encoder(ParityCheckMatrix.from_dense(TOY))

    def test_random_code(self):
        h = random_regular_code(600, 3, 6, seed=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            enc = build_encoder(h)
        assert enc.k >= 300
        u = np.random.default_rng(0).integers(0, 2, (200, enc.k))
        c = enc.encode(u)
        assert np.all(syndrome(h, c))
        assert np.array_equal(enc.extract_info(c), u)

    def test_wrong_length(self):
        with pytest.raises(DomainError):
            build_encoder(ParityCheckMatrix.from_dense(TOY)).encode([1, 0])


class TestSyndrome:
    def test_examples(self):
        h = ParityCheckMatrix.from_dense(TOY)
        assert syndrome(h, np.zeros(6, dtype=int))
        for j in range(6):
            assert not syndrome(h, np.eye(6, dtype=int)[j])

    def test_batch(self):
        h = ParityCheckMatrix.from_dense(TOY)
        out = syndrome(h, np.vstack([np.zeros(6, int), np.eye(6, dtype=int)[0]]))
        assert out.tolist() == [True, False]

    def test_length(self):
        with pytest.raises(DomainError):
            syndrome(ParityCheckMatrix.from_dense(TOY), np.zeros(5))


class TestDecoder:
    def test_noiseless(self):
        h = ParityCheckMatrix.from_dense(TOY)
        cw = build_encoder(h).encode([1, 0, 1])
        res = decode_bp(h, np.where(cw == 0, 10.0, -10.0))
        assert np.array_equal(res.bits, cw)
        assert res.iterations_used in (0, 1)
        assert res.syndrome_ok

    def test_single_flip_corrected(self):
        h = ParityCheckMatrix.from_dense(TOY)
        cw = build_encoder(h).encode([1, 1, 0])
        llr = np.where(cw == 0, 8.0, -8.0)
        llr[1] = -llr[1] / 4  # wrong sign, weaker magnitude
        res = decode_bp(h, llr)
        assert np.array_equal(res.bits, cw) and res.syndrome_ok

    def test_all_zero_llrs(self):
        h = ParityCheckMatrix.from_dense(TOY)
        r1 = decode_bp(h, np.zeros(6))
        r2 = decode_bp(h, np.zeros(6))
        assert not r1.bits.any() and r1.syndrome_ok
        assert np.array_equal(r1.bits, r2.bits) and r1.iterations_used == r2.iterations_used

    def test_tree_code_matches_bitwise_map(self):
        h = ParityCheckMatrix.from_dense(TREE)
        dec = BPDecoder(h, max_iter=20, early_stop=False)
        rng = np.random.default_rng(99)
        for _ in range(300):
            llr = rng.normal(0.0, 3.0, 6)
            ref, p1 = bitwise_map(TREE, llr)
            if np.any(np.abs(p1 - 0.5) < 1e-9):
                continue
            assert np.array_equal(dec.decode(llr).bits, ref)

    def test_syndrome_flag_consistent(self):
        h = random_regular_code(240, 3, 6, seed=3)
        rng = np.random.default_rng(1)
        llr = rng.normal(1.0, 1.5, (40, 240))
        bits, iters, ok = BPDecoder(h, 10).decode_batch(llr)
        assert np.array_equal(ok, syndrome(h, bits))
        assert np.all(iters <= 10)

    def test_batch_independence(self):
        h = random_regular_code(240, 3, 6, seed=3)
        llr = np.random.default_rng(2).normal(1.5, 1.5, (6, 240))
        dec = BPDecoder(h, 25)
        bits, iters, ok = dec.decode_batch(llr)
        for b in range(6):
            r = dec.decode(llr[b])
            assert np.array_equal(r.bits, bits[b]) and r.iterations_used == iters[b]

    def test_rejects_nonfinite(self):
        h = ParityCheckMatrix.from_dense(TOY)
        with pytest.raises(DomainError):
            decode_bp(h, np.array([np.inf, 0, 0, 0, 0, 0]))

    def test_encode_decode_identity_high_snr(self):
        from ois_shape.constellation import build_shaped
        from ois_shape.mapping import bit_llrs, gray_labeling, modulate

        h = random_regular_code(400, 3, 6, seed=11)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            enc = build_encoder(h)
        c = build_shaped(4).constellation
        lab = gray_labeling(4)
        sigma = 1e-3  # uncoded symbol error ~ Q(d_min / 2 sigma) far below 1e-9
        rng = np.random.default_rng(0)
        dec = BPDecoder(h)
        for _ in range(20):
            u = rng.integers(0, 2, enc.k)
            x = modulate(enc.encode(u), lab, c)
            y = x + sigma * rng.standard_normal(x.size)
            res = dec.decode(bit_llrs(y, c, lab, sigma).reshape(-1))
            assert np.array_equal(enc.extract_info(res.bits), u)

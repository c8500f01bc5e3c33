import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import ndtr

from ois_shape.constellation import Constellation, pam
from ois_shape.errors import ConfigError, DomainError
from ois_shape.sim import (
    CodeSpec,
    ConstellationSpec,
    ErrorStats,
    Link,
    SimConfig,
    Stopping,
    block_rng,
    coded_gap,
    crossing_snr,
    default_threads,
    mix,
    run_point,
    ser_analytic,
    splitmix64,
    stats_from_csv,
    stats_to_csv,
    sweep,
    uncoded_ser,
    wilson_interval,
)


def small_cfg(**kw):
    base = SimConfig(
        constellation=ConstellationSpec("shaped", 4, 2),
        code=CodeSpec(n=240, seed=3),
        snr_grid_db=(8.0,),
        stopping=Stopping(min_block_errors=5, max_blocks=40),
        batch_size=8,
    )
    return replace(base, **kw)


class TestSeeding:
    def test_splitmix_reference(self):
        # first outputs of the SplitMix64 generator seeded with 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4

    def test_mix_distinct(self):
        seeds = {mix(0, p, b) for p in range(10) for b in range(100)}
        assert len(seeds) == 1000
        assert mix(1, 2, 3) != mix(1, 3, 2)

    def test_block_rng_reproducible(self):
        a = block_rng(5, 1, 7).standard_normal(4)
        b = block_rng(5, 1, 7).standard_normal(4)
        assert np.array_equal(a, b)

    def test_noise_moments(self):
        rng = block_rng(0, 0, 0)
        sigma = 0.3
        z = sigma * rng.standard_normal(10**6)
        assert abs(z.mean()) < 0.01 * sigma
        assert abs(z.var() / sigma**2 - 1) < 0.01


class TestConfig:
    def test_round_trip(self):
        cfg = small_cfg(snr_grid_db=(7.0, 8.5))
        assert SimConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_defaults(self):
        cfg = SimConfig.from_dict({})
        assert cfg.code.n == 4000 and cfg.max_iter == 50
        assert cfg.stopping.min_block_errors == 100

    @pytest.mark.parametrize("data,field", [
        ({"snr_grid_db": [3, 2]}, "snr_grid_db"),
        ({"snr_grid_db": []}, "snr_grid_db"),
        ({"stopping": {"min_block_errors": 0}}, "stopping.min_block_errors"),
        ({"constellation": {"kind": "qam"}}, "constellation.kind"),
        ({"constellation": {"bits": "4"}}, "constellation.bits"),
        ({"code": {"kind": "regular", "n": 10, "dv": 3, "dc": 4}}, "code"),
        ({"code": {"kind": "alist"}}, "code.path"),
        ({"bogus": 1}, "config.bogus"),
        ({"demapper": "fast"}, "demapper"),
        ({"energy": -1}, "energy"),
    ])
    def test_errors_name_field(self, data, field):
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            SimConfig.from_dict(data)

    def test_length_not_multiple_of_bits(self):
        cfg = small_cfg(constellation=ConstellationSpec("shaped", 3, 2), code=CodeSpec(n=242, dv=3, dc=6))
        with pytest.raises(ConfigError, match="multiple"):
            Link(cfg)

    def test_collision_is_config_error(self):
        with pytest.raises(ConfigError):
            Link(small_cfg(constellation=ConstellationSpec("shaped", 4, 0)))

    def test_alist_path(self, tmp_path):
        from ois_shape.ldpc import random_regular_code, write_alist

        h = random_regular_code(240, 3, 6, seed=3)
        (tmp_path / "c.alist").write_text(write_alist(h))
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"code": {"kind": "alist", "path": "c.alist"}}))
        link = Link(SimConfig.from_json(cfg_path))
        assert link.h == h

    def test_missing_alist(self, tmp_path):
        cfg = SimConfig.from_dict({"code": {"kind": "alist", "path": str(tmp_path / "none")}})
        with pytest.raises(ConfigError, match="code.path"):
            Link(cfg)

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("OIS_SHAPE_THREADS", "3")
        assert default_threads() == 3
        monkeypatch.setenv("OIS_SHAPE_THREADS", "x")
        with pytest.raises(ConfigError):
            default_threads()


class TestStatistics:
    def test_wilson_reference(self):
        # 10 of 100 at 95%: standard textbook interval
        lo, hi = wilson_interval(10, 100)
        assert lo == pytest.approx(0.05522, abs=1e-5)
        assert hi == pytest.approx(0.17436, abs=1e-5)

    def test_zero_errors_one_sided(self):
        lo, hi = wilson_interval(0, 100)
        assert lo == 0.0
        assert hi == pytest.approx(1 - 0.05 ** 0.01)

    def test_all_errors(self):
        lo, hi = wilson_interval(50, 50)
        assert hi == 1.0 and 0.9 < lo < 1.0

    def test_error_stats(self):
        st = ErrorStats.from_counts(5.0, 10, 7, 2, 120)
        assert st.ber == 7 / 1200 and st.bler == 0.2
        assert st.ci_low < 0.2 < st.ci_high

    def test_csv_round_trip(self):
        stats = [ErrorStats.from_counts(5.0, 10, 7, 2, 120), ErrorStats.from_counts(6.5, 40, 0, 0, 120)]
        text = stats_to_csv(stats)
        assert text.splitlines()[0] == "snr_db,blocks,bit_errors,block_errors,ber,bler,ci_low,ci_high"
        back = stats_from_csv(text, 120)
        assert back == stats_from_csv(stats_to_csv(back), 120)
        assert [(s.blocks_run, s.bit_errors, s.ber, s.ci_high) for s in back] == \
            [(s.blocks_run, s.bit_errors, s.ber, s.ci_high) for s in stats]


class TestCrossing:
    def test_log_linear(self):
        assert crossing_snr([0, 1], [1e-1, 1e-3], 1e-2) == pytest.approx(0.5)

    def test_no_crossing(self):
        with pytest.raises(DomainError):
            crossing_snr([0, 1], [1e-1, 5e-2], 1e-2)

    def test_gap(self):
        ref = [ErrorStats.from_counts(s, 1000, 0, e, 10) for s, e in [(10, 200), (11, 2)]]
        cand = [ErrorStats.from_counts(s, 1000, 0, e, 10) for s, e in [(9, 200), (10, 2)]]
        g = coded_gap(ref, cand)
        assert g.gap_db == pytest.approx(1.0)
        assert g.gap_low_db < g.gap_db


class TestRunPoint:
    def test_noiseless(self):
        st = run_point(small_cfg(stopping=Stopping(5, 16)), 60.0)
        assert (st.bit_errors, st.block_errors, st.blocks_run) == (0, 0, 16)
        assert st.ci_high == pytest.approx(1 - 0.05 ** (1 / 16))

    def test_hopeless(self):
        st = run_point(small_cfg(stopping=Stopping(10, 10)), -20.0)
        assert st.bler == 1.0

    def test_deterministic(self):
        cfg = small_cfg()
        assert run_point(cfg, 8.0) == run_point(cfg, 8.0)

    def test_threads_equivalent(self):
        cfg = small_cfg(stopping=Stopping(4, 40), batch_size=10)
        link = Link(cfg)
        assert run_point(cfg, 7.5, 0, 1, link) == run_point(cfg, 7.5, 0, 3, link)

    def test_conservation(self):
        st = run_point(small_cfg(), 7.0)
        assert st.ber * st.blocks_run * st.info_bits_per_block == pytest.approx(st.bit_errors)
        assert st.block_errors <= st.blocks_run

    def test_sweep_point_seeding(self):
        cfg = small_cfg(snr_grid_db=(7.0, 8.0))
        both = sweep(cfg)
        single = run_point(cfg, 8.0, point_index=1)
        assert both[1] == single

    def test_stops_at_error_target(self):
        st = run_point(small_cfg(stopping=Stopping(3, 40), batch_size=16), -5.0)
        assert st.blocks_run == 3 and st.block_errors == 3

    def test_waterfall(self):
        # (3,6)-regular, n = 4000: BER falls across a 2 dB window
        cfg = SimConfig(code=CodeSpec(n=4000), snr_grid_db=(8.4, 9.4, 10.4),
                        stopping=Stopping(min_block_errors=8, max_blocks=24), batch_size=8)
        st = sweep(cfg)
        assert st[0].ber > st[1].ber >= st[2].ber
        assert st[2].ber < 1e-4


class TestUncoded:
    def test_binary(self):
        c = Constellation([0.0, 2.0])
        snr_db = 3.0
        sigma = 1.0 / 10 ** (snr_db / 10)
        p, se = uncoded_ser(c, snr_db, 10**6, seed=1)
        assert abs(p - ndtr(-1.0 / sigma)) <= 3 * se

    def test_pam4(self):
        c = pam(4)
        for snr_db in (4.0, 7.0):
            sigma = c.mean / 10 ** (snr_db / 10)
            p, se = uncoded_ser(c, snr_db, 10**6, seed=2)
            assert abs(p - ser_analytic(c, sigma)) <= 3 * se

    def test_noiseless(self):
        assert uncoded_ser(pam(8), 80.0, 10**4)[0] == 0.0

    def test_analytic_formula(self):
        # PAM-4 with spacing d: 2(M-1)/M Q(d/2sigma)
        c = pam(4)
        sigma = 0.2
        d = c.levels[1] - c.levels[0]
        assert ser_analytic(c, sigma) == pytest.approx(1.5 * ndtr(-d / (2 * sigma)), rel=1e-14)

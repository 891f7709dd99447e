import numpy as np
import pytest

from dapskmimo.harness import (
    CSV_HEADER,
    BlockTally,
    MetricsRecord,
    SimConfig,
    block_rng,
    emit_csv,
    emit_svg,
    load_config,
    read_csv,
    run_block,
    spectral_efficiency,
    sweep,
)

SMALL = dict(
    n_uses=32,
    n_antennas=12,
    group_sizes=(4, 4, 4),
    n_taps=4,
    snr_grid_db=(5.0, 15.0),
    blocks_per_point=3,
    seed=9,
)


def small_cfg(**kw):
    merged = {**SMALL, **kw}
    return SimConfig(**merged)


class TestSimConfig:
    def test_group_sizes_must_partition(self):
        with pytest.raises(ValueError):
            small_cfg(group_sizes=(4, 4, 5))

    def test_grid_strictly_increasing(self):
        with pytest.raises(ValueError):
            small_cfg(snr_grid_db=(5.0, 5.0))

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            small_cfg(mode="zeroforcing")

    def test_mod_order_power_of_two(self):
        with pytest.raises(ValueError):
            small_cfg(mod_order=12)

    def test_derived_quantities(self):
        cfg = small_cfg()
        assert cfg.M == 8
        assert cfg.n_bits == 4
        assert cfg.data_fraction() == 1.0
        assert abs(abs(cfg.mean_rotation()) - 1.0) < 1e-12

    def test_coherent_data_fraction(self):
        cfg = SimConfig(mode="coherent", model_path=None)
        assert cfg.data_fraction() == pytest.approx(0.5)


class TestRunBlock:
    @pytest.mark.parametrize("mode", ["differential-onebit", "differential-vql-lrt", "coherent"])
    def test_identical_seeds_identical_tallies(self, mode):
        cfg = small_cfg(mode=mode)
        a = run_block(cfg, 0, block_rng(9, 0, 0))
        b = run_block(cfg, 0, block_rng(9, 0, 0))
        assert a == b

    def test_different_blocks_differ(self):
        cfg = small_cfg(mode="differential-onebit")
        a = run_block(cfg, 1, block_rng(9, 1, 0))
        b = run_block(cfg, 1, block_rng(9, 1, 1))
        assert a != b

    def test_bit_conservation(self):
        cfg = small_cfg(mode="differential-onebit", snr_grid_db=(2.0, 8.0))
        t = run_block(cfg, 0, block_rng(9, 0, 0))
        assert t.n_symbols == cfg.n_uses - 1
        assert t.n_bits == t.n_symbols * cfg.n_bits
        assert t.bit_errors == t.amp_bit_errors + t.phase_bit_errors
        assert t.symbol_errors <= t.n_symbols

    def test_nn_mode_needs_model(self):
        cfg = small_cfg(mode="differential-vql-nn")
        with pytest.raises(ValueError):
            run_block(cfg, 0, block_rng(9, 0, 0))

    def test_bad_snr_index_rejected(self):
        cfg = small_cfg()
        with pytest.raises(ValueError):
            run_block(cfg, 5, block_rng(9, 5, 0))


class TestSpectralEfficiency:
    def test_error_free_differential(self):
        assert spectral_efficiency(0.0, 1.0, 4, 0.05) == pytest.approx(4.0)

    def test_coherent_half_fraction(self):
        assert spectral_efficiency(0.04, 0.5, 4, 0.05) == pytest.approx(1.92)

    def test_gated_to_zero_above_threshold(self):
        assert spectral_efficiency(0.06, 1.0, 4, 0.05) == 0.0

    def test_invalid_ser_rejected(self):
        with pytest.raises(ValueError):
            spectral_efficiency(1.2, 1.0, 4, 0.05)


class TestSweep:
    def test_empty_grid_empty_records(self):
        cfg = small_cfg(mode="differential-onebit", snr_grid_db=())
        assert sweep(cfg) == []

    def test_zero_blocks_zero_rates(self):
        cfg = small_cfg(mode="differential-onebit", blocks_per_point=0)
        records = sweep(cfg)
        assert len(records) == 2
        assert all(r.ber == 0.0 and r.ser == 0.0 for r in records)

    def test_missing_model_file_description(self, tmp_path):
        cfg = small_cfg(mode="differential-vql-nn", model_path=str(tmp_path / "nope.json"))
        with pytest.raises(ValueError, match="model"):
            sweep(cfg)

    def test_model_path_unset_description(self):
        cfg = small_cfg(mode="differential-vql-nn")
        with pytest.raises(ValueError, match="model"):
            sweep(cfg)

    def test_records_one_per_grid_point(self):
        cfg = small_cfg(mode="differential-onebit")
        records = sweep(cfg)
        assert [r.snr_db for r in records] == [5.0, 15.0]
        assert all(0.0 <= r.ber <= 1.0 and 0.0 <= r.ser <= 1.0 for r in records)
        assert all(r.mode == "differential-onebit" for r in records)


class TestCsv:
    def _records(self):
        return [
            MetricsRecord("differential-onebit", 0.0, 96, 16, 50, 0.125, 0.5, 0.0, 0.5, 0.0),
            MetricsRecord("coherent", 10.0, 96, 16, 50, 0.001953125, 0.0, 0.1, 0.01, 1.98),
        ]

    def test_header_and_row_count(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_csv(self._records(), str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[0] == "mode,snr_db,U,mod_order,blocks,ber,amp_ber,phase_ber,ser,se"
        assert len(lines) == 3

    def test_roundtrip_identity(self, tmp_path):
        path = tmp_path / "out.csv"
        records = self._records()
        emit_csv(records, str(path))
        assert read_csv(str(path)) == records

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("nope\n")
        with pytest.raises(ValueError):
            read_csv(str(path))

    def test_byte_identical_runs(self, tmp_path):
        cfg = small_cfg(mode="differential-onebit")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(sweep(cfg), str(a))
        emit_csv(sweep(cfg), str(b))
        assert a.read_bytes() == b.read_bytes()


class TestSvg:
    def test_svg_written(self, tmp_path):
        path = tmp_path / "curves.svg"
        records = [
            MetricsRecord("differential-onebit", s, 96, 16, 10, b, b, b, b, se)
            for s, b, se in ((0.0, 0.2, 0.0), (10.0, 0.02, 3.9), (20.0, 0.0, 4.0))
        ]
        emit_svg(records, str(path))
        head = path.read_text()[:500]
        assert "<svg" in head

    def test_empty_records_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_svg([], str(tmp_path / "x.svg"))

    def test_unwritable_path_mentions_path(self):
        records = [MetricsRecord("coherent", 0.0, 4, 16, 1, 0.1, 0.1, 0.1, 0.1, 0.0)]
        with pytest.raises(OSError, match="no/such"):
            emit_svg(records, "/no/such/dir/x.svg")


class TestConfigFile:
    def test_parse_full_config(self, tmp_path):
        text = """
        # campaign setup
        mode = differential-onebit
        n_uses = 64
        n_antennas = 24
        group_sizes = 8,8,8
        n_taps = 8
        mod_order = 16
        ring_ratio = 2.0
        snr_grid_db = 0,10,20
        blocks_per_point = 7
        seed = 5
        ser_threshold = 0.05
        pilot_fraction = 0.5
        pdp = uniform
        coherent_points = psk
        """
        path = tmp_path / "cfg.txt"
        path.write_text(text)
        cfg = load_config(str(path))
        assert cfg.n_antennas == 24
        assert cfg.snr_grid_db == (0.0, 10.0, 20.0)
        assert cfg.blocks_per_point == 7
        assert cfg.group_sizes == (8, 8, 8)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("antennas = 4\n")
        with pytest.raises(ValueError, match="antennas"):
            load_config(str(path))

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("just words\n")
        with pytest.raises(ValueError):
            load_config(str(path))


def test_block_tally_addition():
    a = BlockTally(10, 10, 30, 1, 2, 3)
    a.add(BlockTally(5, 5, 15, 1, 1, 1))
    assert a.n_symbols == 15
    assert a.bit_errors == 5
    assert a.n_bits == 60

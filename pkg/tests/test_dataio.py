import numpy as np
import pandas as pd
import pytest

from airgrid.dataio import (atomic_write_text, config_hash, load_arrays,
                            load_bundle, save_arrays, write_bundle,
                            write_run_manifest)
from airgrid.errors import MissingArtifactError
from airgrid.synth import SynthConfig, generate


def small_bundle():
    return generate(SynthConfig(n_rows=4, n_cols=4, hours=72, n_ss=5,
                                n_ms=4, n_trucks=2, seed=1))


class TestBundleRoundtrip:
    def test_roundtrip(self, tmp_path):
        b = small_bundle()
        write_bundle(tmp_path / "d", b)
        back = load_bundle(tmp_path / "d")
        assert back.hours == b.hours
        assert back.start_time == b.start_time
        assert len(back.stations) == len(b.stations)
        assert sorted(back.readings) == sorted(b.readings)
        for pol in b.readings:
            a = b.readings[pol].sort_values(["station_id", "t"])
            c = back.readings[pol].sort_values(["station_id", "t"])
            assert np.allclose(a["value"].to_numpy(),
                               c["value"].to_numpy(), rtol=1e-9)
        assert np.allclose(back.geographic.drop(columns="grid_id").to_numpy(),
                           b.geographic.drop(columns="grid_id").to_numpy(),
                           rtol=1e-9)
        pd.testing.assert_index_equal(back.weather.columns, b.weather.columns)

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_bundle(tmp_path / "nothing")


class TestArrayStore:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {"w": rng.normal(size=(3, 4)),
                  "b": rng.normal(size=7)}
        save_arrays(tmp_path / "a.bin", tmp_path / "a.txt", arrays,
                    extra={"tag": "x"})
        back, extra = load_arrays(tmp_path / "a.bin", tmp_path / "a.txt")
        assert extra == {"tag": "x"}
        assert sorted(back) == sorted(arrays)
        for k in arrays:
            assert back[k].shape == arrays[k].shape
            assert np.array_equal(back[k], arrays[k])

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_arrays(tmp_path / "x.bin", tmp_path / "x.txt")

    def test_byte_identical_rewrites(self, tmp_path):
        arrays = {"w": np.arange(6.0).reshape(2, 3)}
        save_arrays(tmp_path / "1.bin", tmp_path / "1.txt", arrays)
        save_arrays(tmp_path / "2.bin", tmp_path / "2.txt", arrays)
        assert (tmp_path / "1.bin").read_bytes() == \
            (tmp_path / "2.bin").read_bytes()
        assert (tmp_path / "1.txt").read_text() == \
            (tmp_path / "2.txt").read_text()


class TestAtomicWrite:
    def test_overwrites_and_leaves_no_temp(self, tmp_path):
        p = tmp_path / "out.txt"
        atomic_write_text(p, "one")
        atomic_write_text(p, "two")
        assert p.read_text() == "two"
        assert [f.name for f in tmp_path.iterdir()] == ["out.txt"]


class TestConfigHash:
    def test_stable_and_order_independent(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})
        assert len(config_hash({"a": 1})) == 16

    def test_run_manifest(self, tmp_path):
        write_run_manifest(tmp_path / "m.json", {"x": 1}, seed=42)
        import json
        m = json.loads((tmp_path / "m.json").read_text())
        assert m["seed"] == 42
        assert m["config_hash"] == config_hash({"x": 1})
        assert "version" in m

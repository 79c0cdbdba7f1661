import json

import numpy as np
import pytest

from spinflow import io
from spinflow.dynamics import EvolutionSeries
from spinflow.ensembles import ScalingFits, WeightModel
from spinflow.errors import ValidationError
from spinflow.graph_analysis import graph_from_edges
from spinflow.spin_model import LocalitySpec, SparseHermitian, build_observable, exact_hamiltonian


@pytest.fixture
def sample_matrix():
    obs = build_observable(4, "randomised", 3)
    return exact_hamiltonian(LocalitySpec(4, 2, 1), obs, 3)


class TestMatrixFormat:
    def test_roundtrip(self, sample_matrix, tmp_path):
        path = tmp_path / "h.mat"
        io.write_matrix(path, sample_matrix,
                        meta={"matrix": {"L": 4, "n": 2, "d": 1, "seed": 3}})
        back = io.read_matrix(path)
        assert back.dim == sample_matrix.dim
        assert np.array_equal(back.rows, sample_matrix.rows)
        assert np.array_equal(back.cols, sample_matrix.cols)
        assert np.array_equal(back.vals, sample_matrix.vals)
        assert back.norm_hint == sample_matrix.norm_hint
        meta = io.read_metadata(str(path) + ".meta")
        assert meta["matrix"]["seed"] == "3"

    def test_missing_norm_hint_roundtrips_as_none(self, tmp_path):
        H = SparseHermitian.from_upper(2, [0], [1], [1.0 + 2j])
        io.write_matrix(tmp_path / "h.mat", H)
        assert io.read_matrix(tmp_path / "h.mat").norm_hint is None

    def test_bad_magic_rejected(self, sample_matrix, tmp_path):
        path = tmp_path / "h.mat"
        io.write_matrix(path, sample_matrix)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(ValidationError):
            io.read_matrix(path)

    def test_truncation_rejected(self, sample_matrix, tmp_path):
        path = tmp_path / "h.mat"
        io.write_matrix(path, sample_matrix)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValidationError):
            io.read_matrix(path)

    def test_write_is_deterministic(self, sample_matrix, tmp_path):
        io.write_matrix(tmp_path / "a.mat", sample_matrix)
        io.write_matrix(tmp_path / "b.mat", sample_matrix)
        assert (tmp_path / "a.mat").read_bytes() == (tmp_path / "b.mat").read_bytes()


class TestGraphFormats:
    def test_edge_list_roundtrip(self, tmp_path):
        g = graph_from_edges(5, np.array([0, 1, 0]), np.array([1, 4, 3]))
        io.write_edge_list(tmp_path / "g.edges", g, {"L": 3})
        meta, u, v = io.read_edge_list(tmp_path / "g.edges")
        assert meta == {"L": 3}
        assert sorted(zip(u.tolist(), v.tolist())) == [(0, 1), (0, 3), (1, 4)]

    def test_edge_list_is_one_based(self, tmp_path):
        g = graph_from_edges(3, np.array([0]), np.array([2]))
        io.write_edge_list(tmp_path / "g.edges", g, {})
        lines = (tmp_path / "g.edges").read_text().splitlines()
        assert lines[1] == "1 3"

    def test_pbm_mask(self, tmp_path):
        g = graph_from_edges(3, np.array([0]), np.array([1]),
                             diag=np.array([True, False, True]))
        io.write_mask_pbm(tmp_path / "m.pbm", g, {"k": 1})
        lines = (tmp_path / "m.pbm").read_text().splitlines()
        assert lines[0] == "P1"
        assert lines[1].startswith("# ")
        assert lines[2] == "3 3"
        rows = [line.split() for line in lines[3:]]
        assert rows[0] == ["1", "1", "0"]
        assert rows[1] == ["1", "0", "0"]
        assert rows[2] == ["0", "0", "1"]


class TestTabularFormats:
    def test_trajectory_csv(self, tmp_path):
        ser = EvolutionSeries(np.array([0.0, 0.5]), np.array([1.0, 0.9]),
                              np.array([1.0, 0.8]), np.array([1.0, 1.0]))
        io.write_trajectory_csv(tmp_path / "t.csv", ser, {"seed": "1"})
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[1] == "t,exp_O,exp_O2,norm"
        assert lines[2] == "0.0,1.0,1.0,1.0"

    def test_scan_csv_roundtrip(self, tmp_path):
        rows = [{"variant": "exh", "L": 6, "T_eq": 4.25, "f_max": None}]
        io.write_scan_csv(tmp_path / "s.csv", rows,
                          ["variant", "L", "T_eq", "f_max"], {"seed": "0"})
        prov, back = io.read_scan_csv(tmp_path / "s.csv")
        assert prov == {"seed": "0"}
        assert back[0]["variant"] == "exh"
        assert float(back[0]["T_eq"]) == 4.25
        assert back[0]["f_max"] is None

    def test_jsonl_roundtrip(self, tmp_path):
        recs = [{"a": 1, "b": None}, {"a": 2, "b": 0.5}]
        io.write_records_jsonl(tmp_path / "r.jsonl", recs)
        assert io.read_records_jsonl(tmp_path / "r.jsonl") == recs


class TestFitCache:
    def test_roundtrip(self, tmp_path):
        fits = ScalingFits((4, 5, 6, 7), (0.1, 1.2), (-0.7, 0.4),
                           (5.0, 6.2, 7.4, 8.6), (0.1, 0.1, 0.1, 0.1),
                           (0.5, 0.4, 0.3, 0.25), (0.01, 0.01, 0.01, 0.01),
                           (0.0, 0.01, -0.01, 0.0), (0.0, 0.0, 0.0, 0.0))
        weights = WeightModel((0.2, 0.12), 0.66, True)
        path = tmp_path / "cache.ini"
        io.write_fit_cache(path, {(2, 1): (fits, weights)}, {"seed": "0"})
        back = io.read_fit_cache(path)
        bf, bw = back[(2, 1)]
        assert bf.sizes == fits.sizes
        assert bf.norm_coeffs == fits.norm_coeffs
        assert bf.delta_coeffs == fits.delta_coeffs
        assert bf.norm_means == fits.norm_means
        assert bw == weights
        assert bf.norm_at(10) == pytest.approx(fits.norm_at(10))
        assert bf.delta_at(10) == pytest.approx(fits.delta_at(10))

    def test_multiple_keys(self, tmp_path):
        fits = ScalingFits((4, 5, 6, 7), (0.0, 1.0), (0.0, 0.0))
        weights = WeightModel((0.1, 0.1), 0.5)
        entries = {(2, 1): (fits, weights), (3, 2): (fits, weights)}
        io.write_fit_cache(tmp_path / "c.ini", entries, {})
        assert set(io.read_fit_cache(tmp_path / "c.ini")) == {(2, 1), (3, 2)}


class TestProvenance:
    def test_config_hash_is_stable_and_order_free(self):
        a = io.config_hash({"x": 1, "y": "two"})
        b = io.config_hash({"y": "two", "x": 1})
        assert a == b
        assert len(a) == 16
        assert io.config_hash({"x": 2, "y": "two"}) != a

    def test_provenance_fields(self):
        prov = io.provenance({"k": "v"}, seed=7)
        assert set(prov) == {"config_hash", "seed", "version"}

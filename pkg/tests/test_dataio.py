import json

import numpy as np
import pytest

from cdgm import dataio
from cdgm.errors import ValidationError
from cdgm.ising import BinaryDataset, DynamicIsingStructure
from cdgm.loglinear import ModelSpec, ObservationSet
from cdgm.report import ReportTable, emit_report, format_significant


class TestDatasetIO:
    def test_basic_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y1,y2,x1\n1,0,0.25\n", encoding="utf-8")
        data = dataio.read_dataset(path)
        assert data.n == 1
        assert tuple(data.cells[0]) == (1, 0)
        assert data.covariates[0, 0] == 0.25

    def test_empty_after_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y1,y2,x1\n", encoding="utf-8")
        data = dataio.read_dataset(path)
        assert data.n == 0

    def test_out_of_range_level_names_coordinates(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y1,y2,x1\n2,0,0.25\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=r"row 1, column y1"):
            dataio.read_dataset(path, levels=[2, 2])
        with pytest.raises(ValidationError, match=r"row 1, column y1"):
            dataio.read_binary_dataset(path)

    def test_non_integer_level(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y1,x1\n1.5,0.2\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=r"row 1, column y1"):
            dataio.read_dataset(path)

    def test_non_finite_covariate(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y1,x1\n1,inf\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=r"row 1, column x1"):
            dataio.read_dataset(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y1,y3,x1\n1,0,0.2\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="missing column y2"):
            dataio.read_dataset(path)

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y1,weight\n1,2\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="unknown column"):
            dataio.read_dataset(path)

    def test_round_trip_observation_set(self, tmp_path):
        rng = np.random.default_rng(90)
        data = ObservationSet(
            rng.integers(0, 3, size=(20, 2)), np.round(rng.random((20, 2)), 6)
        )
        path = tmp_path / "d.csv"
        dataio.write_dataset(path, data)
        back = dataio.read_dataset(path)
        assert np.array_equal(back.cells, data.cells)
        assert np.array_equal(back.covariates, data.covariates)

    def test_round_trip_binary_dataset_exact_floats(self, tmp_path):
        rng = np.random.default_rng(91)
        data = BinaryDataset(
            rng.integers(0, 2, size=(15, 3)).astype(np.int8), rng.random((15, 1))
        )
        path = tmp_path / "d.csv"
        dataio.write_dataset(path, data)
        back = dataio.read_binary_dataset(path)
        assert np.array_equal(back.responses, data.responses)
        assert np.array_equal(back.covariates, data.covariates)


class TestModelSpecIO:
    def test_g2_document(self, tmp_path):
        doc = {
            "kind": "loglinear",
            "levels": [2, 2],
            "vertex_names": ["a", "b"],
            "slots": [[["a", "b"]], [["a", "b"]]],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        model = dataio.read_model_spec(path)
        expected = ModelSpec.from_maximal_sets([2, 2], [[(0, 1)], [(0, 1)]])
        assert model == expected

    def test_closure_applied(self, tmp_path):
        doc = {
            "kind": "loglinear",
            "levels": [2, 2, 2],
            "slots": [[["a", "b", "c"]]],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        model = dataio.read_model_spec(path)
        assert len(model.classes[0].sets) == 7

    def test_self_loop_edge_rejected(self, tmp_path):
        doc = {"kind": "ising", "vertices": 4, "edges": [[[3, 3]]]}
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ValidationError, match="self-loop"):
            dataio.read_model_spec(path)

    def test_vertex_out_of_range(self, tmp_path):
        doc = {"kind": "ising", "vertices": 3, "edges": [[[1, 4]]]}
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ValidationError, match="out of range"):
            dataio.read_model_spec(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ValidationError, match="malformed"):
            dataio.read_model_spec(path)

    def test_round_trip_loglinear(self, tmp_path):
        model = ModelSpec.from_maximal_sets([2, 3], [[(0, 1)], [(0,)]])
        path = tmp_path / "m.json"
        dataio.write_model_spec(path, model)
        assert dataio.read_model_spec(path) == model

    def test_round_trip_ising(self, tmp_path):
        model = DynamicIsingStructure.create(4, [[(0, 1), (2, 3)], [(1, 2)]])
        path = tmp_path / "m.json"
        dataio.write_model_spec(path, model)
        assert dataio.read_model_spec(path) == model


class TestEdgeListIO:
    def test_round_trip_with_weights(self, tmp_path):
        edges = [{(0, 1): 0.5, (1, 2): -0.25}, {(0, 2): 1.0}]
        path = tmp_path / "e.csv"
        dataio.write_edge_lists(
            path, [set(m) for m in edges], weights=edges
        )
        back, slots = dataio.read_edge_lists(path)
        assert slots == 2
        assert back[0] == {(0, 1): 0.5, (1, 2): -0.25}
        assert back[1] == {(0, 2): 1.0}

    def test_round_trip_without_weights(self, tmp_path):
        path = tmp_path / "e.csv"
        dataio.write_edge_lists(path, [{(0, 3)}, set()])
        back, slots = dataio.read_edge_lists(path)
        assert back[0] == {(0, 3): None}

    def test_rejects_u_not_less_than_v(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("slot,u,v\n0,2,1\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="u < v"):
            dataio.read_edge_lists(path)

    def test_rejects_out_of_range_slot(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("slot,u,v\n3,1,2\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="slot 3"):
            dataio.read_edge_lists(path, slot_count=2)

    def test_byte_stable_rewrite(self, tmp_path):
        edges = [{(1, 4), (0, 2)}]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        dataio.write_edge_lists(a, edges)
        dataio.write_edge_lists(b, edges)
        assert a.read_bytes() == b.read_bytes()


class TestReport:
    def test_emit_files(self, tmp_path):
        table = ReportTable(
            name="rmse_vs_n",
            columns=("n", "rmse"),
            rows=[(10000, 0.123456789012), (20000, 0.0654321)],
            kind="rmse_series",
        )
        written = emit_report([table], tmp_path)
        names = {p.name for p in written}
        assert names == {"rmse_vs_n.csv", "rmse_vs_n.txt", "rmse_vs_n.png"}
        text = (tmp_path / "rmse_vs_n.csv").read_text()
        assert text.splitlines()[0] == "n,rmse"
        assert "0.123456789012" in text  # full precision
        pretty = (tmp_path / "rmse_vs_n.txt").read_text()
        assert "0.1235" in pretty  # four significant digits

    def test_f1_series_columns(self, tmp_path):
        table = ReportTable(
            name="f1_vs_n",
            columns=("n", "slot", "rule", "f1"),
            rows=[(5000, 0, "and", 0.5), (5000, 0, "or", 0.625)],
            kind="f1_series",
        )
        emit_report([table], tmp_path)
        lines = (tmp_path / "f1_vs_n.csv").read_text().splitlines()
        assert lines[0] == "n,slot,rule,f1"
        assert lines[1] == "5000,0,and,0.5"

    def test_empty_results_header_only(self, tmp_path):
        table = ReportTable(name="empty", columns=("a", "b"), rows=[])
        emit_report([table], tmp_path)
        assert (tmp_path / "empty.csv").read_text() == "a,b\n"

    def test_csv_round_trips_floats_exactly(self, tmp_path):
        value = 0.1 + 0.2  # classic non-representable sum
        table = ReportTable(name="t", columns=("v",), rows=[(value,)])
        emit_report([table], tmp_path, figures=False)
        text = (tmp_path / "t.csv").read_text().splitlines()[1]
        assert float(text) == value

    def test_format_significant(self):
        assert format_significant(0.123456) == "0.1235"
        assert format_significant(12345.6) == "1.235e+04"
        assert format_significant(7) == "7"

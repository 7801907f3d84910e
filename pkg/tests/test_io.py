import json

import numpy as np
import pytest

from lmreg.errors import InvalidArgumentError
from lmreg.io import (atomic_write_bytes, atomic_write_text, config_hash, dumps, read_json, read_landmarks,
                      write_json, write_landmarks)


class TestLandmarkCsv:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_round_trip_exact(self, tmp_path, rng, dim):
        pts = rng.normal(size=(8, dim)) * 1e3
        write_landmarks(tmp_path / "a.csv", pts)
        np.testing.assert_array_equal(read_landmarks(tmp_path / "a.csv", dim=dim), pts)

    def test_header_written(self, tmp_path):
        write_landmarks(tmp_path / "a.csv", np.zeros((2, 2)))
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "id,x,y"

    def test_headerless_and_blank_lines(self, tmp_path):
        (tmp_path / "a.csv").write_text("1,1.5,2\n\n2,3,4\n")
        np.testing.assert_array_equal(read_landmarks(tmp_path / "a.csv"), [[1.5, 2], [3, 4]])

    def test_bad_number_names_line_and_field(self, tmp_path):
        (tmp_path / "a.csv").write_text("id,x,y\n1,0,0\n2,abc,0\n")
        with pytest.raises(InvalidArgumentError, match=r"a\.csv:3: field 'x'"):
            read_landmarks(tmp_path / "a.csv")

    def test_non_finite(self, tmp_path):
        (tmp_path / "a.csv").write_text("1,0,nan\n")
        with pytest.raises(InvalidArgumentError, match=r":1: field 'y' is not finite"):
            read_landmarks(tmp_path / "a.csv")

    def test_wrong_field_count(self, tmp_path):
        (tmp_path / "a.csv").write_text("1,0\n")
        with pytest.raises(InvalidArgumentError, match=":1:"):
            read_landmarks(tmp_path / "a.csv")

    def test_mixed_dims(self, tmp_path):
        (tmp_path / "a.csv").write_text("1,0,0\n2,0,0,0\n")
        with pytest.raises(InvalidArgumentError, match="mix"):
            read_landmarks(tmp_path / "a.csv")

    def test_dim_mismatch(self, tmp_path):
        write_landmarks(tmp_path / "a.csv", np.zeros((3, 2)))
        with pytest.raises(InvalidArgumentError, match="expected 3-D"):
            read_landmarks(tmp_path / "a.csv", dim=3)

    def test_empty(self, tmp_path):
        (tmp_path / "a.csv").write_text("id,x,y\n")
        with pytest.raises(InvalidArgumentError, match="no landmarks"):
            read_landmarks(tmp_path / "a.csv")

    def test_bad_shape_on_write(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            write_landmarks(tmp_path / "a.csv", np.zeros((3, 4)))


class TestJson:
    def test_canonical_key_order(self):
        assert dumps({"b": 1, "a": {"d": 2, "c": 3}}) == dumps({"a": {"c": 3, "d": 2}, "b": 1})
        assert dumps({}).endswith("\n")

    def test_hash_stable_and_sensitive(self):
        h = config_hash({"seed": 42, "lr": 1e-3})
        assert h == config_hash({"lr": 1e-3, "seed": 42})
        assert h != config_hash({"lr": 1e-3, "seed": 43})
        assert len(h) == 16 and int(h, 16) >= 0

    def test_nan_refused(self):
        with pytest.raises(ValueError):
            dumps({"x": float("nan")})

    def test_round_trip(self, tmp_path):
        doc = {"x": [0.1, 1e-300], "y": "z"}
        write_json(tmp_path / "d.json", doc)
        assert read_json(tmp_path / "d.json") == doc

    def test_malformed_names_line(self, tmp_path):
        (tmp_path / "d.json").write_text('{\n  "a": 1,\n  oops\n}\n')
        with pytest.raises(InvalidArgumentError, match=r"d\.json:3:"):
            read_json(tmp_path / "d.json")

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write_text(tmp_path / "t.txt", "one")
        atomic_write_text(tmp_path / "t.txt", "two")
        assert (tmp_path / "t.txt").read_text() == "two"
        assert [p.name for p in tmp_path.iterdir()] == ["t.txt"]

    def test_atomic_write_failure_cleans_up(self, tmp_path):
        with pytest.raises(TypeError):
            atomic_write_bytes(tmp_path / "t.txt", None)
        assert list(tmp_path.iterdir()) == []

    def test_json_is_valid_standard_json(self, tmp_path):
        write_json(tmp_path / "d.json", {"a": 1})
        assert json.loads((tmp_path / "d.json").read_text()) == {"a": 1}

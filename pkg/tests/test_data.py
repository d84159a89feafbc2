import math

import numpy as np
import pytest

from magiciv import DataError, Dataset, ScenarioConfig, gen_dataset, load_csv, validate
from magiciv.data import write_csv


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_basic(tmp_path):
    path = _write(tmp_path, "y,d,z1,z2\n1.5,0.5,1,0\n2.0,1.0,0,1\n0.0,0.25,1,1\n")
    ds = load_csv(path, "y", "d", ["z1", "z2"])
    assert ds.n == 3 and ds.p == 2
    assert ds.y.tolist() == [1.5, 2.0, 0.0]
    assert ds.z[:, 0].tolist() == [1.0, 0.0, 1.0]
    assert ds.instrument_names == ("z1", "z2")


def test_load_csv_binds_by_name_not_position(tmp_path):
    path = _write(tmp_path, "z2,y,z1,d\n0,1.5,1,0.5\n1,2.0,0,1.0\n")
    ds = load_csv(path, "y", "d", ["z1", "z2"])
    assert ds.y.tolist() == [1.5, 2.0]
    assert ds.d.tolist() == [0.5, 1.0]
    assert ds.z[:, 0].tolist() == [1.0, 0.0]  # z1 first, regardless of file order


def test_load_csv_constant_instrument(tmp_path):
    path = _write(tmp_path, "y,d,z1,z2\n1,2,1,0\n2,3,1,1\n3,4,1,0\n")
    with pytest.raises(DataError, match="constant instrument"):
        load_csv(path, "y", "d", ["z1", "z2"])


def test_load_csv_unparseable_cell_names_location(tmp_path):
    path = _write(tmp_path, "y,d,z1,z2\n1,2,1,0\n2,NA,0,1\n")
    with pytest.raises(DataError, match=r"row 2, column 'd'"):
        load_csv(path, "y", "d", ["z1", "z2"])


def test_load_csv_nonfinite_cell(tmp_path):
    path = _write(tmp_path, "y,d,z1,z2\n1,2,1,0\ninf,3,0,1\n")
    with pytest.raises(DataError, match=r"non-finite cell \(row 2, column 'y'\)"):
        load_csv(path, "y", "d", ["z1", "z2"])


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot open file"):
        load_csv(tmp_path / "nope.csv", "y", "d", ["z1"])


def test_load_csv_ragged_rows(tmp_path):
    short = _write(tmp_path, "y,d,z1,z2\n1,2,1\n2,3,0,1\n", name="short.csv")
    with pytest.raises(DataError, match="row 1 has 3 fields"):
        load_csv(short, "y", "d", ["z1", "z2"])
    long = _write(tmp_path, "y,d,z1,z2\n1,2,1,0,9\n2,3,0,1,9\n", name="long.csv")
    with pytest.raises(DataError, match="row 1 has 5 fields"):
        load_csv(long, "y", "d", ["z1", "z2"])


def test_load_csv_missing_column(tmp_path):
    path = _write(tmp_path, "y,d,z1\n1,2,1\n2,3,0\n")
    with pytest.raises(DataError, match="missing column: 'z9'"):
        load_csv(path, "y", "d", ["z1", "z9"])


def test_load_csv_duplicate_selection(tmp_path):
    path = _write(tmp_path, "y,d,z1\n1,2,1\n2,3,0\n")
    with pytest.raises(DataError, match="duplicate column selection"):
        load_csv(path, "y", "y", ["z1"])
    with pytest.raises(DataError, match="duplicate column selection"):
        load_csv(path, "y", "d", ["z1", "z1"])


def test_load_csv_ambiguous_header(tmp_path):
    path = _write(tmp_path, "y,d,z1,z1\n1,2,1,0\n2,3,0,1\n")
    with pytest.raises(DataError, match="ambiguous column"):
        load_csv(path, "y", "d", ["z1"])


def test_dataset_shape_errors():
    with pytest.raises(DataError, match="inconsistent lengths"):
        Dataset(y=np.ones(3), d=np.ones(2), z=np.ones((3, 1)))
    with pytest.raises(DataError, match="two-dimensional"):
        Dataset(y=np.ones(3), d=np.ones(3), z=np.ones(3))


def test_validate_clean():
    z = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    ds = Dataset(y=np.arange(4.0), d=np.arange(4.0) * 0.5, z=z)
    assert validate(ds) == []


def test_validate_constant_column():
    z = np.array([[0.0, 1.0], [0.0, 0.0], [0.0, 1.0]])
    ds = Dataset(y=np.arange(3.0), d=np.arange(3.0), z=z, instrument_names=("a", "b"))
    report = validate(ds)
    assert report == ["constant instrument: column 'a'"]


def test_validate_nonfinite_value():
    z = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([1.0, math.inf, 2.0])
    report = validate(Dataset(y=y, d=np.arange(3.0), z=z))
    assert len(report) == 1 and "non-finite value: column 'y', row 2" in report[0]


def test_validate_too_few_rows():
    ds = Dataset(y=np.array([1.0]), d=np.array([1.0]), z=np.array([[1.0]]))
    assert any("n >= 2" in entry for entry in validate(ds))


def test_validate_require_binary():
    z = np.array([[0.0, 0.5], [1.0, 1.5], [0.0, 0.5]])
    ds = Dataset(y=np.arange(3.0), d=np.arange(3.0), z=z)
    assert validate(ds) == []
    assert any("non-binary" in entry for entry in validate(ds, require_binary=True))


def test_write_read_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(11)
    z = (rng.random((8, 3)) < 0.5).astype(float)
    z[0] = [0, 1, 0]
    z[1] = [1, 0, 1]
    y = rng.standard_normal(8) * 1e3
    y[0] = 0.1  # classic non-dyadic decimal
    d = rng.standard_normal(8) * 1e-7
    ds = Dataset(y=y, d=d, z=z)
    path = tmp_path / "round.csv"
    write_csv(ds, path)
    back = load_csv(path, "y", "d", list(ds.names()))
    assert np.array_equal(back.y, ds.y)
    assert np.array_equal(back.d, ds.d)
    assert np.array_equal(back.z, ds.z)


def test_simulator_output_validates_clean(tmp_path):
    cfg = ScenarioConfig(p=5, n=120, seed=42)
    ds, _ = gen_dataset(cfg, 0)
    path = tmp_path / "sim.csv"
    write_csv(ds, path)
    back = load_csv(path, "y", "d", list(ds.names()))
    assert validate(back) == []

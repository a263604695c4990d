import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from sirenpet import io
from sirenpet.grid import ImageGrid, LabelMap
from sirenpet.objective import EvalRecord
from sirenpet.projector import Sinogram, SinogramGeometry

from conftest import random_model


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.floats(0, 1e6, allow_subnormal=True)),
       st.floats(0.1, 10), st.sampled_from(["activity", "mu"]))
def test_grid_round_trip(tmp_path_factory, values, pixel_size, kind):
    path = tmp_path_factory.mktemp("g") / "a.ipg"
    io.write_grid(path, ImageGrid(values, pixel_size, kind=kind))
    back = io.read_grid(path)
    assert back.kind == kind and back.pixel_size == pixel_size
    assert back.values.tobytes() == values.tobytes()


def test_label_round_trip(tmp_path):
    labels = LabelMap(np.arange(12).reshape(3, 4) % 7)
    io.write_grid(tmp_path / "l.ipg", labels)
    back = io.read_grid(tmp_path / "l.ipg")
    assert isinstance(back, LabelMap) and np.array_equal(back.values, labels.values)


def test_grid_header_layout(tmp_path):
    io.write_grid(tmp_path / "a.ipg", ImageGrid(np.zeros((2, 3)), 2.0))
    data = (tmp_path / "a.ipg").read_bytes()
    assert len(data) == 24 + 6 * 8
    assert data[:4] == b"IPG1"
    assert int.from_bytes(data[4:8], "little") == 3  # width first


@pytest.mark.parametrize("mangle", [lambda d: b"XXXX" + d[4:], lambda d: d[:-1], lambda d: d[:10],
                                    lambda d: d[:20] + b"\x07" + d[21:]])
def test_corrupt_grid(tmp_path, mangle):
    io.write_grid(tmp_path / "a.ipg", ImageGrid(np.ones((4, 4))))
    (tmp_path / "b.ipg").write_bytes(mangle((tmp_path / "a.ipg").read_bytes()))
    with pytest.raises(io.FormatError):
        io.read_grid(tmp_path / "b.ipg")


def test_sino_round_trip_and_corruption(tmp_path):
    geom = SinogramGeometry(5, 7, 1.5)
    values = np.random.default_rng(0).uniform(0, 10, geom.shape)
    io.write_sino(tmp_path / "s.ips", Sinogram(geom, values))
    back = io.read_sino(tmp_path / "s.ips")
    assert back.geometry == geom and back.values.tobytes() == values.tobytes()
    data = (tmp_path / "s.ips").read_bytes()
    (tmp_path / "t.ips").write_bytes(data[:-3])
    with pytest.raises(io.FormatError):
        io.read_sino(tmp_path / "t.ips")
    (tmp_path / "u.ips").write_bytes(b"IPG1" + data[4:])
    with pytest.raises(io.FormatError):
        io.read_sino(tmp_path / "u.ips")


def test_model_round_trip(tmp_path):
    model = random_model(shape=(10, 10), n_angles=8)
    io.save_model(tmp_path / "m", model)
    back = io.load_model(tmp_path / "m")
    x = np.random.default_rng(1).uniform(size=100)
    assert np.array_equal(back.expected(x), model.expected(x))
    with pytest.raises(io.FormatError):
        io.load_model(tmp_path / "missing")


def test_trajectory_round_trip(tmp_path):
    recs = [EvalRecord(0, 1.5, 2.0, 0.1), EvalRecord(1, 1.25, 1.0, 0.2, {"psnr": 12.0, "ssim": 0.5, "ar": 0.9, "rb": 0.1, "ir": 0.3})]
    io.write_trajectory(tmp_path / "t.csv", recs)
    rows = io.read_trajectory(tmp_path / "t.csv")
    assert [r["loss"] for r in rows] == [1.5, 1.25]
    assert np.isnan(rows[0]["psnr"]) and rows[1]["ir"] == 0.3


def test_png_window(tmp_path):
    assert not io.export_png(np.full((3, 3), 4.0), tmp_path / "c.png").any()
    px = io.export_png(np.array([[10.0, -3.0, 5.0, 20.0]]), tmp_path / "w.png", (0, 10))
    assert px.tolist() == [[65535, 0, 32768, 65535]]
    img = Image.open(tmp_path / "w.png")
    assert np.array_equal(np.array(img), px)


def test_run_config(tmp_path):
    cfg = io.RunConfig()
    assert cfg.get("bsrem", "beta") == 0.355 and cfg.get("phantom", "seed") is None
    cfg = io.RunConfig(overrides={"simulate": {"seed": 9, "angles": None}})
    assert cfg.get("simulate", "seed") == 9 and cfg.get("simulate", "angles") == 180
    cfg.write(tmp_path / "c.ini")
    assert io.RunConfig(tmp_path / "c.ini").section("simulate") == cfg.section("simulate")
    for bad in ({"nope": {"a": 1}}, {"mlem": {"nope": 1}}, {"mlem": {"iters": "x"}}):
        with pytest.raises(io.ConfigError):
            io.RunConfig(overrides=bad)
    with pytest.raises(io.ConfigError):
        io.RunConfig(tmp_path / "absent.ini")

import json

import numpy as np
import pytest

from dainr.dataset import (DatasetBundle, ensure_output_dir, load_dataset, load_reconstruction, read_mask, read_pgm,
                           read_raw, save_dataset, save_reconstruction, simulate_bundle, write_pgm, write_previews,
                           write_raw)
from dainr.phantom import cartesian_kspace, generate_coil_maps, retrospective_undersample


@pytest.fixture(scope="module")
def bundle():
    return simulate_bundle("cardiac", image_size=32, n_frames=4, n_coils=2, spokes_per_frame=5, seed=1)


def test_raw_round_trip(tmp_path, rng):
    z = (rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))).astype(np.complex64)
    entry = write_raw(tmp_path / "z.f32", z)
    assert entry == {"file": "z.f32", "shape": [2, 3], "complex": True}
    assert (tmp_path / "z.f32").stat().st_size == 2 * 3 * 2 * 4
    np.testing.assert_array_equal(read_raw(tmp_path / "z.f32", [2, 3], True), z)


def test_raw_layout_is_interleaved_little_endian(tmp_path):
    write_raw(tmp_path / "a.f32", np.array([1 + 2j]))
    assert np.frombuffer((tmp_path / "a.f32").read_bytes(), "<f4").tolist() == [1.0, 2.0]


def test_raw_size_mismatch(tmp_path):
    write_raw(tmp_path / "a.f32", np.zeros(5))
    with pytest.raises(ValueError):
        read_raw(tmp_path / "a.f32", [6], False)


def test_dataset_round_trip(tmp_path, bundle):
    save_dataset(bundle, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    acq, acq2 = bundle.acquisition, back.acquisition
    np.testing.assert_array_equal(back.ground_truth, bundle.ground_truth)
    np.testing.assert_array_equal(back.coil_maps, bundle.coil_maps)
    np.testing.assert_allclose(acq2.kspace, acq.kspace, rtol=1e-6, atol=1e-6 * np.abs(acq.kspace).max())
    np.testing.assert_array_equal(acq2.coords, acq.coords)
    assert set(back.rois) == {"aorta", "ventricle"}
    assert back.meta["seed"] == 1


def test_resimulation_reproduces_stored_samples(tmp_path, bundle):
    save_dataset(bundle, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    again = retrospective_undersample(back.ground_truth, back.coil_maps, 5)
    np.testing.assert_allclose(again.kspace.astype(np.complex64), back.acquisition.kspace, rtol=0, atol=1e-4)


def test_manifest_records_acceleration(tmp_path):
    b = simulate_bundle(image_size=128, n_frames=1, n_coils=1, spokes_per_frame=13, transform="nufft")
    save_dataset(b, tmp_path / "ds")
    assert json.loads((tmp_path / "ds" / "manifest.json").read_text())["acceleration_factor"] == 9.8


def test_simulation_deterministic(tmp_path):
    for name in ("a", "b"):
        save_dataset(simulate_bundle(image_size=16, n_frames=2, n_coils=2, spokes_per_frame=3, seed=9),
                     tmp_path / name)
    for f in (tmp_path / "a").rglob("*"):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_non_empty_output_rejected(tmp_path, bundle):
    save_dataset(bundle, tmp_path / "ds")
    with pytest.raises(FileExistsError):
        save_dataset(bundle, tmp_path / "ds")
    save_dataset(bundle, tmp_path / "ds", force=True)
    (tmp_path / "f").write_text("x")
    with pytest.raises(FileExistsError):
        ensure_output_dir(tmp_path / "f")


def test_cartesian_dataset(tmp_path, rng):
    maps = generate_coil_maps(16, 2, seed=0)
    img = rng.standard_normal((3, 16, 16)) + 0j
    k = cartesian_kspace(maps[None] * img[:, None])
    save_dataset(DatasetBundle(maps, trajectory="cartesian", cartesian_kspace=k), tmp_path / "c")
    back = load_dataset(tmp_path / "c")
    assert back.trajectory == "cartesian" and back.acquisition is None
    np.testing.assert_allclose(back.ground_truth, img, atol=1e-4)


def test_foreign_directory_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_dataset(tmp_path)


def test_masks(tmp_path):
    m = np.zeros((4, 4), np.float32)
    m[1, 2] = 1
    write_raw(tmp_path / "m.f32", m)
    np.testing.assert_array_equal(read_mask(tmp_path / "m.f32"), m != 0)
    write_raw(tmp_path / "bad.f32", np.zeros(5))
    with pytest.raises(ValueError):
        read_mask(tmp_path / "bad.f32")


def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", img)
    pix = read_pgm(tmp_path / "a.pgm")
    assert pix.shape == (3, 4) and pix.max() == 255 and pix.min() == 0


def test_previews_share_one_scale(tmp_path):
    frames = np.stack([np.full((4, 4), 1.0), np.full((4, 4), 2.0)])
    write_previews(tmp_path, frames)
    assert read_pgm(tmp_path / "frame_000.pgm").max() == 128
    assert read_pgm(tmp_path / "frame_001.pgm").max() == 255


def test_reconstruction_round_trip(tmp_path, rng):
    frames = (rng.standard_normal((2, 4, 4)) + 1j).astype(np.complex64)
    save_reconstruction(tmp_path, frames, {"method": "x"})
    back, meta = load_reconstruction(tmp_path)
    np.testing.assert_array_equal(back, frames)
    assert meta["method"] == "x"

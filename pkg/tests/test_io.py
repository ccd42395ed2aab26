"""On-disk formats: series directories and the binary model file."""

import json

import numpy as np
import pytest

from groupreg.edge import EdgeDetector
from groupreg.errors import DataError, FormatError
from groupreg.io import load_model, load_series, save_model, write_series
from groupreg.model import RegistrationModel
from groupreg.phantom import PhantomSpec, generate


@pytest.fixture(scope="module")
def series():
    return generate(PhantomSpec(size=64, frames=3, anatomy_seed=1, noise_snr_db=6.0))


def test_series_round_trip(tmp_path, series):
    d = tmp_path / "s"
    write_series(d, series, snr_db=6.0)
    loaded = load_series(d)
    assert loaded.n_frames == 3
    assert loaded.snr_db == 6.0
    np.testing.assert_array_equal(loaded.frames,
                                  series.noisy_frames.astype(np.float32))
    np.testing.assert_array_equal(loaded.reference,
                                  series.clean_reference.astype(np.float32))
    np.testing.assert_array_equal(loaded.gt_fields,
                                  series.gt_fields.astype(np.float32))


def test_clean_frame_rebuild_matches_float32_round_trip(tmp_path, series):
    d = tmp_path / "s"
    write_series(d, series, snr_db=6.0)
    loaded = load_series(d)
    from groupreg import backend
    for j in range(3):
        want = backend.warp_forward(loaded.reference.astype(np.float64),
                                    loaded.gt_fields[j].astype(np.float64))
        np.testing.assert_array_equal(loaded.clean_frame(j), want)


def test_series_manifest_validation(tmp_path, series):
    d = tmp_path / "s"
    write_series(d, series)
    manifest = json.loads((d / "manifest.json").read_text())
    manifest["frames"] = 5
    (d / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DataError):
        load_series(d)
    with pytest.raises(DataError):
        load_series(tmp_path / "missing")


def test_truncated_raster_detected(tmp_path, series):
    d = tmp_path / "s"
    write_series(d, series)
    raw = (d / "frame_000.raw").read_bytes()
    (d / "frame_000.raw").write_bytes(raw[:-8])
    with pytest.raises(DataError):
        load_series(d)


def test_model_save_load_bit_exact(tmp_path):
    model = RegistrationModel(seed=3)
    rng = np.random.default_rng(0)
    for p in model.parameters():
        p.data = rng.standard_normal(p.data.shape).astype(np.float32)
    path = tmp_path / "m.bin"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.parameter_names() == model.parameter_names()
    for k in model.params:
        np.testing.assert_array_equal(loaded.params[k].data, model.params[k].data)


def test_detector_save_load_round_trip(tmp_path, trained_detector):
    path = tmp_path / "d.bin"
    save_model(path, trained_detector)
    loaded = load_model(path)
    assert loaded.is_trained
    for a, b in zip(loaded.parameters(), trained_detector.parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_untrained_detector_flag_round_trips(tmp_path):
    det = EdgeDetector(seed=0)
    path = tmp_path / "d.bin"
    save_model(path, det)
    assert load_model(path).is_trained is False


@pytest.mark.parametrize("corruption", ["magic", "version", "truncate", "crc"])
def test_corrupted_model_file_rejected(tmp_path, corruption):
    model = RegistrationModel(seed=0)
    path = tmp_path / "m.bin"
    save_model(path, model)
    raw = bytearray(path.read_bytes())
    if corruption == "magic":
        raw[:4] = b"XXXX"
    elif corruption == "version":
        raw[4] = 99
    elif corruption == "truncate":
        raw = raw[: len(raw) // 2]
    elif corruption == "crc":
        raw[-20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_model(path)

"""On-disk formats: series directories and the binary model file.

Series directory: manifest.json plus headerless row-major 32-bit
little-endian rasters (frames, optional clean reference, optional
ground-truth fields).

Model file: magic "AIMD", u32 version, length-prefixed JSON descriptor,
raw little-endian f32 parameter blob in declaration order, trailing CRC32
of all preceding bytes.
"""

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from groupreg import backend
from groupreg.errors import DataError, FormatError

MANIFEST_VERSION = 1
MODEL_MAGIC = b"AIMD"
MODEL_VERSION = 1


# -- series store -----------------------------------------------------------

@dataclass
class StoredSeries:
    frames: np.ndarray                     # [F, H, W] float32
    snr_db: Optional[float]
    reference: Optional[np.ndarray]        # [H, W]
    gt_fields: Optional[np.ndarray]        # [F, 2, H, W]

    @property
    def n_frames(self):
        return self.frames.shape[0]

    def clean_frame(self, idx):
        """Noise-free counterpart of frame idx. For a noisy series this
        rebuilds it by warping the stored reference with the stored field."""
        if self.snr_db is None:
            return self.frames[idx]
        if self.reference is None or self.gt_fields is None:
            raise DataError("noisy series without reference/gt fields has no clean frames")
        ref = self.reference.astype(np.float64)
        return backend.warp_forward(ref, self.gt_fields[idx].astype(np.float64))


def _write_raster(path, arr):
    np.asarray(arr, dtype="<f4").tofile(path)


def _read_raster(path, shape):
    arr = np.fromfile(path, dtype="<f4")
    if arr.size != int(np.prod(shape)):
        raise DataError(f"{path}: expected {np.prod(shape)} values, found {arr.size}")
    return arr.reshape(shape)


def write_series(dirpath, series, snr_db=None):
    """Write a phantom GeneratedSeries as a series directory."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    frames = series.noisy_frames
    n = frames.shape[0]
    frame_files = [f"frame_{j:03d}.raw" for j in range(n)]
    for name, frame in zip(frame_files, frames):
        _write_raster(d / name, frame)
    _write_raster(d / "reference.raw", series.clean_reference)
    for j in range(n):
        _write_raster(d / f"field_{j:03d}.raw", series.gt_fields[j])
    manifest = {
        "version": MANIFEST_VERSION,
        "size": list(frames.shape[1:]),
        "frames": n,
        "snr_db": snr_db,
        "has_reference": True,
        "has_gt_fields": True,
        "frame_files": frame_files,
        "byte_order": "little",
        "dtype": "f32",
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")


def load_series(dirpath):
    d = Path(dirpath)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise DataError(f"{d}: no manifest.json")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    if manifest.get("version") != MANIFEST_VERSION:
        raise DataError(f"{d}: unsupported manifest version {manifest.get('version')}")
    h, w = manifest["size"]
    files = manifest["frame_files"]
    if len(files) != manifest["frames"]:
        raise DataError(f"{d}: manifest lists {manifest['frames']} frames "
                        f"but {len(files)} files")
    frames = np.stack([_read_raster(d / f, (h, w)) for f in files])
    reference = _read_raster(d / "reference.raw", (h, w)) if manifest["has_reference"] else None
    gt = None
    if manifest["has_gt_fields"]:
        gt = np.stack([_read_raster(d / f"field_{j:03d}.raw", (2, h, w))
                       for j in range(manifest["frames"])])
    return StoredSeries(frames, manifest["snr_db"], reference, gt)


# -- model file --------------------------------------------------------------

def _descriptor(obj):
    from groupreg.edge import EdgeDetector
    from groupreg.model import RegistrationModel
    if isinstance(obj, RegistrationModel):
        names = obj.parameter_names()
        tensors = [obj.params[n] for n in names]
        return {"kind": "registration",
                "params": [[n, list(t.data.shape)] for n, t in zip(names, tensors)]}, tensors
    if isinstance(obj, EdgeDetector):
        names, tensors = [], []
        for i, (w, b) in enumerate(zip(obj.weights, obj.biases)):
            names.append(f"conv{i}.w")
            tensors.append(w)
            names.append(f"conv{i}.b")
            tensors.append(b)
        return {"kind": "edge", "is_trained": bool(obj.is_trained),
                "params": [[n, list(t.data.shape)] for n, t in zip(names, tensors)]}, tensors
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_model(path, obj):
    desc, tensors = _descriptor(obj)
    desc["dtype"] = "f32"
    payload = json.dumps(desc, sort_keys=True).encode("utf-8")
    blob = b"".join(np.asarray(t.data, dtype="<f4").tobytes() for t in tensors)
    body = MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, len(payload)) + payload + blob
    body += struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(body)


def load_model(path):
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, jlen = struct.unpack("<II", raw[4:12])
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(raw) < 12 + jlen + 4:
        raise FormatError(f"{path}: truncated file")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise FormatError(f"{path}: checksum failure")
    desc = json.loads(raw[12:12 + jlen].decode("utf-8"))
    blob = raw[12 + jlen:-4]
    values = {}
    offset = 0
    for name, shape in desc["params"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        values[name] = arr.reshape(shape).copy()
        offset += count * 4
    if offset != len(blob):
        raise FormatError(f"{path}: parameter blob size mismatch")

    from groupreg.edge import EdgeDetector
    from groupreg.model import RegistrationModel
    from groupreg.tensor import Tensor
    if desc["kind"] == "registration":
        model = RegistrationModel(seed=0, dtype=np.float32)
        expected = model.parameter_names()
        if expected != [n for n, _ in desc["params"]]:
            raise FormatError(f"{path}: architecture descriptor mismatch")
        for n in expected:
            model.params[n] = Tensor(values[n], requires_grad=True)
        return model
    if desc["kind"] == "edge":
        det = EdgeDetector(seed=0)
        for i in range(len(det.weights)):
            det.weights[i] = Tensor(values[f"conv{i}.w"])
            det.biases[i] = Tensor(values[f"conv{i}.b"])
        det.is_trained = desc.get("is_trained", False)
        return det
    raise FormatError(f"{path}: unknown model kind {desc['kind']!r}")

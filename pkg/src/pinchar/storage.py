"""Binary container, CSV output and run manifests.

Container layout ("UCD1")::

    b"UCD1" | uint32 LE header length | UTF-8 JSON header | payload

The header names the record ``kind`` and lists the payload arrays in
order (name, little-endian dtype, shape). Payload arrays are stored raw and
back to back. Raw channel data is int16; waveforms, images and transfer
functions are 64-bit floats (complex values as pairs of them). JSON floats
are written with ``repr`` precision, so scalars round-trip exactly too.
Nothing time-dependent goes into a file, which keeps outputs byte-identical
across runs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .acquisition import ChannelData, ReceiveConfig, TxScheme
from .processing import BeamformedImage, Raster
from .transducer import TransferFunction
from .waveforms import CodeSequence, SampledWaveform

MAGIC = b"UCD1"
FORMAT_VERSION = 1
KINDS = ("waveform", "channel", "image", "tf")


class ContainerError(ValueError):
    """Malformed or inconsistent container file."""


# --- atomic output ------------------------------------------------------


def atomic_write(path, data: bytes) -> Path:
    """Write ``data`` to a temporary file next to ``path`` then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write(path, text.encode("utf-8"))


# --- container encoding -------------------------------------------------


def _encode(kind: str, meta: dict, arrays: dict) -> bytes:
    if kind not in KINDS:
        raise ContainerError(f"unknown kind {kind!r}")
    layout = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        le = arr.dtype.newbyteorder("<")
        layout.append({"name": name, "dtype": le.str, "shape": list(arr.shape)})
        chunks.append(np.ascontiguousarray(arr, dtype=le).tobytes())
    header = {"format": FORMAT_VERSION, "kind": kind, "arrays": layout, **meta}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=True).encode()
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(chunks)


def _decode(blob: bytes, source: str = "<bytes>") -> tuple[dict, dict]:
    if blob[:4] != MAGIC:
        raise ContainerError(f"{source}: not a UCD1 container")
    if len(blob) < 8:
        raise ContainerError(f"{source}: truncated header")
    (hlen,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{source}: unreadable header ({exc})") from None
    offset = 8 + hlen
    arrays = {}
    for spec in header.get("arrays", []):
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(blob):
            raise ContainerError(f"{source}: payload shorter than declared for {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(blob, dtype, count=nbytes // dtype.itemsize, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ContainerError(f"{source}: {len(blob) - offset} unexpected trailing bytes")
    return header, arrays


def _waveform_meta(w: SampledWaveform) -> dict:
    return {"sample_rate": w.sample_rate, "t0": w.t0, "unit": w.unit}


def _scheme_meta(s: TxScheme | None) -> dict | None:
    if s is None:
        return None
    return {
        "kind": s.kind,
        "element": s.element,
        "r_v": s.r_v,
        "tag": s.tag,
        "code": None if s.code is None else [int(c) for c in s.code.chips],
        "drive": _waveform_meta(s.drive),
    }


def encode(obj, seed: int | None = None, **extra) -> bytes:
    """Serialise a waveform, channel record, image or transfer function."""
    meta = {"seed": seed, **extra}
    if isinstance(obj, SampledWaveform):
        return _encode("waveform", {**meta, **_waveform_meta(obj)}, {"samples": obj.samples})
    if isinstance(obj, TransferFunction):
        return _encode(
            "tf",
            {**meta, "n_fft": obj.n_fft},
            {"freqs": obj.freqs, "values": obj.values, "valid": obj.valid.astype(np.uint8)},
        )
    if isinstance(obj, BeamformedImage):
        r = obj.raster
        raster = {"center": list(r.center), "extent": list(r.extent), "spacing": r.spacing}
        return _encode(
            "image",
            {**meta, "raster": raster, "scheme": obj.scheme},
            {"amplitudes": obj.amplitudes, "out_of_window": obj.out_of_window.astype(np.uint8)},
        )
    if isinstance(obj, ChannelData):
        s = obj.samples
        if s.dtype != np.int16 and not np.issubdtype(s.dtype, np.floating):
            raise ContainerError("channel samples must be int16 (raw) or float (processed)")
        arrays = {"samples": s if s.dtype == np.int16 else s.astype(np.float64)}
        if obj.scheme is not None:
            arrays["drive"] = obj.scheme.drive.samples
        cfg = None if obj.config is None else vars(obj.config).copy()
        chan = {"dt": obj.dt, "t0": obj.t0, "saturated": obj.saturated}
        return _encode("channel", {**meta, **chan, "scheme": _scheme_meta(obj.scheme), "receive": cfg}, arrays)
    raise TypeError(f"cannot store {type(obj).__name__}")


def decode(blob: bytes, source: str = "<bytes>"):
    """Inverse of :func:`encode`; returns ``(object, header)``."""
    header, arrays = _decode(blob, source)
    kind = header.get("kind")
    if kind == "waveform":
        obj = SampledWaveform(arrays["samples"], header["sample_rate"], header["t0"], header["unit"])
    elif kind == "tf":
        obj = TransferFunction(arrays["freqs"], arrays["values"], header["n_fft"], arrays["valid"].astype(bool))
    elif kind == "image":
        r = header["raster"]
        raster = Raster(tuple(r["center"]), tuple(r["extent"]), r["spacing"])
        obj = BeamformedImage(arrays["amplitudes"], raster, header["scheme"], arrays["out_of_window"].astype(bool))
    elif kind == "channel":
        scheme = None
        s = header.get("scheme")
        if s is not None:
            d = s["drive"]
            drive = SampledWaveform(arrays["drive"], d["sample_rate"], d["t0"], d["unit"])
            code = None if s["code"] is None else CodeSequence(np.array(s["code"]))
            scheme = TxScheme(s["kind"], drive, s["element"], s["r_v"], code, s["tag"])
        cfg = None if header.get("receive") is None else ReceiveConfig(**header["receive"])
        obj = ChannelData(arrays["samples"], header["dt"], scheme, cfg, header["t0"], header["saturated"])
    else:
        raise ContainerError(f"{source}: unknown kind {kind!r}")
    return obj, header


def write(path, obj, seed: int | None = None, **extra) -> Path:
    return atomic_write(path, encode(obj, seed, **extra))


def read(path):
    """Load a container; returns ``(object, header)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return decode(path.read_bytes(), str(path))


# --- CSV ----------------------------------------------------------------


def csv_text(columns: dict, units: dict | None = None) -> str:
    """Columns as CSV with ``name [unit]`` headers and round-trip float precision."""
    units = units or {}
    names = list(columns)
    cols = [np.asarray(columns[n]).ravel() for n in names]
    n = {c.size for c in cols}
    if len(n) > 1:
        raise ValueError("CSV columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{k} [{units[k]}]" if units.get(k) else k for k in names])
    for row in zip(*cols):
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns: dict, units: dict | None = None) -> Path:
    return atomic_write_text(path, csv_text(columns, units))


def read_csv(path) -> dict:
    """Read a CSV written by :func:`write_csv` back into float arrays keyed by bare name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = [h.split(" [")[0] for h in rows[0]]
    data = np.array(rows[1:], dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


# --- manifest -----------------------------------------------------------


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, config_hash: str, seed: int, files) -> Path:
    """Record what a run produced: config hash, seed and a digest of each output."""
    out_dir = Path(out_dir)
    entries = {str(Path(f).relative_to(out_dir)): sha256_file(f) for f in sorted(map(Path, files))}
    doc = {"command": command, "config_sha256": config_hash, "seed": seed, "outputs": entries}
    return atomic_write_text(out_dir / f"manifest-{command}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_waveform_csv(path, w: SampledWaveform) -> Path:
    """Two-column CSV of a waveform: time (s) and amplitude (its unit)."""
    return write_csv(path, {"time_s": w.times(), "amplitude": w.samples}, {"amplitude": w.unit})


def write_tf_csv(path, tf: TransferFunction) -> Path:
    """Transfer function as frequency, real and imaginary parts."""
    return write_csv(
        path,
        {"freq_hz": tf.freqs, "re": tf.values.real, "im": tf.values.imag, "valid": tf.valid.astype(int)},
    )


def write_image_csv(path, img: BeamformedImage) -> Path:
    """Long-format image grid: one row per raster point."""
    x, z = img.raster.points()
    return write_csv(
        path,
        {"lateral": x, "depth": z, "amplitude": img.amplitudes.ravel()},
        {"lateral": "m", "depth": "m"},
    )

"""File formats: SMAP binary grids, PGM previews, frame ingestion, parameter files.

The SMAP format is a float32 grid with a 16-byte header:

    bytes 0..3   magic ``SMAP``
    bytes 4..7   width  (uint32, little endian)
    bytes 8..11  height (uint32, little endian)
    bytes 12..15 frame index (uint32, little endian)

followed by ``height * width`` float32 values in row-major order.  Role-tagged
variants (smoother spill files, eye-focusing density maps) append a 12-byte
extension directly after the header: a 4-byte role tag, a format-version byte,
3 reserved bytes and a uint32 config hash.  Readers distinguish the two
layouts by payload size.  Known role tags: ``MEAN`` / ``VAR_`` (smoother
spill), ``EFDM`` (eye-focusing density map), ``SAL_`` (saliency).
"""

from __future__ import annotations

import json
import re
import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"SMAP"
FORMAT_VERSION = 1
ROLE_SALIENCY = "SAL_"
ROLE_MEAN = "MEAN"
ROLE_VARIANCE = "VAR_"
ROLE_DENSITY = "EFDM"

_HEADER = struct.Struct("<4sIII")
_EXTENSION = struct.Struct("<4sB3xI")


class FormatError(ValueError):
    """Raised when a file does not match its declared format."""


def config_hash(config: dict) -> int:
    """Stable 32-bit hash of a configuration snapshot."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return zlib.crc32(blob) & 0xFFFFFFFF


def write_scalar_map(path, values, frame_index=0, role=None, cfg_hash=0):
    """Write a 2-D scalar grid.  With ``role`` set, the extended layout is used."""
    values = np.ascontiguousarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise FormatError(f"scalar map must be 2-D, got shape {values.shape}")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, w, h, frame_index))
        if role is not None:
            f.write(_EXTENSION.pack(role.encode("ascii"), FORMAT_VERSION, cfg_hash))
        f.write(values.tobytes())


def read_scalar_map(path):
    """Read a SMAP file.

    Returns (values, frame_index, role, cfg_hash); role and cfg_hash are
    None/0 for the plain 16-byte-header layout.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a SMAP file (bad magic or truncated header)")
    magic, w, h, t = _HEADER.unpack_from(raw, 0)
    payload = len(raw) - _HEADER.size
    expected = 4 * w * h
    role, cfg = None, 0
    offset = _HEADER.size
    if payload == expected + _EXTENSION.size:
        tag, version, cfg = _EXTENSION.unpack_from(raw, offset)
        if version > FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        role = tag.decode("ascii")
        offset += _EXTENSION.size
    elif payload != expected:
        raise FormatError(f"{path}: payload size {payload} does not match {w}x{h} grid")
    values = np.frombuffer(raw, dtype="<f4", count=w * h, offset=offset)
    return values.reshape(h, w).copy(), t, role, cfg


def write_pgm_preview(path, values):
    """8-bit PGM preview, max-normalized per frame (preview only)."""
    values = np.asarray(values, dtype=np.float64)
    peak = values.max()
    scaled = values / peak if peak > 0 else values
    img = np.clip(scaled * 255.0, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


# ---------------------------------------------------------------------------
# Frame ingestion

_FRAME_SUFFIXES = {".png", ".pgm", ".ppm"}


def _frame_sort_key(path: Path):
    digits = re.findall(r"\d+", path.stem)
    return (int(digits[-1]) if digits else 0, path.name)


def list_frame_files(directory) -> list[Path]:
    """Image frames in a directory, ordered by zero-padded numeric index."""
    directory = Path(directory)
    files = [p for p in directory.iterdir()
             if p.suffix.lower() in _FRAME_SUFFIXES and p.is_file()]
    return sorted(files, key=_frame_sort_key)


def load_frame(path) -> np.ndarray:
    """Load one frame as float32 RGB in [0, 1], shape (H, W, 3)."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    except Exception as exc:
        raise FormatError(f"{path}: cannot decode frame ({exc})") from exc
    return arr / 255.0


def iter_frames(directory):
    """Yield (path, frame) pairs in deterministic order."""
    for p in list_frame_files(directory):
        yield p, load_frame(p)


def write_raw_rgb(path, frames):
    """Write frames as planar RGB bytes with a JSON sidecar header.

    Layout per frame: full R plane, then G, then B, 8 bits per sample.
    The sidecar ``<path>.json`` records width, height, frame_count and depth.
    """
    path = Path(path)
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise FormatError("raw RGB writer expects (T, H, W, 3) frames")
    t, h, w, _ = frames.shape
    data = np.clip(frames * 255.0 + 0.5, 0, 255).astype(np.uint8)
    planar = np.moveaxis(data, 3, 1)  # (T, 3, H, W)
    path.write_bytes(planar.tobytes())
    sidecar = {"width": w, "height": h, "frame_count": t, "depth": 8}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))


def iter_raw_rgb(path):
    """Yield float32 (H, W, 3) frames from a raw planar RGB file."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise FormatError(f"{path}: missing sidecar header {sidecar.name}")
    header = json.loads(sidecar.read_text())
    try:
        w, h, t, depth = (header[k] for k in ("width", "height", "frame_count", "depth"))
    except KeyError as exc:
        raise FormatError(f"{sidecar}: missing header key {exc}") from exc
    if depth != 8:
        raise FormatError(f"{path}: only 8-bit depth supported, got {depth}")
    frame_bytes = 3 * h * w
    with open(path, "rb") as f:
        for i in range(t):
            buf = f.read(frame_bytes)
            if len(buf) != frame_bytes:
                raise FormatError(f"{path}: truncated at frame {i}")
            planar = np.frombuffer(buf, dtype=np.uint8).reshape(3, h, w)
            yield np.moveaxis(planar, 0, 2).astype(np.float32) / 255.0


# ---------------------------------------------------------------------------
# Text key/value files (learned parameters, run configs)


def save_key_value(path, pairs: dict):
    lines = [f"format_version = {FORMAT_VERSION}"]
    lines += [f"{key} = {value!r}" if isinstance(value, str) else f"{key} = {value}"
              for key, value in pairs.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_key_value(path) -> dict:
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        pairs[key] = value
    version = pairs.pop("format_version", None)
    if version is None:
        raise FormatError(f"{path}: missing format_version line")
    if int(version) > FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    return pairs

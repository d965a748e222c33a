"""Binary container files for clips, embeddings, masks, and token streams.

Layout of every file:

* 8-byte magic: the 4-byte tag ``EVSF`` followed by a little-endian u32
  format version (currently 1),
* a little-endian u32 header length, then that many bytes of UTF-8 JSON
  with keys ``kind``, ``dtype``, ``shape``, ``layout``, ``meta``,
* the raw little-endian payload.

Clips and embeddings carry dense arrays, masks are bit-packed in canonical
site order (most-significant bit first within each byte), and token files
hold fixed-width records. Writers replace the destination atomically via a
temp file in the same directory.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional

import numpy as np

from ._util import ceil_div
from .errors import (
    CorruptFileError,
    InvalidMaskError,
    InvalidStreamError,
    UnsupportedFormatError,
)
from .geometry import TokenSite

MAGIC_TAG = b"EVSF"
FORMAT_VERSION = 1

SELECTOR_TAGS = ("rgb", "embedding", "random", "subsample", "merge")
POSITION_MODES = ("preserving", "sequential")

_DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype(np.uint8): "u8", np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class VideoClip:
    """Dense frame stack, shape (frames, 3, height, width), dtype u8 or f32."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if d.ndim != 4 or d.shape[1] != 3:
            raise ValueError(f"clip data must have shape (T, 3, H, W), got {d.shape}")
        if d.shape[0] < 1 or d.shape[2] < 1 or d.shape[3] < 1:
            raise ValueError(f"clip dimensions must be positive, got {d.shape}")
        if d.dtype not in (np.uint8, np.float32):
            raise ValueError(f"clip dtype must be uint8 or float32, got {d.dtype}")
        if not d.flags.c_contiguous:
            object.__setattr__(self, "data", np.ascontiguousarray(d))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class EmbeddingGrid:
    """Post-encoder features, shape (frames, grid_height, grid_width, channels), f32.

    The per-site feature vector is contiguous along the last axis.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if d.ndim != 4:
            raise ValueError(f"embedding data must have shape (T, H', W', C), got {d.shape}")
        if min(d.shape) < 1:
            raise ValueError(f"embedding dimensions must be positive, got {d.shape}")
        if d.dtype != np.float32:
            raise ValueError(f"embedding dtype must be float32, got {d.dtype}")
        if not np.isfinite(d).all():
            raise ValueError("embedding contains NaN or infinite elements")
        if not d.flags.c_contiguous:
            object.__setattr__(self, "data", np.ascontiguousarray(d))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def grid_height(self) -> int:
        return self.data.shape[1]

    @property
    def grid_width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class RetentionMask:
    """Keep/drop bit per token site, shape (frames, grid_height, grid_width).

    Frame 0 is always fully kept; constructing a mask that violates this
    raises :class:`InvalidMaskError`.
    """

    bits: np.ndarray
    pruning_rate_used: float
    selector_tag: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        b = self.bits
        if b.ndim != 3:
            raise ValueError(f"mask bits must have shape (T, H', W'), got {b.shape}")
        if min(b.shape) < 1:
            raise ValueError(f"mask dimensions must be positive, got {b.shape}")
        if b.dtype != np.bool_:
            raise ValueError(f"mask bits must be boolean, got {b.dtype}")
        if not 0.0 <= self.pruning_rate_used < 1.0:
            raise ValueError(f"pruning_rate_used must be in [0, 1), got {self.pruning_rate_used}")
        if self.selector_tag not in SELECTOR_TAGS:
            raise ValueError(f"unknown selector_tag {self.selector_tag!r}")
        if not bool(b[0].all()):
            raise InvalidMaskError("all frame-0 bits must be set")
        if not b.flags.c_contiguous:
            object.__setattr__(self, "bits", np.ascontiguousarray(b))

    @property
    def frames(self) -> int:
        return self.bits.shape[0]

    @property
    def grid_height(self) -> int:
        return self.bits.shape[1]

    @property
    def grid_width(self) -> int:
        return self.bits.shape[2]

    @property
    def site_count(self) -> int:
        return self.bits.size


@dataclass(frozen=True)
class TokenStream:
    """Retained token payloads paired with position ids.

    Entries are stored column-wise: ``position_ids`` (int64), ``sites``
    (int64, shape (K, 3) as t/y/x rows) and optionally ``payloads`` (f32,
    shape (K, C)). Entries must be strictly increasing in canonical flat
    index; position ids must match the declared mode.
    """

    position_ids: np.ndarray
    sites: np.ndarray
    payloads: Optional[np.ndarray]
    position_mode: str
    frames: int
    grid_height: int
    grid_width: int

    def __post_init__(self) -> None:
        if self.position_mode not in POSITION_MODES:
            raise ValueError(f"unknown position_mode {self.position_mode!r}")
        if min(self.frames, self.grid_height, self.grid_width) < 1:
            raise ValueError("grid dimensions must be positive")
        sites = np.asarray(self.sites, dtype=np.int64)
        ids = np.asarray(self.position_ids, dtype=np.int64)
        if sites.ndim != 2 or sites.shape[1] != 3:
            raise ValueError(f"sites must have shape (K, 3), got {sites.shape}")
        if ids.shape != (sites.shape[0],):
            raise ValueError("position_ids and sites disagree in length")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "position_ids", ids)
        if self.payloads is not None:
            p = self.payloads
            if p.ndim != 2 or p.shape[0] != sites.shape[0]:
                raise ValueError(f"payloads must have shape (K, C), got {p.shape}")
            if p.dtype != np.float32:
                raise ValueError(f"payloads must be float32, got {p.dtype}")
            if not p.flags.c_contiguous:
                object.__setattr__(self, "payloads", np.ascontiguousarray(p))
        self._validate_order()

    def _validate_order(self) -> None:
        t, y, x = self.sites[:, 0], self.sites[:, 1], self.sites[:, 2]
        if len(t) == 0:
            return
        bad_t = (t < 0) | (t >= self.frames)
        bad_y = (y < 0) | (y >= self.grid_height)
        bad_x = (x < 0) | (x >= self.grid_width)
        if bool((bad_t | bad_y | bad_x).any()):
            raise InvalidStreamError("token site out of grid bounds")
        flat = (t * self.grid_height + y) * self.grid_width + x
        if bool((np.diff(flat) <= 0).any()):
            raise InvalidStreamError("token sites must be strictly increasing in canonical order")
        if self.position_mode == "sequential":
            expected = np.arange(len(flat), dtype=np.int64)
        else:
            expected = flat
        if not np.array_equal(self.position_ids, expected):
            raise InvalidStreamError(
                f"position_ids inconsistent with {self.position_mode} mode"
            )

    @property
    def count(self) -> int:
        return self.sites.shape[0]

    @property
    def payload_dim(self) -> int:
        return 0 if self.payloads is None else self.payloads.shape[1]

    @property
    def source_token_count(self) -> int:
        return self.frames * self.grid_height * self.grid_width

    def entries(self) -> Iterator[tuple[int, TokenSite, Optional[np.ndarray]]]:
        for k in range(self.count):
            payload = None if self.payloads is None else self.payloads[k]
            yield int(self.position_ids[k]), TokenSite(*map(int, self.sites[k])), payload


# ---------------------------------------------------------------------------
# container plumbing


def _atomic_write(path: str | Path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_container(path: str | Path, kind: str, dtype: str, shape: list[int],
                    layout: str, meta: dict, payload: bytes) -> None:
    header = json.dumps(
        {"kind": kind, "dtype": dtype, "shape": list(map(int, shape)),
         "layout": layout, "meta": meta},
        separators=(",", ":"),
    ).encode("utf-8")
    blob = b"".join([
        MAGIC_TAG,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(header)),
        header,
        payload,
    ])
    _atomic_write(path, blob)


def read_container(path: str | Path) -> tuple[dict[str, Any], bytes]:
    return parse_container(Path(path).read_bytes(), str(path))


def parse_container(blob: bytes, path: str = "<bytes>") -> tuple[dict[str, Any], bytes]:
    if len(blob) < 12:
        raise CorruptFileError(f"{path}: file too short for a container header")
    if blob[:4] != MAGIC_TAG:
        raise UnsupportedFormatError(f"{path}: not a container file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    if 12 + hlen > len(blob):
        raise CorruptFileError(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: header is not valid JSON ({exc})") from exc
    for key in ("kind", "dtype", "shape", "layout", "meta"):
        if key not in header:
            raise CorruptFileError(f"{path}: header missing key {key!r}")
    return header, blob[12 + hlen:]


def peek_kind(path: str | Path) -> str:
    header, _ = read_container(path)
    return str(header["kind"])


def _require_kind(header: dict, path: str | Path, kind: str) -> None:
    if header["kind"] != kind:
        raise UnsupportedFormatError(
            f"{path}: expected kind {kind!r}, found {header['kind']!r}"
        )


def _payload_array(header: dict, payload: bytes, path: str | Path,
                   allowed_dtypes: tuple[str, ...]) -> np.ndarray:
    name = header["dtype"]
    if name not in allowed_dtypes:
        raise UnsupportedFormatError(f"{path}: unsupported dtype {name!r}")
    dtype = _DTYPES[name]
    shape = header["shape"]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 0
    if count * dtype.itemsize != len(payload):
        raise CorruptFileError(
            f"{path}: payload is {len(payload)} bytes, header declares "
            f"{count} x {dtype.itemsize}-byte elements"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


# ---------------------------------------------------------------------------
# clips


def write_clip(clip: VideoClip, path: str | Path, meta: Optional[dict] = None) -> None:
    dtype = _DTYPE_NAMES[clip.data.dtype]
    write_container(path, "clip", dtype, list(clip.data.shape), "TCHW",
                    meta or {}, clip.data.tobytes())


def read_clip(path: str | Path) -> VideoClip:
    header, payload = read_container(path)
    _require_kind(header, path, "clip")
    if len(header["shape"]) != 4:
        raise CorruptFileError(f"{path}: clip shape must have 4 dims")
    data = _payload_array(header, payload, path, ("u8", "f32"))
    return VideoClip(data.astype(data.dtype.newbyteorder("=")))


# ---------------------------------------------------------------------------
# embeddings


def write_embeddings(grid: EmbeddingGrid, path: str | Path, meta: Optional[dict] = None) -> None:
    write_container(path, "embedding", "f32", list(grid.data.shape), "THWC",
                    meta or {}, grid.data.tobytes())


def read_embeddings(path: str | Path) -> EmbeddingGrid:
    header, payload = read_container(path)
    _require_kind(header, path, "embedding")
    if len(header["shape"]) != 4:
        raise CorruptFileError(f"{path}: embedding shape must have 4 dims")
    data = _payload_array(header, payload, path, ("f32",))
    if not np.isfinite(data).all():
        raise CorruptFileError(f"{path}: embedding contains NaN or infinite elements")
    return EmbeddingGrid(data.astype(data.dtype.newbyteorder("=")))


# ---------------------------------------------------------------------------
# masks


def write_mask(mask: RetentionMask, path: str | Path) -> None:
    meta = dict(mask.meta)
    meta["pruning_rate_used"] = mask.pruning_rate_used
    meta["selector_tag"] = mask.selector_tag
    packed = np.packbits(mask.bits.reshape(-1))
    write_container(path, "mask", "bit", list(mask.bits.shape),
                    "THW;bits=msb-first", meta, packed.tobytes())


def read_mask(path: str | Path) -> RetentionMask:
    header, payload = read_container(path)
    _require_kind(header, path, "mask")
    if header["dtype"] != "bit":
        raise UnsupportedFormatError(f"{path}: unsupported mask dtype {header['dtype']!r}")
    shape = header["shape"]
    if len(shape) != 3:
        raise CorruptFileError(f"{path}: mask shape must have 3 dims")
    count = int(np.prod(shape, dtype=np.int64))
    if ceil_div(count, 8) != len(payload):
        raise CorruptFileError(
            f"{path}: payload is {len(payload)} bytes, header declares {count} bits"
        )
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=count)
    meta = dict(header["meta"])
    rate = float(meta.pop("pruning_rate_used", 0.0))
    tag = str(meta.pop("selector_tag", ""))
    if tag not in SELECTOR_TAGS:
        raise CorruptFileError(f"{path}: missing or unknown selector_tag {tag!r}")
    # RetentionMask re-verifies the frame-0 invariant and raises InvalidMaskError.
    return RetentionMask(bits.astype(bool).reshape(shape), rate, tag, meta)


# ---------------------------------------------------------------------------
# token streams


_RECORD_HEAD = np.dtype([
    ("position_id", "<u4"), ("t", "<u2"), ("y", "<u2"), ("x", "<u2"), ("pad", "<u2"),
])


def _record_dtype(payload_dim: int) -> np.dtype:
    if payload_dim == 0:
        return _RECORD_HEAD
    return np.dtype(_RECORD_HEAD.descr + [("payload", "<f4", (payload_dim,))])


def write_tokens(stream: TokenStream, path: str | Path, meta: Optional[dict] = None) -> None:
    if stream.count and int(stream.sites.max()) > 0xFFFF:
        raise ValueError("token site coordinates exceed the u16 record range")
    if stream.count and int(stream.position_ids.max()) > 0xFFFFFFFF:
        raise ValueError("position ids exceed the u32 record range")
    c = stream.payload_dim
    records = np.zeros(stream.count, dtype=_record_dtype(c))
    records["position_id"] = stream.position_ids
    records["t"] = stream.sites[:, 0]
    records["y"] = stream.sites[:, 1]
    records["x"] = stream.sites[:, 2]
    if c:
        records["payload"] = stream.payloads
    full_meta = dict(meta or {})
    full_meta["position_mode"] = stream.position_mode
    full_meta["grid"] = [stream.frames, stream.grid_height, stream.grid_width]
    write_container(path, "tokens", "f32" if c else "none", [stream.count, c],
                    "records", full_meta, records.tobytes())


def read_tokens(path: str | Path) -> TokenStream:
    header, payload = read_container(path)
    _require_kind(header, path, "tokens")
    shape = header["shape"]
    if len(shape) != 2:
        raise CorruptFileError(f"{path}: token shape must be [count, payload_dim]")
    count, c = int(shape[0]), int(shape[1])
    if header["dtype"] not in ("f32", "none"):
        raise UnsupportedFormatError(f"{path}: unsupported token dtype {header['dtype']!r}")
    if (header["dtype"] == "none") != (c == 0):
        raise CorruptFileError(f"{path}: dtype and payload_dim disagree")
    rec = _record_dtype(c)
    if count * rec.itemsize != len(payload):
        raise CorruptFileError(
            f"{path}: payload is {len(payload)} bytes, header declares "
            f"{count} x {rec.itemsize}-byte records"
        )
    meta = dict(header["meta"])
    mode = meta.get("position_mode")
    grid = meta.get("grid")
    if mode not in POSITION_MODES or not isinstance(grid, list) or len(grid) != 3:
        raise CorruptFileError(f"{path}: token meta missing position_mode or grid")
    records = np.frombuffer(payload, dtype=rec)
    sites = np.stack([records["t"], records["y"], records["x"]], axis=1).astype(np.int64)
    payloads = records["payload"].astype(np.float32).reshape(count, c) if c else None
    try:
        return TokenStream(
            position_ids=records["position_id"].astype(np.int64),
            sites=sites,
            payloads=payloads,
            position_mode=str(mode),
            frames=int(grid[0]),
            grid_height=int(grid[1]),
            grid_width=int(grid[2]),
        )
    except ValueError as exc:
        raise CorruptFileError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# metadata tables (calibration data)


def write_meta_table(path: str | Path, values: np.ndarray, meta: dict) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    write_container(path, "meta", "f64", list(values.shape), "rows", meta, values.tobytes())


def read_meta_table(path: str | Path) -> tuple[np.ndarray, dict]:
    header, payload = read_container(path)
    _require_kind(header, path, "meta")
    values = _payload_array(header, payload, path, ("f64",))
    return values.astype(np.float64), dict(header["meta"])


# ---------------------------------------------------------------------------
# PPM/PGM image sequences


def _read_pnm_tokens(blob: bytes, count: int, path: str | Path) -> tuple[list[int], int]:
    """Parse `count` whitespace-separated integers after the magic, skipping comments."""
    values: list[int] = []
    pos = 2  # past the 2-byte magic
    while len(values) < count:
        if pos >= len(blob):
            raise CorruptFileError(f"{path}: truncated image header")
        ch = blob[pos:pos + 1]
        if ch == b"#":
            nl = blob.find(b"\n", pos)
            if nl < 0:
                raise CorruptFileError(f"{path}: unterminated comment")
            pos = nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(blob) and not blob[end:end + 1].isspace() and blob[end:end + 1] != b"#":
                end += 1
            token = blob[pos:end]
            if not token.isdigit():
                raise CorruptFileError(f"{path}: bad header token {token!r}")
            values.append(int(token))
            pos = end
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise CorruptFileError(f"{path}: missing raster separator")
    return values, pos + 1


def read_pnm(path: str | Path) -> np.ndarray:
    """Read one binary PPM (P6) or PGM (P5) frame as a (3, H, W) uint8 array.

    Grayscale input is replicated across the three channels.
    """
    blob = Path(path).read_bytes()
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"{path}: only binary PPM (P6) and PGM (P5) are accepted")
    (width, height, maxval), start = _read_pnm_tokens(blob, 3, path)
    if width < 1 or height < 1:
        raise CorruptFileError(f"{path}: bad image dimensions {width}x{height}")
    if maxval < 1 or maxval > 255:
        raise UnsupportedFormatError(f"{path}: only 8-bit samples supported (maxval {maxval})")
    channels = 3 if magic == b"P6" else 1
    expect = width * height * channels
    raster = blob[start:]
    if len(raster) != expect:
        raise CorruptFileError(
            f"{path}: raster is {len(raster)} bytes, header declares {expect}"
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    if channels == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    return np.ascontiguousarray(pixels.transpose(2, 0, 1))


def write_ppm(path: str | Path, frame: np.ndarray) -> None:
    """Write a (3, H, W) uint8 array as a binary PPM (P6) file."""
    if frame.ndim != 3 or frame.shape[0] != 3 or frame.dtype != np.uint8:
        raise ValueError(f"expected a (3, H, W) uint8 frame, got {frame.shape} {frame.dtype}")
    _, h, w = frame.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    _atomic_write(path, header + frame.transpose(1, 2, 0).tobytes())


def read_image_dir(path: str | Path) -> VideoClip:
    """Load a directory of binary PPM/PGM frames, sorted by filename, as a clip."""
    root = Path(path)
    files = sorted(p for p in root.iterdir()
                   if p.is_file() and p.suffix.lower() in (".ppm", ".pgm", ".pnm"))
    if not files:
        raise UnsupportedFormatError(f"{path}: no .ppm/.pgm frames found")
    frames = [read_pnm(p) for p in files]
    first = frames[0].shape
    for p, f in zip(files, frames):
        if f.shape != first:
            raise CorruptFileError(
                f"{p}: frame shape {f.shape[1:]} differs from first frame {first[1:]}"
            )
    return VideoClip(np.stack(frames, axis=0))

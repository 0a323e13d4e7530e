"""File containers.

Every container is an ASCII header of ``key value`` lines, terminated by a
line ``end``, followed immediately by raw little-endian samples.  The first
header line is the format tag and version.  See ``FORMATS.md`` for the
byte-level layout.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .admm import PHASES, AdmmState
from .exceptions import FormatError
from .geometry import Sinogram
from .metrics import format_metric
from .priors import GridScorePrior
from .regularizers import PatchLayout

__all__ = [
    "write_sinogram",
    "read_sinogram",
    "write_image",
    "read_image",
    "write_prior",
    "read_prior",
    "write_checkpoint",
    "read_checkpoint",
    "write_history_csv",
    "write_pgm",
    "ingest_volume",
    "export_raw_volume",
    "ELEMENT_TYPES",
]

SINO_TAG = "TVLORA-SINO"
IMAGE_TAG = "TVLORA-IMG"
PRIOR_TAG = "TVLORA-PRIOR"
CKPT_TAG = "TVLORA-CKPT"
VERSION = "1"

_DTYPES = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}

ELEMENT_TYPES = {
    "u8": np.dtype("u1"),
    "u16le": np.dtype("<u2"),
    "i16le": np.dtype("<i2"),
    "f32le": np.dtype("<f4"),
    "f64le": np.dtype("<f8"),
}

HISTORY_COLUMNS = ("iteration", "objective", "r_vx", "r_vy", "r_z", "pcg_iters", "psnr") + tuple(
    f"t_{p}" for p in PHASES
)


def _fmt_float(v):
    return repr(float(v))


def _write(path, tag, header, arrays, dtype="f32le"):
    lines = [f"{tag} {VERSION}"]
    lines += [f"{key} {value}" for key, value in header]
    lines += [f"dtype {dtype}", "end"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes())


def _read(path, tag):
    raw = Path(path).read_bytes()
    header = {}
    pos = 0
    first = True
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise FormatError(f"{path}: header is not terminated by 'end'")
        try:
            line = raw[pos:nl].decode("ascii").strip()
        except UnicodeDecodeError:
            raise FormatError(f"{path}: header is not ASCII text") from None
        pos = nl + 1
        if first:
            parts = line.split()
            if len(parts) != 2 or parts[0] != tag:
                raise FormatError(f"{path}: expected a {tag} file, found {line!r}")
            if parts[1] != VERSION:
                raise FormatError(f"{path}: unsupported {tag} version {parts[1]}")
            first = False
            continue
        if line == "end":
            break
        key, _, value = line.partition(" ")
        header[key] = value
    dtype = header.get("dtype", "f32le")
    if dtype not in _DTYPES:
        raise FormatError(f"{path}: unsupported dtype {dtype!r}")
    return header, raw[pos:], _DTYPES[dtype]


def _take(payload, dtype, count, offset, path):
    nbytes = count * dtype.itemsize
    if offset + nbytes > len(payload):
        raise FormatError(f"{path}: payload truncated")
    arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset).astype(np.float64)
    return arr, offset + nbytes


def write_sinogram(path, sino: Sinogram, shape, dtype="f32le"):
    """Write a sinogram for an image of ``shape = (H, W)``."""
    height, width = shape
    header = [
        ("width", width),
        ("height", height),
        ("n_view", sino.n_view),
        ("n_det", sino.n_det),
        ("angles", " ".join(_fmt_float(a) for a in sino.angles)),
    ]
    _write(path, SINO_TAG, header, [sino.data], dtype)


def read_sinogram(path):
    """Return ``(sinogram, (H, W))``."""
    header, payload, dtype = _read(path, SINO_TAG)
    try:
        width, height = int(header["width"]), int(header["height"])
        n_view, n_det = int(header["n_view"]), int(header["n_det"])
        angles = np.array([float(a) for a in header["angles"].split()])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed header entry {exc}") from None
    if angles.size != n_view:
        raise FormatError(f"{path}: {angles.size} angles listed, n_view is {n_view}")
    data, end = _take(payload, dtype, n_view * n_det, 0, path)
    if end != len(payload):
        raise FormatError(f"{path}: {len(payload) - end} trailing bytes")
    return Sinogram(angles, data.reshape(n_view, n_det)), (height, width)


def write_image(path, img, dtype="f32le"):
    """Write a ``(H, W)`` image or ``(S, H, W)`` volume."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected 2D or 3D data, got shape {arr.shape}")
    header = [("width", arr.shape[2]), ("height", arr.shape[1]), ("slices", arr.shape[0])]
    _write(path, IMAGE_TAG, header, [arr], dtype)


def read_image(path):
    """Read an image container; always returns ``(S, H, W)``."""
    header, payload, dtype = _read(path, IMAGE_TAG)
    try:
        width, height = int(header["width"]), int(header["height"])
        slices = int(header.get("slices", 1))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed header entry {exc}") from None
    data, end = _take(payload, dtype, width * height * slices, 0, path)
    if end != len(payload):
        raise FormatError(f"{path}: {len(payload) - end} trailing bytes")
    return data.reshape(slices, height, width)


def write_prior(path, prior: GridScorePrior, dtype="f32le"):
    height, width = prior.shape
    header = [
        ("width", width),
        ("height", height),
        ("n_sigmas", prior.sigmas.size),
        ("sigmas", " ".join(_fmt_float(s) for s in prior.sigmas)),
    ]
    _write(path, PRIOR_TAG, header, [prior.fields], dtype)


def read_prior(path):
    header, payload, dtype = _read(path, PRIOR_TAG)
    try:
        width, height = int(header["width"]), int(header["height"])
        n = int(header["n_sigmas"])
        sigmas = np.array([float(s) for s in header["sigmas"].split()])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed header entry {exc}") from None
    if sigmas.size != n:
        raise FormatError(f"{path}: {sigmas.size} sigmas listed, n_sigmas is {n}")
    data, end = _take(payload, dtype, n * height * width, 0, path)
    if end != len(payload):
        raise FormatError(f"{path}: {len(payload) - end} trailing bytes")
    return GridScorePrior(sigmas, data.reshape(n, height, width))


def _history_table(history):
    table = np.full((len(history), len(HISTORY_COLUMNS)), np.nan)
    for r, rec in enumerate(history):
        for c, key in enumerate(HISTORY_COLUMNS):
            if key in rec:
                table[r, c] = rec[key]
    return table


def write_checkpoint(path, state: AdmmState, layout: PatchLayout):
    """Full solver state in double precision, resumable bit for bit."""
    height, width = state.x.shape
    rows, cols = state.z.shape
    header = [
        ("width", width),
        ("height", height),
        ("patch_rows", rows),
        ("patch_cols", cols),
        ("patch_shape", " ".join(map(str, layout.patch_shape))),
        ("patch_stride", " ".join(map(str, layout.stride))),
        ("k", state.k),
        ("history_rows", len(state.history)),
        ("history_columns", " ".join(HISTORY_COLUMNS)),
    ]
    arrays = [state.x, state.vx, state.vy, state.u1, state.u2, state.z, state.u3]
    arrays.append(_history_table(state.history))
    _write(path, CKPT_TAG, header, arrays, "f64le")


def read_checkpoint(path):
    """Return ``(state, layout)``."""
    header, payload, dtype = _read(path, CKPT_TAG)
    try:
        width, height = int(header["width"]), int(header["height"])
        rows, cols = int(header["patch_rows"]), int(header["patch_cols"])
        patch_shape = tuple(int(v) for v in header["patch_shape"].split())
        stride = tuple(int(v) for v in header["patch_stride"].split())
        k = int(header["k"])
        n_hist = int(header["history_rows"])
        columns = header["history_columns"].split()
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed header entry {exc}") from None
    off = 0
    images = []
    for _ in range(5):
        arr, off = _take(payload, dtype, height * width, off, path)
        images.append(arr.reshape(height, width))
    mats = []
    for _ in range(2):
        arr, off = _take(payload, dtype, rows * cols, off, path)
        mats.append(arr.reshape(rows, cols))
    table, off = _take(payload, dtype, n_hist * len(columns), off, path)
    if off != len(payload):
        raise FormatError(f"{path}: {len(payload) - off} trailing bytes")
    table = table.reshape(n_hist, len(columns))
    history = []
    for row in table:
        rec = {}
        for key, value in zip(columns, row):
            if math.isnan(value):
                continue
            rec[key] = int(value) if key in ("iteration", "pcg_iters") else float(value)
        history.append(rec)
    x, vx, vy, u1, u2 = images
    z, u3 = mats
    layout = PatchLayout((height, width), patch_shape, stride)
    return AdmmState(x, vx, vy, z, u1, u2, u3, k=k, history=history), layout


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for rec in history:
            row = []
            for key in HISTORY_COLUMNS:
                value = rec.get(key)
                if key in ("iteration", "pcg_iters"):
                    row.append("" if value is None else str(int(value)))
                else:
                    row.append("" if value is None else format_metric(value, 9))
            writer.writerow(row)


def write_pgm(path, img, lo=0.0, hi=1.0):
    """16-bit binary PGM (P5, maxval 65535, big-endian) of ``img`` clipped to ``[lo, hi]``."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"PGM export needs a 2D image, got shape {arr.shape}")
    scaled = np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.round(scaled * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii"))
        fh.write(pixels.tobytes())


def ingest_volume(path, dims, element_type="u16le", peak=None):
    """Load a headerless little-endian volume and normalise it by ``peak``.

    Parameters
    ----------
    dims : (W, H, S)
        Width, height and slice count; slices are stored consecutively,
        each row-major.
    element_type : {'u8', 'u16le', 'i16le', 'f32le', 'f64le'}
    peak : float, optional
        Value mapped to 1.  Defaults to the type maximum for integers and
        1.0 for floats.

    Returns
    -------
    ndarray of shape (S, H, W)
    """
    if element_type not in ELEMENT_TYPES:
        raise ValueError(f"unknown element type {element_type!r}; choose from {sorted(ELEMENT_TYPES)}")
    dtype = ELEMENT_TYPES[element_type]
    width, height, slices = (int(d) for d in dims)
    if min(width, height, slices) < 1:
        raise ValueError(f"invalid volume dims {dims}")
    if peak is None:
        peak = float(np.iinfo(dtype).max) if dtype.kind in "ui" else 1.0
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    raw = Path(path).read_bytes()
    expected = width * height * slices * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"{path}: size {len(raw)} bytes does not match {width}x{height}x{slices} "
            f"{element_type} ({expected} bytes)"
        )
    data = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: volume contains NaN or Inf")
    return (data / peak).reshape(slices, height, width)


def export_raw_volume(path, vol, element_type="u16le", peak=None):
    """Inverse of :func:`ingest_volume` (values are rounded for integer types)."""
    dtype = ELEMENT_TYPES[element_type]
    if peak is None:
        peak = float(np.iinfo(dtype).max) if dtype.kind in "ui" else 1.0
    data = np.asarray(vol, dtype=np.float64) * peak
    if dtype.kind in "ui":
        info = np.iinfo(dtype)
        data = np.clip(np.round(data), info.min, info.max)
    Path(path).write_bytes(data.astype(dtype).tobytes())

"""Serialization: the FLIMCUBE container, CSV/PGM/PPM exports, IDX input.

The cube container is a minimal binary format: 8-byte magic, a 32-bit
little-endian header length, a UTF-8 JSON header, then the raw counts
payload (row-major, time-fastest, little-endian).  Counts that fit in
16 bits are stored as u16; anything larger is promoted to u32 and the
header records it.
"""

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decay import (
    DecayModel,
    Disk,
    FlimCube,
    PhantomSpec,
    Rectangle,
    Region,
    TimeGrid,
)
from .errors import FileFormatError
from .images import LifetimeImage
from .phasor import PhasorImage

CUBE_MAGIC = b"FLIMCUBE"
CUBE_VERSION = 1
_FLOAT_FMT = "{:.9g}"


def _fmt(x: float) -> str:
    return _FLOAT_FMT.format(float(x))


# --- FLIMCUBE container ------------------------------------------------------


def cube_to_bytes(cube: FlimCube) -> bytes:
    max_count = int(cube.counts.max(initial=0))
    if max_count > 0xFFFFFFFF:
        raise ValueError(f"count {max_count} exceeds the u32 container limit")
    dtype = "u16" if max_count <= 0xFFFF else "u32"
    header = {
        "version": CUBE_VERSION,
        "width": cube.width,
        "height": cube.height,
        "n_bins": cube.grid.n_bins,
        "bin_width_ns": cube.grid.bin_width,
        "origin_ns": cube.grid.origin,
        "count_dtype": dtype,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    np_dtype = "<u2" if dtype == "u16" else "<u4"
    payload = cube.counts.astype(np_dtype).tobytes()
    return (
        CUBE_MAGIC
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + payload
    )


def cube_from_bytes(data: bytes) -> FlimCube:
    if len(data) < len(CUBE_MAGIC):
        raise FileFormatError("file shorter than the magic", offset=len(data))
    if data[: len(CUBE_MAGIC)] != CUBE_MAGIC:
        raise FileFormatError(
            f"bad magic {data[:len(CUBE_MAGIC)]!r}, expected {CUBE_MAGIC!r}",
            offset=0,
        )
    off = len(CUBE_MAGIC)
    if len(data) < off + 4:
        raise FileFormatError("missing header length", offset=off)
    (header_len,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + header_len:
        raise FileFormatError("header extends past end of file", offset=off)
    try:
        header = json.loads(data[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"header is not valid JSON: {exc}", offset=off)
    off += header_len

    version = header.get("version")
    if version != CUBE_VERSION:
        raise FileFormatError(f"unsupported container version {version!r}", offset=off)
    try:
        width = int(header["width"])
        height = int(header["height"])
        n_bins = int(header["n_bins"])
        bin_width = float(header["bin_width_ns"])
        origin = float(header["origin_ns"])
        dtype = header["count_dtype"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"malformed header field: {exc}", offset=off)
    if dtype not in ("u16", "u32"):
        raise FileFormatError(f"unsupported count dtype {dtype!r}", offset=off)
    np_dtype = "<u2" if dtype == "u16" else "<u4"
    item = 2 if dtype == "u16" else 4
    expected = width * height * n_bins * item
    if len(data) - off != expected:
        raise FileFormatError(
            f"payload holds {len(data) - off} bytes, header implies {expected}",
            offset=off + min(len(data) - off, expected),
        )
    counts = np.frombuffer(data, dtype=np_dtype, count=width * height * n_bins,
                           offset=off)
    counts = counts.reshape(height, width, n_bins).astype(np.int64)
    return FlimCube(TimeGrid(n_bins, bin_width, origin), counts)


def write_cube(cube: FlimCube, path) -> None:
    _atomic_write(path, cube_to_bytes(cube))


def read_cube(path) -> FlimCube:
    return cube_from_bytes(Path(path).read_bytes())


def atomic_write_bytes(path, data: bytes) -> None:
    """Write-temp-then-rename so readers never observe partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


_atomic_write = atomic_write_bytes


# --- CSV exports -------------------------------------------------------------


def phasor_csv(img: PhasorImage) -> str:
    """CSV of the valid pixels: x, y, g, s, intensity, valid."""
    lines = ["x,y,g,s,intensity,valid"]
    ys, xs = np.nonzero(img.valid)
    for y, x in zip(ys.tolist(), xs.tolist()):
        lines.append(
            f"{x},{y},{_fmt(img.g[y, x])},{_fmt(img.s[y, x])},"
            f"{_fmt(img.intensity[y, x])},1"
        )
    return "\n".join(lines) + "\n"


def export_phasor_csv(img: PhasorImage, path) -> None:
    _atomic_write(path, phasor_csv(img).encode("utf-8"))


def lifetime_csv(img: LifetimeImage) -> str:
    """CSV of every pixel; invalid rows carry zeros, never NaN."""
    cols = ["x", "y"]
    for i in range(img.n_components):
        cols += [f"tau{i + 1}_ns", f"frac{i + 1}"]
    cols += ["intensity", "valid"]
    lines = [",".join(cols)]
    for y in range(img.height):
        for x in range(img.width):
            ok = bool(img.valid[y, x])
            vals = [str(x), str(y)]
            for i in range(img.n_components):
                vals.append(_fmt(img.tau[y, x, i] if ok else 0.0))
                vals.append(_fmt(img.fractions[y, x, i] if ok else 0.0))
            vals.append(_fmt(img.intensity[y, x]))
            vals.append("1" if ok else "0")
            lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def export_lifetime_csv(img: LifetimeImage, path) -> None:
    _atomic_write(path, lifetime_csv(img).encode("utf-8"))


# --- PPM / PGM ---------------------------------------------------------------


def ppm_bytes(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("PPM export needs (H, W, 3) uint8")
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def export_ppm(rgb: np.ndarray, path) -> None:
    _atomic_write(path, ppm_bytes(rgb))


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    return ppm_from_bytes(data)


def ppm_from_bytes(data: bytes) -> np.ndarray:
    fields, off = _read_pnm_header(data, b"P6")
    w, h, maxval = fields
    if maxval != 255:
        raise FileFormatError(f"unsupported maxval {maxval}", offset=off)
    expected = w * h * 3
    if len(data) - off < expected:
        raise FileFormatError("PPM payload truncated", offset=len(data))
    arr = np.frombuffer(data, dtype=np.uint8, count=expected, offset=off)
    return arr.reshape(h, w, 3).copy()


def export_labels_ppm(rgb: np.ndarray, path) -> None:
    """Write a segmentation color label map as binary PPM."""
    export_ppm(rgb, path)


def export_composite_ppm(image, path) -> None:
    """Write a composite HSV rendering as binary PPM."""
    export_ppm(image.rgb, path)


def pgm_bytes(gray: np.ndarray) -> bytes:
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError("PGM export needs (H, W) uint8")
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes()


def export_pgm(gray: np.ndarray, path) -> None:
    _atomic_write(path, pgm_bytes(gray))


def _read_pnm_header(data: bytes, magic: bytes):
    if not data.startswith(magic):
        raise FileFormatError(f"expected {magic!r} header", offset=0)
    fields = []
    off = len(magic)
    while len(fields) < 3:
        while off < len(data) and data[off : off + 1].isspace():
            off += 1
        if off < len(data) and data[off : off + 1] == b"#":
            while off < len(data) and data[off : off + 1] != b"\n":
                off += 1
            continue
        start = off
        while off < len(data) and not data[off : off + 1].isspace():
            off += 1
        if start == off:
            raise FileFormatError("truncated PNM header", offset=off)
        try:
            fields.append(int(data[start:off]))
        except ValueError:
            raise FileFormatError("non-numeric PNM header field", offset=start)
    off += 1  # single whitespace after maxval
    return fields, off


# --- IDX (MNIST-style) phantom source ---------------------------------------


def load_idx(path) -> np.ndarray:
    """Read an IDX file of unsigned bytes into an ndarray."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FileFormatError("IDX file shorter than its magic", offset=len(data))
    zero1, zero2, dtype_code, n_dims = data[0], data[1], data[2], data[3]
    if zero1 != 0 or zero2 != 0:
        raise FileFormatError("bad IDX magic", offset=0)
    if dtype_code != 0x08:
        raise FileFormatError(
            f"unsupported IDX dtype 0x{dtype_code:02x} (only unsigned byte)",
            offset=2,
        )
    off = 4
    dims = []
    for _ in range(n_dims):
        if len(data) < off + 4:
            raise FileFormatError("truncated IDX dimension header", offset=off)
        dims.append(struct.unpack_from(">I", data, off)[0])
        off += 4
    count = int(np.prod(dims)) if dims else 0
    if len(data) - off < count:
        raise FileFormatError("IDX payload truncated", offset=len(data))
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=off).reshape(dims).copy()


def phantom_maps_from_image(
    image: np.ndarray, peak_photons: float
) -> tuple[np.ndarray, np.ndarray]:
    """Expected-count and label maps from a grayscale image.

    Nonzero pixels scale linearly to peak_photons and share decay model
    index 0; zero pixels are background.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("phantom image must be 2-D")
    top = image.max()
    if top <= 0:
        raise ValueError("phantom image is empty")
    mean_map = image / top * peak_photons
    label_map = np.where(image > 0, 0, -1)
    return mean_map, label_map


# --- phantom spec JSON -------------------------------------------------------


def phantom_spec_from_json(text: str) -> PhantomSpec:
    doc = json.loads(text)
    regions = []
    for i, r in enumerate(doc.get("regions", [])):
        kind = r.get("shape")
        if kind == "rectangle":
            shape = Rectangle(r["x0"], r["y0"], r["width"], r["height"])
        elif kind == "disk":
            shape = Disk(r["cx"], r["cy"], r["radius"])
        else:
            raise ValueError(f"region {i}: unknown shape {kind!r}")
        model = DecayModel(tuple((c[0], c[1]) for c in r["components"]))
        regions.append(Region(shape, model, float(r["mean_photons"])))
    return PhantomSpec(
        width=int(doc["width"]),
        height=int(doc["height"]),
        regions=tuple(regions),
        background_photons=float(doc.get("background_photons", 0.0)),
    )


def phantom_spec_to_json(spec: PhantomSpec) -> str:
    regions = []
    for region in spec.regions:
        shape = region.shape
        if isinstance(shape, Rectangle):
            geo = {"shape": "rectangle", "x0": shape.x0, "y0": shape.y0,
                   "width": shape.width, "height": shape.height}
        else:
            geo = {"shape": "disk", "cx": shape.cx, "cy": shape.cy,
                   "radius": shape.radius}
        geo["components"] = [[a, t] for a, t in region.model.components]
        geo["mean_photons"] = region.mean_photons
        regions.append(geo)
    return json.dumps(
        {
            "width": spec.width,
            "height": spec.height,
            "background_photons": spec.background_photons,
            "regions": regions,
        },
        indent=2,
        sort_keys=True,
    )


# --- grid JSON (shared by CLI and service) -----------------------------------


def grid_to_json(grid: TimeGrid) -> dict:
    return {
        "n_bins": grid.n_bins,
        "bin_width_ns": grid.bin_width,
        "origin_ns": grid.origin,
    }


def grid_from_json(doc: dict) -> TimeGrid:
    return TimeGrid(
        int(doc["n_bins"]), float(doc["bin_width_ns"]),
        float(doc.get("origin_ns", 0.0)),
    )


# --- run manifest ------------------------------------------------------------


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Record of one CLI run: command, parameters, seeds, digests, timings."""

    command: str
    parameters: dict
    seeds: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path) -> None:
        doc = {
            "command": self.command,
            "parameters": self.parameters,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings": self.timings,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        _atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())

    def verify_outputs(self) -> bool:
        return all(sha256_file(p) == d for p, d in self.outputs.items())


def manifest_path_for(output_path) -> Path:
    output_path = Path(output_path)
    return output_path.with_name(output_path.name + ".manifest.json")

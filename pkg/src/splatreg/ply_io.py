"""Gaussian-splat PLY ingestion and writing.

Reads the de-facto trained-splat vertex layout (x/y/z, pre-activation
``opacity``, ``scale_*`` log-scales, ``rot_*`` quaternion, ``f_dc_*``/
``f_rest_*`` SH coefficients) in ASCII or binary-little-endian form. Stored
opacities pass through a logistic by default since splat trainers persist the
pre-activation value; files that already hold [0, 1] opacities can disable the
conversion, and this package's own writer uses an ``opacity_activated``
property (double precision) so a load/save/load round trip is bit-exact.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .errors import PlyDataError, PlyParseError, PlySchemaError
from .gaussian_model import GaussianCloud

_PLY_TYPES = {
    "char": "<i1", "int8": "<i1",
    "uchar": "<u1", "uint8": "<u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}

_QUAT_SKIP_NORMALIZE_TOL = 1e-9


class _Element:
    def __init__(self, name: str, count: int):
        self.name = name
        self.count = count
        self.properties: list[tuple[str, str]] = []   # (name, numpy dtype)
        self.has_list = False


def _parse_header(data: bytes):
    """Header elements plus the byte offset where body data starts."""
    offset = 0
    lines: list[tuple[int, str]] = []
    end = None
    while offset < len(data):
        nl = data.find(b"\n", offset)
        if nl == -1:
            raise PlyParseError("header not terminated by end_header", byte_offset=len(data))
        raw = data[offset:nl]
        try:
            text = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyParseError("non-ASCII bytes in header", byte_offset=offset) from None
        lines.append((offset, text))
        if text == "end_header":
            end = nl + 1
            break
        offset = nl + 1
    if end is None:
        raise PlyParseError("header not terminated by end_header", byte_offset=len(data))

    if not lines or lines[0][1] != "ply":
        raise PlyParseError("file does not start with 'ply'", byte_offset=0)

    fmt = None
    elements: list[_Element] = []
    for off, text in lines[1:]:
        if text == "end_header" or not text:
            continue
        parts = text.split()
        keyword = parts[0]
        if keyword in ("comment", "obj_info"):
            continue
        if keyword == "format":
            if len(parts) != 3 or parts[2] != "1.0":
                raise PlyParseError(f"bad format line {text!r}", byte_offset=off)
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyParseError(f"unsupported format {parts[1]!r}", byte_offset=off)
            fmt = parts[1]
        elif keyword == "element":
            if len(parts) != 3 or not re.fullmatch(r"\d+", parts[2]):
                raise PlyParseError(f"bad element line {text!r}", byte_offset=off)
            elements.append(_Element(parts[1], int(parts[2])))
        elif keyword == "property":
            if not elements:
                raise PlyParseError("property declared before any element", byte_offset=off)
            if len(parts) >= 2 and parts[1] == "list":
                if len(parts) != 5:
                    raise PlyParseError(f"bad list property line {text!r}", byte_offset=off)
                elements[-1].has_list = True
                elements[-1].properties.append((parts[4], "list"))
            else:
                if len(parts) != 3 or parts[1] not in _PLY_TYPES:
                    raise PlyParseError(f"bad property line {text!r}", byte_offset=off)
                elements[-1].properties.append((parts[2], _PLY_TYPES[parts[1]]))
        else:
            raise PlyParseError(f"unknown header keyword {keyword!r}", byte_offset=off)
    if fmt is None:
        raise PlyParseError("header missing format line", byte_offset=0)
    return fmt, elements, end


def _skip_ascii_rows(data: bytes, offset: int, count: int) -> int:
    for _ in range(count):
        nl = data.find(b"\n", offset)
        if nl == -1:
            raise PlyParseError("unexpected end of ASCII data", byte_offset=len(data))
        offset = nl + 1
    return offset


def _read_vertex_ascii(data: bytes, offset: int, element: _Element) -> np.ndarray:
    dtype = np.dtype([(n, t) for n, t in element.properties])
    out = np.empty(element.count, dtype=dtype)
    for row in range(element.count):
        nl = data.find(b"\n", offset)
        line = data[offset:nl] if nl != -1 else data[offset:]
        if not line and nl == -1:
            raise PlyParseError(f"expected {element.count} vertex rows, file ended at row {row}",
                                byte_offset=len(data))
        tokens = line.split()
        if len(tokens) != len(element.properties):
            raise PlyParseError(
                f"vertex row {row} has {len(tokens)} values, expected {len(element.properties)}",
                byte_offset=offset)
        for (name, _), tok in zip(element.properties, tokens):
            try:
                out[name][row] = float(tok)
            except ValueError:
                raise PlyParseError(f"bad numeric token {tok!r} in vertex row {row}",
                                    byte_offset=offset) from None
        offset = nl + 1 if nl != -1 else len(data)
    return out


def _read_vertex_binary(data: bytes, offset: int, element: _Element) -> np.ndarray:
    dtype = np.dtype([(n, t) for n, t in element.properties])
    need = dtype.itemsize * element.count
    if len(data) - offset < need:
        raise PlyParseError(
            f"vertex data truncated: need {need} bytes, have {len(data) - offset}",
            byte_offset=len(data))
    return np.frombuffer(data, dtype=dtype, count=element.count, offset=offset)


def _column(rows: np.ndarray, name: str) -> np.ndarray:
    return np.asarray(rows[name], dtype=np.float64)


def _numbered(names: list[str], prefix: str) -> list[str]:
    found = [(int(m.group(1)), n) for n in names
             if (m := re.fullmatch(re.escape(prefix) + r"(\d+)", n))]
    return [n for _, n in sorted(found)]


def load_ply_gaussians(path, opacity_raw: bool = False) -> GaussianCloud:
    """Parse a splat PLY file into a cloud.

    ``opacity_raw`` treats a stored ``opacity`` property as already activated
    (in [0, 1]) instead of applying the logistic.
    """
    data = Path(path).read_bytes()
    fmt, elements, offset = _parse_header(data)

    vertex = None
    for element in elements:
        if element.name == "vertex":
            vertex = element
            break
        if fmt == "ascii":
            offset = _skip_ascii_rows(data, offset, element.count)
        else:
            if element.has_list:
                raise PlyParseError(
                    f"cannot skip binary element {element.name!r} with list properties",
                    byte_offset=offset)
            offset += np.dtype([(n, t) for n, t in element.properties]).itemsize * element.count
    if vertex is None:
        raise PlySchemaError("no vertex element in file")
    if vertex.has_list:
        raise PlyParseError("list properties are not supported on the vertex element",
                            byte_offset=offset)

    rows = (_read_vertex_ascii if fmt == "ascii" else _read_vertex_binary)(data, offset, vertex)
    names = [n for n, _ in vertex.properties]
    for required in ("x", "y", "z"):
        if required not in names:
            raise PlySchemaError(f"vertex element lacks required property {required!r}")

    positions = np.column_stack([_column(rows, "x"), _column(rows, "y"), _column(rows, "z")])
    bad = np.flatnonzero(~np.isfinite(positions).all(axis=1))
    if bad.size:
        shown = ", ".join(map(str, bad[:10]))
        raise PlyDataError(f"non-finite positions at indices [{shown}]"
                           + ("..." if bad.size > 10 else ""), indices=bad)

    if "opacity_activated" in names:
        opacities = _column(rows, "opacity_activated")
        _check_unit_interval(opacities, "opacity_activated")
    elif "opacity" in names:
        stored = _column(rows, "opacity")
        if opacity_raw:
            _check_unit_interval(stored, "opacity")
            opacities = np.clip(stored, 0.0, 1.0)
        else:
            opacities = expit(stored)
    else:
        opacities = np.ones(len(rows))

    scales = _optional_block(rows, names, "scale_", 3)
    rotations = _optional_block(rows, names, "rot_", 4)
    if rotations is not None:
        norms = np.linalg.norm(rotations, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise PlyDataError(f"zero-norm quaternions at indices {zero[:10].tolist()}",
                               indices=zero)
        if np.max(np.abs(norms - 1.0)) > _QUAT_SKIP_NORMALIZE_TOL:
            rotations = rotations / norms[:, None]

    sh_names = _numbered(names, "f_dc_") + _numbered(names, "f_rest_")
    sh = np.column_stack([_column(rows, n) for n in sh_names]) if sh_names else None

    return GaussianCloud(positions=positions, opacities=np.clip(opacities, 0.0, 1.0),
                         scales=scales, rotations=rotations, sh_coeffs=sh)


def _check_unit_interval(values: np.ndarray, name: str) -> None:
    bad = np.flatnonzero(~((values >= -1e-9) & (values <= 1.0 + 1e-9)))
    if bad.size:
        raise PlyDataError(f"{name} values outside [0, 1] at indices {bad[:10].tolist()}",
                           indices=bad)


def _optional_block(rows, names: list[str], prefix: str, width: int) -> np.ndarray | None:
    cols = [f"{prefix}{i}" for i in range(width)]
    present = [c for c in cols if c in names]
    if not present:
        return None
    if len(present) != width:
        raise PlySchemaError(f"partial {prefix}* block: found {present}, need {cols}")
    return np.column_stack([_column(rows, c) for c in cols])


def save_ply_gaussians(path, cloud: GaussianCloud, ascii_format: bool = False,
                       splat_convention: bool = False) -> None:
    """Write a cloud to PLY.

    Default layout stores doubles with an ``opacity_activated`` property, which
    round-trips exactly through :func:`load_ply_gaussians`. ``splat_convention``
    instead mimics trainer output: float32 properties and a pre-activation
    ``opacity`` (values clipped away from {0, 1} so the logit stays finite).
    """
    columns: list[tuple[str, np.ndarray]] = [
        ("x", cloud.positions[:, 0]),
        ("y", cloud.positions[:, 1]),
        ("z", cloud.positions[:, 2]),
    ]
    if splat_convention:
        safe = np.clip(cloud.opacities, 1e-7, 1.0 - 1e-7)
        columns.append(("opacity", logit(safe)))
    else:
        columns.append(("opacity_activated", cloud.opacities))
    if cloud.scales is not None:
        columns += [(f"scale_{i}", cloud.scales[:, i]) for i in range(3)]
    if cloud.rotations is not None:
        columns += [(f"rot_{i}", cloud.rotations[:, i]) for i in range(4)]
    if cloud.sh_coeffs is not None:
        k = cloud.sh_coeffs.shape[1]
        dc = min(k, 3)
        columns += [(f"f_dc_{i}", cloud.sh_coeffs[:, i]) for i in range(dc)]
        columns += [(f"f_rest_{i}", cloud.sh_coeffs[:, dc + i]) for i in range(k - dc)]

    np_type = "<f4" if splat_convention else "<f8"
    ply_type = "float" if splat_convention else "double"
    table = np.zeros(cloud.count, dtype=[(name, np_type) for name, _ in columns])
    for name, values in columns:
        table[name] = values

    header = ["ply",
              f"format {'ascii' if ascii_format else 'binary_little_endian'} 1.0",
              f"element vertex {cloud.count}"]
    header += [f"property {ply_type} {name}" for name, _ in columns]
    header.append("end_header")

    path = Path(path)
    with path.open("wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if ascii_format:
            digits = 9 if splat_convention else 17
            for row in table:
                fh.write((" ".join(f"{float(v):.{digits}g}" for v in row) + "\n").encode("ascii"))
        else:
            fh.write(table.tobytes())

"""Point-cloud file readers: PLY (ascii / binary little-endian) and XYZ text.

Only vertex x, y, z are consumed; any extra vertex properties (color,
normals, intensity) are parsed past and dropped.
"""

from __future__ import annotations

import numpy as np

from .grids import PointCloud

_PLY_SIZES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class PlyFormatError(ValueError):
    pass


def _parse_ply_header(fh):
    """Read the header; returns (format, elements) with elements in file order.

    Each element is (name, count, properties) and a property is either
    ("scalar", name, type) or ("list", name, count_type, item_type).
    """
    magic = fh.readline().strip()
    if magic != b"ply":
        raise PlyFormatError("not a PLY file")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise PlyFormatError("unterminated PLY header")
        tokens = line.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] == "comment" or tokens[0] == "obj_info":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise PlyFormatError("property before element in PLY header")
            if tokens[1] == "list":
                elements[-1][2].append(("list", tokens[4], tokens[2], tokens[3]))
            else:
                elements[-1][2].append(("scalar", tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt is None:
        raise PlyFormatError("PLY header missing format line")
    return fmt, elements


def _vertex_dtype(properties):
    fields = []
    for prop in properties:
        if prop[0] == "list":
            raise PlyFormatError("list property on vertex element is not supported")
        kind, name, typ = prop
        if typ not in _PLY_SIZES:
            raise PlyFormatError(f"unsupported PLY property type {typ!r}")
        fields.append((name, "<" + _PLY_SIZES[typ]))
    return np.dtype(fields)


def _read_ply(path) -> np.ndarray:
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        vertex = next((e for e in elements if e[0] == "vertex"), None)
        if vertex is None:
            raise PlyFormatError("PLY file has no vertex element")
        _, count, properties = vertex
        names = [p[1] for p in properties]
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise PlyFormatError(f"vertex element missing property {axis!r}")

        if fmt == "ascii":
            rows = np.zeros((count, 3), dtype=np.float64)
            cols = [names.index(a) for a in ("x", "y", "z")]
            got = 0
            while got < count:
                line = fh.readline()
                if not line:
                    raise PlyFormatError("truncated PLY vertex data")
                tokens = line.split()
                if not tokens:
                    continue
                rows[got] = [float(tokens[c]) for c in cols]
                got += 1
            return rows
        if fmt == "binary_little_endian":
            if elements[0][0] != "vertex":
                raise PlyFormatError("binary PLY with vertex not first is not supported")
            dtype = _vertex_dtype(properties)
            raw = fh.read(dtype.itemsize * count)
            if len(raw) < dtype.itemsize * count:
                raise PlyFormatError("truncated PLY vertex data")
            table = np.frombuffer(raw, dtype=dtype, count=count)
            return np.stack(
                [table["x"], table["y"], table["z"]], axis=1
            ).astype(np.float64)
        raise PlyFormatError(f"unsupported PLY format {fmt!r}")


def _read_xyz(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if len(tokens) < 3:
                raise ValueError(f"{path}:{lineno}: expected at least 3 columns")
            rows.append((float(tokens[0]), float(tokens[1]), float(tokens[2])))
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def read_point_cloud(path) -> PointCloud:
    """Load a cloud from .ply (ascii or binary LE) or whitespace-delimited text."""
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.read(3)
    if magic == b"ply":
        return PointCloud(_read_ply(path))
    return PointCloud(_read_xyz(path))


def write_ply(cloud: PointCloud, path, binary: bool = False) -> None:
    pts = cloud.points
    header = (
        "ply\n"
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(pts.astype("<f4").tobytes())
        else:
            for x, y, z in pts.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n".encode("ascii"))


def write_xyz(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in cloud.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")

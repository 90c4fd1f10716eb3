"""Point-cloud ingestion (OBJ / PLY vertices), synthetic clouds and the
benchmark scene families (decimation, translation, different objects)."""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DegenerateInputError, ParseError, aabb_of, as_points

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered, immutable vertex set. A point's id is its row index."""

    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = as_points(self.points)
        if len(arr) == 0:
            raise DegenerateInputError(f"point cloud {self.label!r} is empty")
        if not np.isfinite(arr).all():
            raise DegenerateInputError(f"point cloud {self.label!r} has non-finite coordinates")
        if arr is self.points or np.shares_memory(arr, self.points):
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "points", arr)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"PointCloud(n={len(self)}, label={self.label!r})"


# --------------------------------------------------------------------- OBJ

def _load_obj(path: Path) -> np.ndarray:
    coords = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.startswith("v ") and not line.startswith("v\t"):
                continue
            parts = line.split()
            if len(parts) < 4:
                raise ParseError(f"{path}:{lineno}: vertex record needs 3 coordinates: {line.strip()!r}")
            try:
                coords.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad vertex coordinate in {line.strip()!r}") from None
    return np.array(coords, dtype=np.float64).reshape(-1, 3)


# --------------------------------------------------------------------- PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass
class _PlyElement:
    name: str
    count: int
    line: int
    # (name, dtype) for scalars, (name, count dtype, item dtype) for lists
    props: list = field(default_factory=list)

    @property
    def has_lists(self) -> bool:
        return any(len(p) == 3 for p in self.props)


def _parse_ply_header(fh, path):
    """Returns (format, elements, header byte length, header line count)."""
    first = fh.readline()
    if first.strip() != b"ply":
        raise ParseError(f"{path}:1: missing 'ply' magic")
    fmt = None
    elements: list[_PlyElement] = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError(f"{path}:{lineno}: truncated header (no end_header)")
        toks = raw.decode("ascii", errors="replace").split()
        if not toks:
            continue
        key = toks[0]
        if key == "end_header":
            return fmt, elements, fh.tell(), lineno
        if key in ("comment", "obj_info"):
            continue
        if key == "format":
            if len(toks) < 2:
                raise ParseError(f"{path}:{lineno}: malformed format line")
            fmt = toks[1]
        elif key == "element":
            if len(toks) != 3 or not re.fullmatch(r"\d+", toks[2]):
                raise ParseError(f"{path}:{lineno}: malformed element line {' '.join(toks)!r}")
            elements.append(_PlyElement(toks[1], int(toks[2]), lineno))
        elif key == "property":
            if not elements:
                raise ParseError(f"{path}:{lineno}: property before any element")
            if len(toks) == 3 and toks[1] in _PLY_TYPES:
                elements[-1].props.append((toks[2], _PLY_TYPES[toks[1]]))
            elif len(toks) == 5 and toks[1] == "list" and toks[2] in _PLY_TYPES and toks[3] in _PLY_TYPES:
                elements[-1].props.append((toks[4], _PLY_TYPES[toks[2]], _PLY_TYPES[toks[3]]))
            else:
                raise ParseError(f"{path}:{lineno}: malformed property line {' '.join(toks)!r}")
        else:
            raise ParseError(f"{path}:{lineno}: unknown header keyword {key!r}")


def _vertex_columns(el: _PlyElement, path) -> list[int]:
    names = [p[0] for p in el.props]
    cols = []
    for axis in "xyz":
        if axis not in names:
            raise ParseError(f"{path}:{el.line}: vertex element lacks property {axis!r}")
        prop = el.props[names.index(axis)]
        if len(prop) != 2 or prop[1] not in ("f4", "f8"):
            raise ParseError(f"{path}:{el.line}: vertex property {axis!r} must be float or double")
        cols.append(names.index(axis))
    return cols


def _load_ply_ascii(fh, path, elements, header_lines) -> np.ndarray:
    lineno = header_lines
    vertex = None
    for el in elements:
        if el.name == "vertex":
            vertex = el
            break
        for _ in range(el.count):
            if not fh.readline():
                raise ParseError(f"{path}:{lineno + 1}: unexpected end of file in element {el.name!r}")
            lineno += 1
    if vertex is None:
        raise DegenerateInputError(f"{path}: no vertex element")
    cols = _vertex_columns(vertex, path)
    out = np.empty((vertex.count, 3), dtype=np.float64)
    nscalar = len(vertex.props)
    for i in range(vertex.count):
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError(
                f"{path}:{lineno}: unexpected end of file after {i} of {vertex.count} declared vertices")
        toks = raw.split()
        if vertex.has_lists:
            toks = _flatten_ascii_lists(toks, vertex, path, lineno)
        if len(toks) < nscalar:
            raise ParseError(f"{path}:{lineno}: vertex row has {len(toks)} values, expected {nscalar}")
        try:
            out[i] = [float(toks[c]) for c in cols]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad vertex value in {raw.strip()!r}") from None
    return out


def _flatten_ascii_lists(toks, el, path, lineno):
    # replace each list property by a single placeholder so column indices line up
    flat, pos = [], 0
    try:
        for prop in el.props:
            if len(prop) == 2:
                flat.append(toks[pos])
                pos += 1
            else:
                n = int(toks[pos])
                flat.append(b"0")
                pos += 1 + n
    except (IndexError, ValueError):
        raise ParseError(f"{path}:{lineno}: malformed list property row") from None
    return flat


def _skip_binary_element(buf, offset, el, path) -> int:
    if not el.has_lists:
        size = el.count * sum(np.dtype(p[1]).itemsize for p in el.props)
        if offset + size > len(buf):
            raise ParseError(f"{path}: byte offset {offset}: truncated element {el.name!r}")
        return offset + size
    for _ in range(el.count):
        offset = _skip_binary_row(buf, offset, el, path)
    return offset


def _skip_binary_row(buf, offset, el, path) -> int:
    for prop in el.props:
        if len(prop) == 2:
            offset += np.dtype(prop[1]).itemsize
        else:
            ct = np.dtype("<" + prop[1])
            if offset + ct.itemsize > len(buf):
                raise ParseError(f"{path}: byte offset {offset}: truncated list in {el.name!r}")
            n = int(np.frombuffer(buf, ct, 1, offset)[0])
            offset += ct.itemsize + n * np.dtype(prop[2]).itemsize
    if offset > len(buf):
        raise ParseError(f"{path}: byte offset {offset}: truncated element {el.name!r}")
    return offset


def _load_ply_binary(buf: bytes, path, elements, offset) -> np.ndarray:
    vertex = None
    for el in elements:
        if el.name == "vertex":
            vertex = el
            break
        offset = _skip_binary_element(buf, offset, el, path)
    if vertex is None:
        raise DegenerateInputError(f"{path}: no vertex element")
    cols = _vertex_columns(vertex, path)
    if not vertex.has_lists:
        dtype = np.dtype([(f"p{i}", "<" + p[1]) for i, p in enumerate(vertex.props)])
        need = offset + vertex.count * dtype.itemsize
        if need > len(buf):
            got = (len(buf) - offset) // dtype.itemsize
            raise ParseError(
                f"{path}: byte offset {len(buf)}: data ends after {got} of {vertex.count} declared vertices")
        rows = np.frombuffer(buf, dtype, vertex.count, offset)
        return np.column_stack([rows[f"p{c}"].astype(np.float64) for c in cols])
    # slow path: list properties inside the vertex element
    out = np.empty((vertex.count, 3), dtype=np.float64)
    for i in range(vertex.count):
        vals = {}
        for j, prop in enumerate(vertex.props):
            if len(prop) == 3:
                offset = _skip_binary_row(buf, offset, _PlyElement("vertex", 1, vertex.line, [prop]), path)
                continue
            dt = np.dtype("<" + prop[1])
            if offset + dt.itemsize > len(buf):
                raise ParseError(
                    f"{path}: byte offset {offset}: data ends inside vertex {i} of {vertex.count}")
            vals[j] = float(np.frombuffer(buf, dt, 1, offset)[0])
            offset += dt.itemsize
        out[i] = [vals[c] for c in cols]
    return out


def _load_ply(path: Path, declared: str | None) -> np.ndarray:
    with open(path, "rb") as fh:
        fmt, elements, header_end, header_lines = _parse_ply_header(fh, path)
        if fmt == "binary_big_endian":
            raise ParseError(f"{path}: big-endian binary PLY is not supported")
        if fmt not in ("ascii", "binary_little_endian"):
            raise ParseError(f"{path}: unknown or missing PLY format {fmt!r}")
        if declared == "ply-ascii" and fmt != "ascii":
            raise ParseError(f"{path}: declared ply-ascii but header says {fmt}")
        if declared == "ply-binary-little-endian" and fmt != "binary_little_endian":
            raise ParseError(f"{path}: declared binary PLY but header says {fmt}")
        if fmt == "ascii":
            return _load_ply_ascii(fh, path, elements, header_lines)
        fh.seek(0)
        buf = fh.read()
    return _load_ply_binary(buf, path, elements, header_end)


def detect_format(path) -> str:
    ext = Path(path).suffix.lower()
    if ext == ".obj":
        return "obj"
    if ext == ".ply":
        return "ply"
    raise ParseError(f"{path}: cannot infer format from extension {ext!r}")


def load_cloud(path, format: str | None = None) -> PointCloud:
    """Read the vertex set of an OBJ or PLY file; faces and attributes are skipped.

    ``format`` is one of ``obj``, ``ply`` (ASCII or binary little-endian,
    taken from the header), ``ply-ascii`` or ``ply-binary-little-endian``;
    ``None`` infers it from the extension.
    """
    path = Path(path)
    fmt = format or detect_format(path)
    if fmt == "obj":
        pts = _load_obj(path)
    elif fmt in ("ply", "ply-ascii", "ply-binary-little-endian"):
        pts = _load_ply(path, None if fmt == "ply" else fmt)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if len(pts) == 0:
        raise DegenerateInputError(f"{path}: file contains no vertices")
    return PointCloud(pts, label=str(path))


def write_ply_ascii(cloud: PointCloud, path) -> None:
    # repr() of a Python float round-trips exactly
    rows = "\n".join(f"{x!r} {y!r} {z!r}" for x, y, z in cloud.points.tolist())
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        fh.write(rows)
        fh.write("\n")


def write_ply_binary(cloud: PointCloud, path, dtype: str = "f4") -> None:
    name = {"f4": "float", "f8": "double"}[dtype]
    with open(path, "wb") as fh:
        fh.write(b"ply\nformat binary_little_endian 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n".encode())
        for a in "xyz":
            fh.write(f"property {name} {a}\n".encode())
        fh.write(b"end_header\n")
        fh.write(cloud.points.astype("<" + dtype).tobytes())


def write_obj(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in cloud.points.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")


# ------------------------------------------------------------- transforms

def translate_cloud(c: PointCloud, axis: str, ratio: float) -> PointCloud:
    """Shift every point along ``axis`` by ``ratio`` times the cloud's extent on that axis."""
    if not math.isfinite(ratio):
        raise ValueError("ratio must be finite")
    ax = AXES[axis]
    box = aabb_of(c.points)
    shift = ratio * box.extent[ax]
    pts = c.points.copy()
    pts[:, ax] += shift
    return PointCloud(pts, label=f"{c.label}+{axis}{ratio:g}")


def subsample_cloud(c: PointCloud, target_count: int, seed: int) -> PointCloud:
    """Seeded draw of ``target_count`` points without replacement; original order is kept."""
    if not 1 <= target_count <= len(c):
        raise ValueError(f"target_count must lie in [1, {len(c)}], got {target_count}")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(c), size=target_count, replace=False))
    return PointCloud(c.points[keep], label=f"{c.label}~{target_count}")


# ------------------------------------------------------------- synthetic

SYNTH_KINDS = ("blob", "sphere", "torus", "box", "gaussian", "plane")


def _unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def synthetic_cloud(kind: str, n: int, seed: int = 0, scale: float = 1.0) -> PointCloud:
    """Small generators standing in for scanned models.

    ``blob``, ``sphere`` and ``torus`` sample closed surfaces (scan-like);
    ``box`` is uniform in a cube, ``gaussian`` a mixture of clusters and
    ``plane`` lies in z = 0.
    """
    rng = np.random.default_rng(seed)
    if kind == "sphere":
        pts = _unit_vectors(rng, n)
    elif kind == "blob":
        u = _unit_vectors(rng, n)
        # low-frequency bumps keep the surface star-shaped
        r = (1.0 + 0.25 * np.sin(3 * u[:, 0] + 1.0) * np.cos(2 * u[:, 1])
             + 0.15 * np.sin(5 * u[:, 2] + 2.0 * u[:, 0]))
        pts = u * r[:, None] * np.array([1.0, 0.8, 1.3])
    elif kind == "torus":
        a, b = rng.uniform(0, 2 * np.pi, size=(2, n))
        R, r = 1.0, 0.35
        pts = np.column_stack([(R + r * np.cos(b)) * np.cos(a), (R + r * np.cos(b)) * np.sin(a), r * np.sin(b)])
    elif kind == "box":
        pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    elif kind == "gaussian":
        k = int(rng.integers(2, 6))
        centers = rng.uniform(-1.0, 1.0, size=(k, 3))
        which = rng.integers(0, k, size=n)
        pts = centers[which] + rng.normal(scale=0.08, size=(n, 3))
    elif kind == "plane":
        pts = np.column_stack([rng.uniform(-1, 1, size=(n, 2)), np.zeros(n)])
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    return PointCloud(pts * scale, label=f"synth:{kind}:{n}:{seed}")


def load_source(src: str, format: str | None = None) -> PointCloud:
    """A file path, or ``synth:KIND:N[:SEED]`` for a generated cloud."""
    if src.startswith("synth:"):
        parts = src.split(":")
        if len(parts) not in (3, 4):
            raise ValueError(f"bad synthetic source {src!r}; expected synth:KIND:N[:SEED]")
        seed = int(parts[3]) if len(parts) == 4 else 0
        return synthetic_cloud(parts[1], int(parts[2]), seed)
    if not os.path.exists(src):
        raise FileNotFoundError(f"no such file: {src}")
    return load_cloud(src, format)


# ------------------------------------------------------------- scenes

SCENE_KINDS = ("decimation", "translation", "different-objects", "raw-pair")


@dataclass(frozen=True)
class SceneSpec:
    """One benchmark case.

    decimation        : ``sources[0]`` original; ``sources[1]`` a decimated file
                        or, when absent, a ``target_count`` subsample stand-in
    translation       : ``sources[0]`` against its copy shifted along ``axis``
    different-objects : two distinct models
    raw-pair          : any two clouds
    """

    kind: str
    sources: tuple[str, ...]
    axis: str = "x"
    ratio: float = 0.5
    target_count: int | None = None
    seed: int = 0
    format: str | None = None

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"translation ratio must lie in [0, 1], got {self.ratio}")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of x, y, z, got {self.axis!r}")
        need = {"translation": (1, 1), "decimation": (1, 2), "different-objects": (2, 2), "raw-pair": (2, 2)}
        lo, hi = need[self.kind]
        if not lo <= len(self.sources) <= hi:
            raise ValueError(f"{self.kind} scene takes {lo}..{hi} sources, got {len(self.sources)}")
        if self.kind == "decimation" and len(self.sources) == 1 and not self.target_count:
            raise ValueError("decimation scene needs a decimated file or a target_count")


@dataclass(frozen=True)
class Scene:
    a: PointCloud
    b: PointCloud
    label: str
    note: str = ""


def build_scene(spec: SceneSpec) -> Scene:
    first = load_source(spec.sources[0], spec.format)
    if spec.kind == "translation":
        b = translate_cloud(first, spec.axis, spec.ratio)
        return Scene(first, b, f"translation[{first.label},{spec.axis},{spec.ratio:g}]")
    if spec.kind == "decimation":
        if len(spec.sources) == 2:
            dec = load_source(spec.sources[1], spec.format)
            note = "decimated file"
        else:
            dec = subsample_cloud(first, spec.target_count, spec.seed)
            note = "subsample stand-in"
        return Scene(first, dec, f"decimation[{first.label},{len(dec)}]", note)
    second = load_source(spec.sources[1], spec.format)
    return Scene(first, second, f"{spec.kind}[{first.label},{second.label}]")

"""Regenerate the small mesh corpus under tests/data.

The files deliberately exercise the parser's skip paths: faces, per-vertex
attributes, list properties, an element before ``vertex``, comments, OBJ
records other than ``v``, and awkward float spellings.
"""
import argparse
import struct
from pathlib import Path

import numpy as np


def tetra_ascii(path):
    pts = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    faces = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\ncomment unit tetrahedron\n")
        fh.write(f"element vertex {len(pts)}\nproperty float x\nproperty float y\nproperty float z\n")
        fh.write(f"element face {len(faces)}\nproperty list uchar int vertex_indices\nend_header\n")
        for p in pts:
            fh.write("%g %g %g\n" % p)
        for f in faces:
            fh.write("3 %d %d %d\n" % f)


def scan_ascii(path, rng):
    # range-scanner layout: confidence and intensity after the coordinates
    n = 300
    u = rng.normal(size=(n, 3))
    pts = (u / np.linalg.norm(u, axis=1, keepdims=True) * 0.05).astype(np.float32)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\ncomment generated scan-like patch\n")
        fh.write(f"element vertex {n}\nproperty float x\nproperty float y\nproperty float z\n")
        fh.write("property float confidence\nproperty float intensity\n")
        fh.write("element face 2\nproperty list uchar int vertex_indices\nend_header\n")
        for p in pts:
            # str() of a float32 is its shortest round-tripping spelling
            fh.write(" ".join(map(str, p)) + f" {rng.random():.4f} 0.5\n")
        fh.write("3 0 1 2\n3 2 1 3\n")


def binary_attrs(path, rng):
    n = 257
    xyz = rng.uniform(-1e3, 1e3, size=(n, 3))
    xyz[0] = (-0.0, 5e-324, 1.7976931348623157e308)
    xyz[1] = (0.1, 1 / 3, -2.5e-17)
    nrm = rng.normal(size=(n, 3)).astype("<f4")
    rgb = rng.integers(0, 256, size=(n, 3)).astype(np.uint8)
    rec = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4"),
                    ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    arr = np.empty(n, rec)
    for i, a in enumerate("xyz"):
        arr[a] = xyz[:, i]
        arr["n" + a] = nrm[:, i]
    for i, c in enumerate(("red", "green", "blue")):
        arr[c] = rgb[:, i]
    with open(path, "wb") as fh:
        hdr = (f"ply\nformat binary_little_endian 1.0\nelement vertex {n}\n"
               "property double x\nproperty double y\nproperty double z\n"
               "property float nx\nproperty float ny\nproperty float nz\n"
               "property uchar red\nproperty uchar green\nproperty uchar blue\n"
               "element face 1\nproperty list uchar int vertex_indices\nend_header\n")
        fh.write(hdr.encode())
        fh.write(arr.tobytes())
        fh.write(struct.pack("<Biii", 3, 0, 1, 2))


def cube_obj(path):
    with open(path, "w") as fh:
        fh.write("# cube with texture coordinates and normals\nmtllib cube.mtl\no cube\n")
        for x in (0, 1):
            for y in (0, 1):
                for z in (0, 1):
                    fh.write(f"v {x}.000000 {y}.0 {z}e0\n")
        fh.write("vt 0 0\nvt 1 0\nvt 1 1\nvn 0 0 1\ng side\nusemtl red\ns off\n")
        fh.write("f 1/1/1 2/2/1 4/3/1\nf 5//1 6//1 8//1\nl 1 2\n")
        fh.write("v 0.5 0.5 0.5 1.0\n")  # optional w component


def camera_first(path, rng):
    n = 40
    pts = rng.normal(size=(n, 3)) * 1e-4 + 7.0
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\nobj_info made by hand\n")
        fh.write("element camera 1\nproperty float view_px\nproperty float view_py\nproperty float view_pz\n")
        fh.write(f"element vertex {n}\nproperty double z\nproperty double y\nproperty double x\n")
        fh.write("property list uchar float tags\nend_header\n")
        fh.write("0 0 -10\n")
        for i, (x, y, z) in enumerate(pts.tolist()):
            tags = " ".join(str(t) for t in range(i % 3))
            fh.write(f"{z!r} {y!r} {x!r} {i % 3} {tags}\n".replace("  ", " "))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "data"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240611)
    tetra_ascii(out / "tetra.ply")
    scan_ascii(out / "scan_patch.ply", rng)
    binary_attrs(out / "attrs_binary.ply", rng)
    cube_obj(out / "cube.obj")
    camera_first(out / "camera_first.ply", rng)
    print("wrote corpus to", out)


if __name__ == "__main__":
    main()

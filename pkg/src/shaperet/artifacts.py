"""On-disk formats for cached pipeline artifacts."""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .descriptors import DescriptorField, DescriptorKind
from .mesh import TriMesh, VertexGeometry

FIELD_MAGIC = b"SRDESC\x00\x00"
FIELD_VERSION = 1
HASH_LEN = 16


def content_hash(*parts) -> str:
    """16 hex digits of a SHA-256 over the JSON encoding of ``parts``."""
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode())
        h.update(b"\x00")
    return h.hexdigest()[:HASH_LEN]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_atomic(path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _npz_bytes(**arrays) -> bytes:
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def field_to_bytes(field: DescriptorField) -> bytes:
    mid = field.mesh_id.encode()
    kind = field.kind.value.encode()
    v, dim = field.vectors.shape
    head = struct.pack("<8sIH", FIELD_MAGIC, FIELD_VERSION, len(mid)) + mid
    head += struct.pack("<H", len(kind)) + kind + struct.pack("<II", v, dim)
    return head + np.ascontiguousarray(field.vectors, "<f8").tobytes()


def field_from_bytes(data: bytes) -> DescriptorField:
    magic, version, n = struct.unpack_from("<8sIH", data, 0)
    if magic != FIELD_MAGIC or version != FIELD_VERSION:
        raise ValueError("not a descriptor field file (bad magic or version)")
    off = struct.calcsize("<8sIH")
    mid = data[off:off + n].decode()
    off += n
    (k,) = struct.unpack_from("<H", data, off)
    off += 2
    kind = DescriptorKind(data[off:off + k].decode())
    off += k
    v, dim = struct.unpack_from("<II", data, off)
    off += 8
    if len(data) - off != 8 * v * dim:
        raise ValueError("truncated descriptor field file")
    vectors = np.frombuffer(data, "<f8", v * dim, off).reshape(v, dim).astype(float)
    return DescriptorField(mid, kind, vectors)


def save_field(field: DescriptorField, path) -> None:
    write_atomic(path, field_to_bytes(field))


def load_field(path) -> DescriptorField:
    return field_from_bytes(Path(path).read_bytes())


def save_mesh(mesh: TriMesh, path) -> None:
    write_atomic(path, _npz_bytes(vertices=mesh.vertices, faces=mesh.faces, id=np.array(mesh.id)))


def load_mesh(path) -> TriMesh:
    with np.load(path) as z:
        return TriMesh(z["vertices"], z["faces"], str(z["id"]))


def save_geometry(geometry: VertexGeometry, path) -> None:
    write_atomic(path, _npz_bytes(normals=geometry.normals, kappa1=geometry.kappa1,
                                  kappa2=geometry.kappa2, quality=geometry.quality))


def load_geometry(path) -> VertexGeometry:
    with np.load(path) as z:
        return VertexGeometry(z["normals"], z["kappa1"], z["kappa2"], z["quality"])

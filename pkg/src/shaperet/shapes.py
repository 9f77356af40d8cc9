"""Parametric test surfaces and the bundled toy retrieval dataset."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import TriMesh, save_off


def tetrahedron(edge: float = 1.0) -> TriMesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    v *= edge / (2 * np.sqrt(2))
    f = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return TriMesh(v, f, "tetrahedron")


def fan(n: int = 6, radius: float = 1.0) -> TriMesh:
    """Disc of ``n`` triangles around vertex 0."""
    t = 2 * np.pi * np.arange(n) / n
    v = np.vstack([[0, 0, 0], np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros(n)])])
    f = [[0, 1 + i, 1 + (i + 1) % n] for i in range(n)]
    return TriMesh(v, f, "fan")


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron projected onto a sphere, outward winding."""
    phi = (1 + 5 ** 0.5) / 2
    v = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = list(f)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    return TriMesh(radius * np.array(verts), faces, "icosphere")


def flat_grid(n: int = 21, size: float = 2.0, height=None) -> TriMesh:
    """``n`` x ``n`` vertex grid on [-size/2, size/2]^2 with +z facing winding.

    ``height`` may be a callable ``z = height(x, y)``.
    """
    s = np.linspace(-size / 2, size / 2, n)
    x, y = np.meshgrid(s, s, indexing="xy")
    z = np.zeros_like(x) if height is None else height(x, y)
    v = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    f = []
    for r in range(n - 1):
        for c in range(n - 1):
            i = r * n + c
            f.append((i, i + 1, i + n + 1))
            f.append((i, i + n + 1, i + n))
    return TriMesh(v, f, "grid")


def bump_plane(n: int = 61, size: float = 2.0, height: float = 0.3, width: float = 0.25) -> TriMesh:
    m = flat_grid(n, size, lambda x, y: height * np.exp(-(x * x + y * y) / (2 * width * width)))
    return TriMesh(m.vertices, m.faces, "bump")


def _tube(rings: np.ndarray, n_around: int) -> list[tuple[int, int, int]]:
    faces = []
    for r in range(len(rings) - 1):
        for k in range(n_around):
            a, b = rings[r][k], rings[r][(k + 1) % n_around]
            c, d = rings[r + 1][k], rings[r + 1][(k + 1) % n_around]
            faces += [(a, b, d), (a, d, c)]
    return faces


def capsule(radius: float = 1.0, length: float = 6.0, n_around: int = 48, n_along: int = 60,
            n_cap: int = 12) -> TriMesh:
    """Closed cylinder with hemispherical caps along z, outward winding."""
    profile = []  # (z, rho)
    for k in range(1, n_cap):
        a = -np.pi / 2 + (np.pi / 2) * k / n_cap
        profile.append((-length / 2 + radius * np.sin(a), radius * np.cos(a)))
    for z in np.linspace(-length / 2, length / 2, n_along):
        profile.append((z, radius))
    for k in range(1, n_cap):
        a = (np.pi / 2) * k / n_cap
        profile.append((length / 2 + radius * np.sin(a), radius * np.cos(a)))
    t = 2 * np.pi * np.arange(n_around) / n_around
    verts = [(0.0, 0.0, -length / 2 - radius)]
    rings = []
    for z, rho in profile:
        start = len(verts)
        verts += [(rho * np.cos(a), rho * np.sin(a), z) for a in t]
        rings.append(np.arange(start, start + n_around))
    verts.append((0.0, 0.0, length / 2 + radius))
    bottom, top = 0, len(verts) - 1
    faces = [(bottom, rings[0][(k + 1) % n_around], rings[0][k]) for k in range(n_around)]
    faces += _tube(np.array(rings), n_around)
    faces += [(top, rings[-1][k], rings[-1][(k + 1) % n_around]) for k in range(n_around)]
    return TriMesh(np.array(verts), faces, "capsule")


def torus(major: float = 1.0, minor: float = 0.4, n_major: int = 40, n_minor: int = 20) -> TriMesh:
    u = 2 * np.pi * np.arange(n_major) / n_major
    w = 2 * np.pi * np.arange(n_minor) / n_minor
    verts = []
    for a in u:
        for b in w:
            rho = major + minor * np.cos(b)
            verts.append((rho * np.cos(a), rho * np.sin(a), minor * np.sin(b)))
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = i * n_minor + (j + 1) % n_minor
            c = ((i + 1) % n_major) * n_minor + j
            d = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            faces += [(a, c, d), (a, d, b)]
    return TriMesh(np.array(verts), faces, "torus")


def ellipsoid(axes=(1.6, 1.0, 0.7), subdivisions: int = 3) -> TriMesh:
    s = icosphere(subdivisions)
    return TriMesh(s.vertices * np.asarray(axes, float), s.faces, "ellipsoid")


def jittered(mesh: TriMesh, amount: float, rng: np.random.Generator, mesh_id: str = "") -> TriMesh:
    """Move each vertex along its normal by N(0, amount)."""
    offs = rng.normal(0.0, amount, mesh.n_vertices)
    return TriMesh(mesh.vertices + offs[:, None] * mesh.vertex_normals, mesh.faces, mesh_id or mesh.id)


TOY_CLASSES = ("sphere", "ellipsoid", "torus")


def toy_dataset(instances: int = 6, seed: int = 0) -> list[tuple[TriMesh, str]]:
    """Three classes of jittered parametric shapes with randomized proportions.

    Proportions are chosen so the classes have clearly different mean
    curvature ranges at unit scale: spheres sit at H = 1, the oblate
    ellipsoids are dominated by their flat faces (H about 0.25 to 0.5) and
    the thin tori cover H from about 1.3 to 2.4.
    """
    rng = np.random.default_rng(seed)
    out = []
    for cls in TOY_CLASSES:
        for i in range(instances):
            scale = rng.uniform(0.97, 1.03)
            if cls == "sphere":
                base = icosphere(3, scale)
            elif cls == "ellipsoid":
                axes = scale * np.array([1.4, 1.4, 0.5]) * rng.uniform(0.95, 1.05, 3)
                base = ellipsoid(axes, 3)
            else:
                base = torus(scale, scale * rng.uniform(0.24, 0.28), 48, 16)
            out.append((jittered(base, 1e-3 * scale, rng, f"{cls}_{i}"), cls))
    return out


def write_toy_dataset(directory: str | Path, instances: int = 6, seed: int = 0) -> Path:
    """Write OFF files plus a ``labels.cla`` classification file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = toy_dataset(instances, seed)
    for mesh, _ in data:
        save_off(mesh, directory / f"{mesh.id}.off")
    lines = ["PSB 1", f"{len(TOY_CLASSES)} {len(data)}", ""]
    for cls in TOY_CLASSES:
        ids = [m.id for m, c in data if c == cls]
        lines.append(f"{cls} 0 {len(ids)}")
        lines.extend(ids)
        lines.append("")
    (directory / "labels.cla").write_text("\n".join(lines))
    return directory

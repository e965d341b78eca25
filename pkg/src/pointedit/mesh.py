"""Triangle meshes, area-uniform surface sampling, and OBJ export."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import CloudError, ColoredPointCloud, PartAnnotation

DEFAULT_GRAY = 0.5  # external [0,1] color assigned to uncolored surfaces


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (V, 3), triangles (F, 3) vertex-index triples.

    `face_components` optionally labels every triangle with a component id
    (name table in `component_names`); per-vertex colors are optional.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_colors: np.ndarray | None = None
    face_components: np.ndarray | None = None
    component_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(verts) == 0 or len(tris) == 0:
            raise CloudError("empty mesh")
        if tris.min() < 0 or tris.max() >= len(verts):
            raise CloudError("triangle index out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        if self.face_components is not None:
            fc = np.asarray(self.face_components, dtype=np.int64)
            if fc.shape != (len(tris),):
                raise CloudError("face_components must label every triangle")
            object.__setattr__(self, "face_components", fc)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def component_bbox(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """(min, max) corners of the vertices used by the named component."""
        if self.face_components is None:
            raise CloudError("mesh has no component tags")
        ids = [i for i, n in self.component_names.items() if n == name]
        if not ids:
            raise CloudError(f"no component named {name!r}")
        mask = np.isin(self.face_components, ids)
        verts = self.vertices[np.unique(self.triangles[mask])]
        return verts.min(axis=0), verts.max(axis=0)

    def component_count(self, name: str) -> int:
        return sum(1 for n in self.component_names.values() if n == name)


def merge_meshes(parts: list[tuple[str, TriangleMesh]]) -> TriangleMesh:
    """Concatenate (component-name, mesh) parts into one tagged mesh."""
    verts, tris, comps = [], [], []
    names: dict[int, str] = {}
    offset = 0
    for comp_id, (name, part) in enumerate(parts):
        verts.append(part.vertices)
        tris.append(part.triangles + offset)
        comps.append(np.full(part.n_triangles, comp_id, dtype=np.int64))
        names[comp_id] = name
        offset += part.n_vertices
    return TriangleMesh(
        vertices=np.concatenate(verts),
        triangles=np.concatenate(tris),
        face_components=np.concatenate(comps),
        component_names=names,
    )


def _sample_on_triangles(mesh: TriangleMesh, n: int, rng: np.random.Generator):
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0.0:
        raise CloudError("mesh has zero total area")
    # zero-area triangles contribute no sampling weight
    probs = areas / total
    tri_idx = rng.choice(len(areas), size=n, p=probs)
    a = mesh.vertices[mesh.triangles[tri_idx, 0]]
    b = mesh.vertices[mesh.triangles[tri_idx, 1]]
    c = mesh.vertices[mesh.triangles[tri_idx, 2]]
    # square-root trick gives uniform barycentric coordinates
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    pts = w0[:, None] * a + w1[:, None] * b + w2[:, None] * c
    return pts, tri_idx, (w0, w1, w2)


def sample_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> ColoredPointCloud:
    """Draw n points area-proportionally over triangles, uniform within each.

    Uncolored meshes get the default gray (0.5, 0.5, 0.5). Deterministic for a
    fixed seed.
    """
    if n <= 0:
        raise CloudError("sample count must be positive")
    rng = np.random.default_rng(seed)
    pts, tri_idx, (w0, w1, w2) = _sample_on_triangles(mesh, n, rng)
    if mesh.vertex_colors is not None:
        vc = np.asarray(mesh.vertex_colors, dtype=np.float64)
        tris = mesh.triangles[tri_idx]
        rgb = w0[:, None] * vc[tris[:, 0]] + w1[:, None] * vc[tris[:, 1]] + w2[:, None] * vc[tris[:, 2]]
    else:
        rgb = np.full((n, 3), DEFAULT_GRAY)
    return ColoredPointCloud.from_parts(pts, rgb)


def sample_surface_labeled(mesh: TriangleMesh, n: int, seed: int = 0,
                           category: str | None = None) -> tuple[ColoredPointCloud, PartAnnotation]:
    """Like sample_surface but also returns per-point part labels from component tags.

    Components sharing a name (the four legs, say) collapse into one part.
    Part names are '{category} {component}' when a category is given.
    """
    if mesh.face_components is None:
        raise CloudError("mesh has no component tags")
    if n <= 0:
        raise CloudError("sample count must be positive")
    rng = np.random.default_rng(seed)
    pts, tri_idx, _ = _sample_on_triangles(mesh, n, rng)
    rgb = np.full((n, 3), DEFAULT_GRAY)
    comp_labels = mesh.face_components[tri_idx]
    prefix = f"{category} " if category else ""
    unique_names = sorted(set(mesh.component_names.values()))
    part_of_name = {name: i for i, name in enumerate(unique_names)}
    comp_to_part = {cid: part_of_name[name] for cid, name in mesh.component_names.items()}
    labels = np.array([comp_to_part[c] for c in comp_labels], dtype=np.int64)
    names = {part_of_name[name]: prefix + name for name in unique_names
             if np.any(labels == part_of_name[name])}
    return ColoredPointCloud.from_parts(pts, rgb), PartAnnotation(labels=labels, names=names)


def write_obj(mesh: TriangleMesh, path: str | Path, sidecar: str | Path | None = None) -> None:
    """Wavefront OBJ (positions + faces only), optional component-tag sidecar.

    The sidecar holds '# id name' header lines then one component id per face.
    """
    with open(Path(path), "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]} {v[1]} {v[2]}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    if sidecar is not None:
        if mesh.face_components is None:
            raise CloudError("mesh has no component tags to write")
        with open(Path(sidecar), "w") as f:
            for comp_id in sorted(mesh.component_names):
                f.write(f"# {comp_id} {mesh.component_names[comp_id]}\n")
            for c in mesh.face_components:
                f.write(f"{int(c)}\n")


def read_obj(path: str | Path) -> TriangleMesh:
    verts, tris = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                tris.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(vertices=np.array(verts), triangles=np.array(tris))

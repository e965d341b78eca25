"""Parametric shape programs for chairs, vases, and tables.

Each category exposes a registry of named, editable parameters. Every
parameter carries an increase and a decrease instruction string, and a
deterministic mesh generator assembles tagged components (seat, legs,
backrest, ... ) from a parameter vector. Component tags double as the part
annotation source for color-edit data.

Mesh resolution (lathe segments, prism cross-section vertices) is a build
constant so generation is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import TriangleMesh, merge_meshes

LATHE_SEGMENTS = 24
PRISM_SEGMENTS = 16
DEAD_ZONE_FRACTION = 0.1

CATEGORIES = ("chair", "vase", "table")


class ShapeError(ValueError):
    """Unknown category/parameter or out-of-bounds value."""


@dataclass(frozen=True)
class ParamSpec:
    """One editable shape parameter.

    kind is 'continuous', 'integer', or 'boolean'; ranged kinds carry
    (lo, hi) bounds. `requires` names boolean gates that must hold for this
    parameter to be visible in the mesh (dataset generation enables them
    before perturbing).
    """

    name: str
    property: str
    kind: str
    inc_instruction: str
    dec_instruction: str
    lo: float = 0.0
    hi: float = 1.0
    default: float | bool | int = 0.0
    requires: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("continuous", "integer", "boolean"):
            raise ShapeError(f"bad parameter kind {self.kind!r}")
        if self.kind != "boolean" and not self.lo < self.hi:
            raise ShapeError(f"{self.name}: need lo < hi")
        if not self.inc_instruction or not self.dec_instruction:
            raise ShapeError(f"{self.name}: instruction strings must be non-empty")

    def validate(self, value) -> None:
        if self.kind == "boolean":
            if not isinstance(value, (bool, np.bool_)):
                raise ShapeError(f"{self.name}: expected bool, got {value!r}")
        elif self.kind == "integer":
            if int(value) != value or not self.lo <= value <= self.hi:
                raise ShapeError(f"{self.name}: integer out of [{self.lo}, {self.hi}]: {value!r}")
        else:
            if not self.lo <= value <= self.hi:
                raise ShapeError(f"{self.name}: out of [{self.lo}, {self.hi}]: {value!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "property": self.property,
            "kind": self.kind,
            "lo": self.lo,
            "hi": self.hi,
            "default": self.default,
            "inc_instruction": self.inc_instruction,
            "dec_instruction": self.dec_instruction,
            "requires": dict(self.requires),
        }

    @staticmethod
    def from_dict(d: dict) -> "ParamSpec":
        return ParamSpec(name=d["name"], property=d["property"], kind=d["kind"],
                         lo=d["lo"], hi=d["hi"], default=d["default"],
                         inc_instruction=d["inc_instruction"],
                         dec_instruction=d["dec_instruction"],
                         requires=dict(d.get("requires", {})))


@dataclass(frozen=True)
class ParamVector:
    """A full assignment of one category's registry parameters."""

    category: str
    values: dict

    def __post_init__(self):
        registry = {s.name: s for s in param_registry(self.category)}
        missing = set(registry) - set(self.values)
        extra = set(self.values) - set(registry)
        if missing or extra:
            raise ShapeError(f"parameter set mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, value in self.values.items():
            registry[name].validate(value)

    def replaced(self, name: str, value) -> "ParamVector":
        new = dict(self.values)
        new[name] = value
        return ParamVector(self.category, new)

    def __getitem__(self, name):
        return self.values[name]


_CHAIR_PARAMS = [
    ParamSpec("scale_x", "width", "continuous",
              "make the chair wider", "make the chair narrower", 0.6, 1.5, 1.0),
    ParamSpec("scale_y", "length", "continuous",
              "make the chair deeper", "make the chair shallower", 0.6, 1.5, 1.0),
    ParamSpec("scale_z", "height", "continuous",
              "make the chair taller", "make the chair shorter", 0.7, 1.4, 1.0),
    ParamSpec("seat_pos", "seat height", "continuous",
              "make the chair legs longer", "make the chair legs shorter", 0.3, 0.7, 0.45),
    ParamSpec("legs_thickness", "legs thickness", "continuous",
              "make the chair legs thicker", "make the chair legs thinner", 0.02, 0.08, 0.04),
    ParamSpec("legs_bevel", "legs roundness", "continuous",
              "make the chair legs rounder", "make the chair legs more square", 0.0, 1.0, 0.0),
    ParamSpec("is_back_rest", "solid back or not", "boolean",
              "make the chair back solid", "make the chair back slatted", default=False),
    ParamSpec("back_rail_count", "back rails", "integer",
              "add more rails to the chair back", "remove some rails from the chair back",
              2, 6, 3, requires={"is_back_rest": False}),
    ParamSpec("back_angle", "back angle", "continuous",
              "make the chair back more reclined", "make the chair back more upright",
              0.0, 0.4, 0.1),
    ParamSpec("handles_state", "arms existence", "boolean",
              "add armrests to the chair", "remove the chair armrests", default=False),
    ParamSpec("handles_height", "arms height", "continuous",
              "make the chair armrests higher", "make the chair armrests lower",
              0.15, 0.4, 0.25, requires={"handles_state": True}),
    ParamSpec("is_monoleg", "one-legged or not", "boolean",
              "make the chair one-legged", "give the chair four legs", default=False),
]

_VASE_PARAMS = [
    ParamSpec("body_height", "height", "continuous",
              "make the vase body taller", "make the vase body shorter", 0.5, 1.4, 0.9),
    ParamSpec("body_width", "width", "continuous",
              "make the vase wider", "make the vase narrower", 0.35, 1.0, 0.6),
    ParamSpec("neck_length", "neck length", "continuous",
              "make the vase neck longer", "make the vase neck shorter", 0.1, 0.5, 0.25),
    ParamSpec("neck_width", "neck thickness", "continuous",
              "make the vase neck thicker", "make the vase neck thinner", 0.08, 0.3, 0.15),
    ParamSpec("handle_count", "handles existence", "integer",
              "add handles to the vase", "remove handles from the vase", 0, 4, 0),
]

_TABLE_PARAMS = [
    ParamSpec("top_scale_x", "width", "continuous",
              "make the table wider", "make the table narrower", 0.7, 1.8, 1.2),
    ParamSpec("top_scale_y", "length", "continuous",
              "make the table longer", "make the table shorter", 0.7, 1.8, 1.2),
    ParamSpec("top_height", "height", "continuous",
              "make the table taller", "make the table lower", 0.45, 0.95, 0.7),
    ParamSpec("top_thickness", "tabletop thickness", "continuous",
              "make the tabletop thicker", "make the tabletop thinner", 0.03, 0.12, 0.06),
    ParamSpec("top_roundness", "roundness", "continuous",
              "make the tabletop rounder", "make the tabletop more rectangular", 0.0, 1.0, 0.0),
    ParamSpec("legs_thickness", "legs thickness", "continuous",
              "make the table legs thicker", "make the table legs thinner", 0.03, 0.1, 0.05),
    ParamSpec("is_monoleg", "one-legged or not", "boolean",
              "make the table one-legged", "give the table four legs", default=False),
    ParamSpec("support_height", "leg connections height", "continuous",
              "raise the table leg supports", "lower the table leg supports",
              0.1, 0.5, 0.2, requires={"is_monoleg": False}),
]

_REGISTRIES = {"chair": _CHAIR_PARAMS, "vase": _VASE_PARAMS, "table": _TABLE_PARAMS}


def param_registry(category: str) -> list[ParamSpec]:
    if category not in _REGISTRIES:
        raise ShapeError(f"unknown category {category!r}")
    return list(_REGISTRIES[category])


def default_params(category: str) -> ParamVector:
    return ParamVector(category, {s.name: s.default for s in param_registry(category)})


def sample_random_params(category: str, seed: int) -> ParamVector:
    """Uniform draw within bounds per parameter kind; deterministic given seed."""
    rng = np.random.default_rng(seed)
    values = {}
    for spec in param_registry(category):
        if spec.kind == "boolean":
            values[spec.name] = bool(rng.random() < 0.5)
        elif spec.kind == "integer":
            values[spec.name] = int(rng.integers(int(spec.lo), int(spec.hi) + 1))
        else:
            values[spec.name] = float(rng.uniform(spec.lo, spec.hi))
    return ParamVector(category, values)


def perturb_param(params: ParamVector, name: str, seed: int) -> tuple[ParamVector, str]:
    """Randomly change one parameter enough to be visible; returns (new, 'inc'|'dec').

    Continuous/integer values are redrawn uniformly from the feasible range
    excluding a dead-zone of +-10% of the range around the old value;
    booleans flip. Direction is 'inc' iff the value increased.
    """
    registry = {s.name: s for s in param_registry(params.category)}
    if name not in registry:
        raise ShapeError(f"unknown parameter {name!r}")
    spec = registry[name]
    old = params[name]
    rng = np.random.default_rng(seed)
    if spec.kind == "boolean":
        new_value = not old
        direction = "inc" if new_value else "dec"
        return params.replaced(name, new_value), direction
    if spec.kind == "integer":
        lo, hi = int(spec.lo), int(spec.hi)
        dead = DEAD_ZONE_FRACTION * (hi - lo)
        candidates = [c for c in range(lo, hi + 1) if abs(c - old) > dead and c != old]
        new_value = int(rng.choice(candidates))
    else:
        dead = DEAD_ZONE_FRACTION * (spec.hi - spec.lo)
        left = max(0.0, (old - dead) - spec.lo)
        right = max(0.0, spec.hi - (old + dead))
        u = rng.random() * (left + right)
        if u < left:
            new_value = float(spec.lo + u)
        else:
            new_value = float(old + dead + (u - left))
        new_value = min(max(new_value, spec.lo), spec.hi)
    direction = "inc" if new_value > old else "dec"
    return params.replaced(name, new_value), direction


def activation_base(params: ParamVector, name: str) -> ParamVector:
    """Force the boolean gates that make `name` visible in the mesh."""
    registry = {s.name: s for s in param_registry(params.category)}
    out = params
    for gate, value in registry[name].requires.items():
        out = out.replaced(gate, value)
    return out


# ---------------------------------------------------------------------------
# mesh primitives
# ---------------------------------------------------------------------------

def _box(center, size) -> TriangleMesh:
    cx, cy, cz = center
    sx, sy, sz = (s / 2 for s in size)
    v = np.array([[cx + dx * sx, cy + dy * sy, cz + dz * sz]
                  for dx in (-1, 1) for dy in (-1, 1) for dz in (-1, 1)], dtype=float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris.append([a, b, c])
        tris.append([a, c, d])
    return TriangleMesh(vertices=v, triangles=np.array(tris))


def _bevel_profile(bevel: float) -> np.ndarray:
    """Unit cross-section interpolating square (bevel 0) to circle (bevel 1)."""
    theta = np.linspace(0, 2 * np.pi, PRISM_SEGMENTS, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    denom = np.maximum(np.abs(circle[:, 0]), np.abs(circle[:, 1]))
    square = circle / denom[:, None]
    return (1.0 - bevel) * square + bevel * circle


def _prism(cx, cy, z0, z1, rx, ry, bevel=0.0) -> TriangleMesh:
    """Vertical prism with a beveled square cross-section, capped ends."""
    prof = _bevel_profile(bevel)
    m = len(prof)
    bottom = np.column_stack([cx + prof[:, 0] * rx, cy + prof[:, 1] * ry, np.full(m, z0)])
    top = bottom.copy()
    top[:, 2] = z1
    verts = np.concatenate([bottom, top, [[cx, cy, z0]], [[cx, cy, z1]]])
    cb, ct = 2 * m, 2 * m + 1
    tris = []
    for i in range(m):
        j = (i + 1) % m
        tris.append([i, j, m + j])
        tris.append([i, m + j, m + i])
        tris.append([cb, j, i])
        tris.append([ct, m + i, m + j])
    return TriangleMesh(vertices=verts, triangles=np.array(tris))


def _lathe(radii: np.ndarray, zs: np.ndarray, cap_bottom=True, cap_top=False) -> TriangleMesh:
    """Surface of revolution around the z axis from a (radius, z) profile."""
    theta = np.linspace(0, 2 * np.pi, LATHE_SEGMENTS, endpoint=False)
    rings = []
    for r, z in zip(radii, zs):
        rings.append(np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full_like(theta, z)]))
    verts = np.concatenate(rings)
    m = LATHE_SEGMENTS
    tris = []
    for k in range(len(rings) - 1):
        base = k * m
        for i in range(m):
            j = (i + 1) % m
            tris.append([base + i, base + j, base + m + j])
            tris.append([base + i, base + m + j, base + m + i])
    if cap_bottom:
        c = len(verts)
        verts = np.concatenate([verts, [[0, 0, zs[0]]]])
        for i in range(m):
            j = (i + 1) % m
            tris.append([c, j, i])
    if cap_top:
        c = len(verts)
        verts = np.concatenate([verts, [[0, 0, zs[-1]]]])
        top = (len(rings) - 1) * m
        for i in range(m):
            j = (i + 1) % m
            tris.append([c, top + i, top + j])
    return TriangleMesh(vertices=verts, triangles=np.array(tris))


def _torus_arc(center, main_r, tube_r) -> TriangleMesh:
    """Half torus (a handle) bulging outward in the x-z plane through center."""
    phis = np.linspace(-np.pi / 2, np.pi / 2, 9)
    psis = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    out_of_plane = np.array([0.0, 1.0, 0.0])
    rings = []
    for phi in phis:
        radial = np.array([np.cos(phi), 0.0, np.sin(phi)])
        arc_pt = main_r * radial
        pts = [arc_pt + tube_r * (np.cos(psi) * radial + np.sin(psi) * out_of_plane)
               for psi in psis]
        rings.append(np.array(pts))
    verts = np.concatenate(rings) + np.asarray(center)
    m = len(psis)
    tris = []
    for k in range(len(phis) - 1):
        base = k * m
        for i in range(m):
            j = (i + 1) % m
            tris.append([base + i, base + j, base + m + j])
            tris.append([base + i, base + m + j, base + m + i])
    return TriangleMesh(vertices=verts, triangles=np.array(tris))


def _rotate_x(mesh: TriangleMesh, angle: float, pivot) -> TriangleMesh:
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    verts = (mesh.vertices - pivot) @ rot.T + pivot
    return TriangleMesh(vertices=verts, triangles=mesh.triangles)


def _rotate_z(mesh: TriangleMesh, angle: float) -> TriangleMesh:
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    return TriangleMesh(vertices=mesh.vertices @ rot.T, triangles=mesh.triangles)


def _scaled(mesh: TriangleMesh, sx, sy, sz) -> TriangleMesh:
    return TriangleMesh(vertices=mesh.vertices * np.array([sx, sy, sz]),
                        triangles=mesh.triangles,
                        face_components=mesh.face_components,
                        component_names=dict(mesh.component_names))


# ---------------------------------------------------------------------------
# category assemblies
# ---------------------------------------------------------------------------

def _chair_mesh(p: ParamVector) -> TriangleMesh:
    seat_z = p["seat_pos"]
    seat_thick = 0.08
    lt = p["legs_thickness"]
    parts: list[tuple[str, TriangleMesh]] = []
    parts.append(("seat", _box((0, 0, seat_z - seat_thick / 2), (1.0, 1.0, seat_thick))))
    leg_top = seat_z - seat_thick
    if p["is_monoleg"]:
        column = _prism(0, 0, 0.04, leg_top, 3 * lt, 3 * lt, p["legs_bevel"])
        base = _prism(0, 0, 0.0, 0.04, 0.3, 0.3, 1.0)
        parts.append(("legs", merge_meshes([("c", column), ("b", base)])))
    else:
        for sx in (-1, 1):
            for sy in (-1, 1):
                parts.append(("legs", _prism(0.4 * sx, 0.4 * sy, 0.0, leg_top, lt, lt, p["legs_bevel"])))
    # backrest: two stiles plus horizontal rails; a solid panel (when enabled)
    # sits between the stiles without hiding the rails
    back_h = 0.55
    stile_r = 0.04
    back_y = -0.5 + stile_r
    back_parts = []
    for sx in (-1, 1):
        back_parts.append(("backrest", _box((0.45 * sx, back_y, seat_z + back_h / 2), (2 * stile_r, 2 * stile_r, back_h))))
    rail_count = int(p["back_rail_count"])
    for k in range(rail_count):
        frac = (k + 1) / (rail_count + 1)
        back_parts.append(("backrest", _box((0, back_y, seat_z + frac * back_h), (0.82, 0.05, 0.06))))
    if p["is_back_rest"]:
        back_parts.append(("backrest", _box((0, back_y + 0.015, seat_z + back_h / 2), (0.82, 0.02, back_h * 0.92))))
    pivot = np.array([0.0, back_y, seat_z])
    for name, mesh in back_parts:
        parts.append((name, _rotate_x(mesh, -p["back_angle"], pivot)))
    if p["handles_state"]:
        arm_z = seat_z + p["handles_height"]
        for sx in (-1, 1):
            rail = _box((0.5 * sx, 0.05, arm_z), (0.06, 0.75, 0.05))
            post = _box((0.5 * sx, 0.35, (seat_z + arm_z) / 2), (0.05, 0.05, arm_z - seat_z))
            parts.append(("armrests", merge_meshes([("r", rail), ("p", post)])))
    mesh = merge_meshes(parts)
    return _scaled(mesh, p["scale_x"], p["scale_y"], p["scale_z"])


def _vase_mesh(p: ParamVector) -> TriangleMesh:
    h = p["body_height"]
    w2 = p["body_width"] / 2
    neck_r = p["neck_width"] / 2
    # quadratic Bezier profile in (radius, z): bulging body from a narrow
    # base to the neck radius
    t = np.linspace(0.0, 1.0, 9)
    p0 = np.array([0.55 * w2, 0.0])
    p1 = np.array([1.45 * w2, 0.45 * h])
    p2 = np.array([neck_r, h])
    prof = ((1 - t) ** 2)[:, None] * p0 + (2 * t * (1 - t))[:, None] * p1 + (t ** 2)[:, None] * p2
    body = _lathe(prof[:, 0], prof[:, 1], cap_bottom=True)
    neck = _lathe(np.array([neck_r, neck_r]), np.array([h, h + p["neck_length"]]))
    parts = [("body", body), ("neck", neck)]
    count = int(p["handle_count"])
    handle_r = 0.22 * h
    attach_r = max(prof[:, 0].max() * 0.92, neck_r)
    for k in range(count):
        handle = _torus_arc((attach_r, 0.0, 0.55 * h), handle_r, 0.035)
        parts.append(("handles", _rotate_z(handle, 2 * np.pi * k / max(count, 1))))
    return merge_meshes(parts)


def _table_mesh(p: ParamVector) -> TriangleMesh:
    top_z = p["top_height"]
    thick = p["top_thickness"]
    lt = p["legs_thickness"]
    parts: list[tuple[str, TriangleMesh]] = []
    parts.append(("top", _prism(0, 0, top_z - thick, top_z,
                                p["top_scale_x"] / 2, p["top_scale_y"] / 2, p["top_roundness"])))
    leg_top = top_z - thick
    if p["is_monoleg"]:
        column = _prism(0, 0, 0.03, leg_top, 2.5 * lt, 2.5 * lt, 0.8)
        base = _prism(0, 0, 0.0, 0.03, 0.3 * p["top_scale_x"], 0.3 * p["top_scale_y"], 1.0)
        parts.append(("legs", merge_meshes([("c", column), ("b", base)])))
    else:
        inset_x = 0.42 * p["top_scale_x"]
        inset_y = 0.42 * p["top_scale_y"]
        for sx in (-1, 1):
            for sy in (-1, 1):
                parts.append(("legs", _prism(inset_x * sx, inset_y * sy, 0.0, leg_top, lt, lt, 0.0)))
        z = p["support_height"] * top_z
        for sx in (-1, 1):
            parts.append(("support", _box((inset_x * sx, 0, z), (2 * lt * 0.8, 2 * inset_y, 0.05))))
        for sy in (-1, 1):
            parts.append(("support", _box((0, inset_y * sy, z), (2 * inset_x, 2 * lt * 0.8, 0.05))))
    return merge_meshes(parts)


def generate_mesh(params: ParamVector) -> TriangleMesh:
    """Deterministic mesh assembly for a parameter vector (tagged components)."""
    if params.category == "chair":
        return _chair_mesh(params)
    if params.category == "vase":
        return _vase_mesh(params)
    if params.category == "table":
        return _table_mesh(params)
    raise ShapeError(f"unknown category {params.category!r}")

"""Colored point cloud container, normalization, resampling, and file I/O.

A cloud is an (N, 6) float32 array of x, y, z, r, g, b rows. Coordinates are
dimensionless model units. Colors are exchanged externally in [0, 1]; the
model-facing range [-1, 1] is entered and left only through
:func:`normalize` / :func:`denormalize`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PC6_MAGIC = b"PC6\0"


class CloudError(ValueError):
    """Invalid point cloud input or file content."""


@dataclass(frozen=True)
class ColoredPointCloud:
    """N points, each (x, y, z, r, g, b). Stored as float32."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 6:
            raise CloudError(f"expected (N, 6) points, got shape {pts.shape}")
        if pts.shape[0] == 0:
            raise CloudError("empty point cloud")
        if not np.all(np.isfinite(pts)):
            raise CloudError("non-finite values in point cloud")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def rgb(self) -> np.ndarray:
        return self.points[:, 3:]

    @staticmethod
    def from_parts(xyz: np.ndarray, rgb: np.ndarray) -> "ColoredPointCloud":
        return ColoredPointCloud(np.concatenate([np.asarray(xyz, dtype=np.float32),
                                                 np.asarray(rgb, dtype=np.float32)], axis=1))

    def with_rgb(self, rgb: np.ndarray) -> "ColoredPointCloud":
        return ColoredPointCloud.from_parts(self.xyz, rgb)


@dataclass(frozen=True)
class NormState:
    """Affine frame recorded by :func:`normalize`: x_norm = (x - center) / scale."""

    center: np.ndarray  # (3,) float64
    scale: float


@dataclass(frozen=True)
class PartAnnotation:
    """Per-point part labels plus an id -> part-name table."""

    labels: np.ndarray  # (N,) int
    names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        present = set(int(v) for v in np.unique(labels))
        named = set(self.names)
        if present != named:
            raise CloudError(f"part names {sorted(named)} do not cover labels {sorted(present)}")

    @property
    def part_ids(self) -> list[int]:
        return sorted(self.names)

    def mask(self, part_id: int) -> np.ndarray:
        return self.labels == part_id


def normalize(cloud: ColoredPointCloud) -> tuple[ColoredPointCloud, NormState]:
    """Center at the bounding-box center and scale so max |coord| = 1; colors [0,1] -> [-1,1].

    The scale is the largest half-extent of the bounding box (aspect ratio is
    preserved). Raises on a degenerate cloud with zero extent.
    """
    xyz = cloud.xyz.astype(np.float64)
    rgb = cloud.rgb.astype(np.float64)
    if rgb.min() < -1e-6 or rgb.max() > 1 + 1e-6:
        raise CloudError("input colors must be in [0, 1]")
    lo = xyz.min(axis=0)
    hi = xyz.max(axis=0)
    center = (lo + hi) / 2.0
    scale = float((hi - lo).max() / 2.0)
    if scale <= 0.0:
        raise CloudError("zero extent: all points identical")
    out = np.empty_like(cloud.points, dtype=np.float64)
    out[:, :3] = (xyz - center) / scale
    out[:, 3:] = 2.0 * rgb - 1.0
    return ColoredPointCloud(out), NormState(center=center, scale=scale)


def apply_norm_state(cloud: ColoredPointCloud, state: NormState) -> ColoredPointCloud:
    """Map a cloud into an existing normalized frame (same affine as normalize)."""
    out = np.empty_like(cloud.points, dtype=np.float64)
    out[:, :3] = (cloud.xyz.astype(np.float64) - state.center) / state.scale
    out[:, 3:] = 2.0 * cloud.rgb.astype(np.float64) - 1.0
    return ColoredPointCloud(out)


def denormalize(cloud: ColoredPointCloud, state: NormState) -> ColoredPointCloud:
    """Exact inverse of :func:`normalize`; colors back to [0, 1], clamped."""
    out = np.empty_like(cloud.points, dtype=np.float64)
    out[:, :3] = cloud.xyz.astype(np.float64) * state.scale + state.center
    out[:, 3:] = np.clip((cloud.rgb.astype(np.float64) + 1.0) / 2.0, 0.0, 1.0)
    return ColoredPointCloud(out)


def fps_indices(xyz: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Farthest-point sampling over rows of xyz; the first pick is seeded."""
    m = xyz.shape[0]
    if not 0 < n <= m:
        raise CloudError(f"cannot FPS {n} points from {m}")
    xyz = np.asarray(xyz, dtype=np.float64)
    rng = np.random.default_rng(seed)
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = rng.integers(m)
    dist = np.sum((xyz - xyz[chosen[0]]) ** 2, axis=1)
    for i in range(1, n):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        d_new = np.sum((xyz - xyz[nxt]) ** 2, axis=1)
        np.minimum(dist, d_new, out=dist)
    return chosen


def resample(cloud: ColoredPointCloud, n: int, seed: int = 0) -> ColoredPointCloud:
    """Resample to exactly n points.

    n < N uses farthest-point sampling (deterministic given seed); n == N is
    the identity; n > N samples with replacement.
    """
    if n <= 0:
        raise CloudError("resample target must be positive")
    if n == cloud.n:
        return ColoredPointCloud(cloud.points.copy())
    if n < cloud.n:
        idx = fps_indices(cloud.xyz, n, seed)
    else:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, cloud.n, size=n)
    return ColoredPointCloud(cloud.points[idx])


def resample_indices(cloud: ColoredPointCloud, n: int, seed: int = 0) -> np.ndarray:
    """Row indices that `resample` would select (to resample paired clouds consistently)."""
    if n <= 0:
        raise CloudError("resample target must be positive")
    if n == cloud.n:
        return np.arange(n, dtype=np.int64)
    if n < cloud.n:
        return fps_indices(cloud.xyz, n, seed)
    rng = np.random.default_rng(seed)
    return rng.integers(0, cloud.n, size=n)


# ---------------------------------------------------------------------------
# PC6 file format: magic "PC6\0", little-endian u32 N, then N x 6 f32 rows
# (x, y, z, r, g, b) with colors in [0, 1]. The text twin is one
# "x y z r g b" line per point.
# ---------------------------------------------------------------------------

def pc6_bytes(cloud: ColoredPointCloud) -> bytes:
    data = np.ascontiguousarray(cloud.points, dtype="<f4")
    return PC6_MAGIC + struct.pack("<I", cloud.n) + data.tobytes()


def cloud_from_pc6_bytes(blob: bytes, offset: int = 0) -> tuple[ColoredPointCloud, int]:
    """Parse one PC6 payload starting at offset; returns (cloud, bytes consumed)."""
    if blob[offset:offset + 4] != PC6_MAGIC:
        raise CloudError("bad PC6 magic")
    if len(blob) < offset + 8:
        raise CloudError("truncated PC6 header")
    (n,) = struct.unpack_from("<I", blob, offset + 4)
    body = offset + 8
    nbytes = n * 6 * 4
    if len(blob) < body + nbytes:
        raise CloudError("truncated PC6 payload")
    pts = np.frombuffer(blob[body:body + nbytes], dtype="<f4").reshape(n, 6)
    return ColoredPointCloud(pts.copy()), 8 + nbytes


def write_pc6(cloud: ColoredPointCloud, path: str | Path, text: bool = False) -> None:
    path = Path(path)
    if text:
        with open(path, "w") as f:
            for row in cloud.points:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
    else:
        path.write_bytes(pc6_bytes(cloud))


def read_pc6(path: str | Path) -> ColoredPointCloud:
    """Read a PC6 file; sniffs binary magic, otherwise parses the text twin."""
    blob = Path(path).read_bytes()
    if blob[:4] == PC6_MAGIC:
        cloud, used = cloud_from_pc6_bytes(blob)
        if used != len(blob):
            raise CloudError("trailing bytes after PC6 payload")
        return cloud
    rows = []
    for lineno, line in enumerate(blob.decode("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = line.split()
        if len(vals) != 6:
            raise CloudError(f"line {lineno}: expected 6 values, got {len(vals)}")
        rows.append([float(v) for v in vals])
    if not rows:
        raise CloudError("no points in text cloud file")
    return ColoredPointCloud(np.array(rows, dtype=np.float32))


def write_annotation(ann: PartAnnotation, path: str | Path) -> None:
    """Sidecar: '# id name' header lines, then one integer label per point line."""
    with open(Path(path), "w") as f:
        for part_id in ann.part_ids:
            f.write(f"# {part_id} {ann.names[part_id]}\n")
        for label in ann.labels:
            f.write(f"{int(label)}\n")


def read_annotation(path: str | Path) -> PartAnnotation:
    names: dict[int, str] = {}
    labels: list[int] = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].strip().split(None, 1)
            if len(fields) != 2:
                raise CloudError(f"bad annotation header line: {line!r}")
            names[int(fields[0])] = fields[1]
        else:
            labels.append(int(line))
    return PartAnnotation(labels=np.array(labels, dtype=np.int64), names=names)

"""Edit-triplet dataset synthesis and the on-disk container format.

Color triplets recolor one annotated part per shape; geometry triplets
perturb one shape-program parameter per base shape and align the sampled
pair so row j of the target matches row j of the source. Both carry a
template instruction ("make the {part} {color}", "make the chair legs
longer") plus optional diversified variants.

On disk a dataset is `manifest.json` plus `records.bin`, a concatenation of
length-prefixed records. Generation is a deterministic function of
(seed, config): two runs produce byte-identical records.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .align import align_pair
from .cloud import (
    CloudError,
    ColoredPointCloud,
    PartAnnotation,
    cloud_from_pc6_bytes,
    pc6_bytes,
    read_annotation,
    read_pc6,
)
from .diversify import BATCH_LIMIT, DiversifierClient, diversify_instructions
from .mesh import sample_surface, sample_surface_labeled
from .shapes import (
    CATEGORIES,
    activation_base,
    generate_mesh,
    param_registry,
    perturb_param,
    sample_random_params,
)

log = logging.getLogger(__name__)

DATASET_VERSION = 1
KIND_COLOR = "color"
KIND_GEOMETRY = "geometry"
_KIND_BYTE = {KIND_COLOR: 0, KIND_GEOMETRY: 1}
_BYTE_KIND = {v: k for k, v in _KIND_BYTE.items()}


class DatasetError(ValueError):
    """Invalid triplet, record, or container content."""


@dataclass(frozen=True)
class ColorTable:
    """Named recoloring palette; rgb in [0, 1]."""

    entries: tuple

    def __post_init__(self):
        names = [name for name, _ in self.entries]
        if len(set(names)) != len(names):
            raise DatasetError("duplicate color names")
        if len(names) < 16:
            raise DatasetError("color table needs at least 16 entries")
        for name, rgb in self.entries:
            arr = np.asarray(rgb, dtype=float)
            if arr.shape != (3,) or arr.min() < 0 or arr.max() > 1:
                raise DatasetError(f"bad rgb for {name!r}")

    def __len__(self):
        return len(self.entries)


DEFAULT_COLORS = ColorTable(entries=(
    ("blue", (0.0, 0.0, 1.0)),
    ("red", (1.0, 0.0, 0.0)),
    ("green", (0.0, 0.6, 0.0)),
    ("yellow", (1.0, 0.9, 0.0)),
    ("orange", (1.0, 0.55, 0.0)),
    ("purple", (0.55, 0.0, 0.8)),
    ("pink", (1.0, 0.6, 0.75)),
    ("brown", (0.55, 0.3, 0.1)),
    ("black", (0.05, 0.05, 0.05)),
    ("white", (0.98, 0.98, 0.98)),
    ("gray", (0.5, 0.5, 0.5)),
    ("sky blue", (0.45, 0.75, 0.98)),
    ("navy blue", (0.0, 0.0, 0.45)),
    ("golden", (0.85, 0.65, 0.13)),
    ("silver", (0.75, 0.75, 0.78)),
    ("beige", (0.96, 0.91, 0.8)),
    ("teal", (0.0, 0.5, 0.5)),
    ("maroon", (0.5, 0.0, 0.0)),
    ("olive", (0.5, 0.5, 0.0)),
    ("cyan", (0.0, 0.85, 0.85)),
))


@dataclass(frozen=True)
class EditTriplet:
    """(source cloud, target cloud, instruction variants) record."""

    id: str
    kind: str
    source: ColoredPointCloud
    target: ColoredPointCloud
    instructions: tuple
    category: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KIND_BYTE:
            raise DatasetError(f"bad triplet kind {self.kind!r}")
        if self.source.n != self.target.n:
            raise DatasetError(f"{self.id}: source/target size mismatch")
        if not self.instructions or any(not s for s in self.instructions):
            raise DatasetError(f"{self.id}: empty instruction")
        if self.kind == KIND_COLOR and not np.array_equal(self.source.xyz, self.target.xyz):
            raise DatasetError(f"{self.id}: color edit moved points")
        if self.kind == KIND_GEOMETRY:
            if not (np.all(self.source.rgb == 0.5) and np.all(self.target.rgb == 0.5)):
                raise DatasetError(f"{self.id}: geometry edit must be default gray")
        object.__setattr__(self, "instructions", tuple(self.instructions))


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    counts: dict
    index: list
    seed: int
    config: dict
    config_hash: str
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "version": self.version,
            "counts": self.counts,
            "index": self.index,
            "seed": self.seed,
            "config": self.config,
            "config_hash": self.config_hash,
            "warnings": self.warnings,
        }, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "DatasetManifest":
        d = json.loads(text)
        return DatasetManifest(version=d["version"], counts=d["counts"], index=d["index"],
                               seed=d["seed"], config=d["config"],
                               config_hash=d["config_hash"], warnings=d.get("warnings", []))


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _child_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def native_color_shapes(count: int, seed: int, n_points: int = 1024,
                        categories=CATEGORIES) -> list[tuple[ColoredPointCloud, PartAnnotation, str]]:
    """Sample part-annotated gray clouds from random shape programs."""
    shapes = []
    for i in range(count):
        category = categories[i % len(categories)]
        rng = _child_rng(seed, 101, i)
        params = sample_random_params(category, seed=int(rng.integers(2 ** 31)))
        mesh = generate_mesh(params)
        cloud, ann = sample_surface_labeled(mesh, n_points, seed=int(rng.integers(2 ** 31)),
                                            category=category)
        shapes.append((cloud, ann, category))
    return shapes


def load_annotated_cloud(cloud_path, parts_path, category: str = "shape"):
    """Import a PartNet-style (cloud, part sidecar) pair for color-edit generation."""
    cloud = read_pc6(cloud_path)
    ann = read_annotation(parts_path)
    if len(ann.labels) != cloud.n:
        raise DatasetError("annotation length does not match cloud size")
    return cloud, ann, category


def gen_color_examples(shapes, colors: ColorTable = DEFAULT_COLORS, seed: int = 0,
                       skipped: list | None = None) -> list[EditTriplet]:
    """One triplet per (shape, part): the part recolored to a random table color.

    `shapes` holds (cloud, annotation, category) tuples. Parts with zero
    points are skipped with a warning.
    """
    triplets = []
    for si, (cloud, ann, category) in enumerate(shapes):
        rng = _child_rng(seed, 201, si)
        for part_id in ann.part_ids:
            mask = ann.mask(part_id)
            color_idx = int(rng.integers(len(colors)))
            if not mask.any():
                msg = f"shape {si}: part {ann.names[part_id]!r} has zero points, skipped"
                log.warning(msg)
                if skipped is not None:
                    skipped.append(msg)
                continue
            color_name, rgb = colors.entries[color_idx]
            target_rgb = cloud.rgb.copy()
            target_rgb[mask] = np.asarray(rgb, dtype=np.float32)
            target = cloud.with_rgb(target_rgb)
            instruction = f"make the {ann.names[part_id]} {color_name}"
            triplets.append(EditTriplet(
                id=f"color-{si:04d}-{part_id:02d}",
                kind=KIND_COLOR,
                source=cloud,
                target=target,
                instructions=(instruction,),
                category=category,
                meta={"part": ann.names[part_id], "color": color_name,
                      "part_points": int(mask.sum())},
            ))
    return triplets


def gen_geometry_examples(base_count: int, seed: int = 0, n_points: int = 1024,
                          categories=CATEGORIES,
                          skipped: list | None = None) -> list[EditTriplet]:
    """For each base shape and each editable parameter, one aligned edit pair.

    Output size is base_count x sum of per-category registry sizes unless a
    generation failure forces a skip (recorded in `skipped`). Boolean gates a
    parameter needs to be visible are enabled in both source and target.
    """
    if base_count < 1:
        raise DatasetError("base_count must be >= 1")
    triplets = []
    for category in categories:
        registry = param_registry(category)
        for i in range(base_count):
            rng = _child_rng(seed, 301, CATEGORIES.index(category), i)
            base = sample_random_params(category, seed=int(rng.integers(2 ** 31)))
            for j, spec in enumerate(registry):
                try:
                    adjusted = activation_base(base, spec.name)
                    perturbed, direction = perturb_param(adjusted, spec.name,
                                                         seed=int(rng.integers(2 ** 31)))
                    src_seed = int(rng.integers(2 ** 31))
                    tgt_seed = int(rng.integers(2 ** 31))
                    source = sample_surface(generate_mesh(adjusted), n_points, seed=src_seed)
                    target = sample_surface(generate_mesh(perturbed), n_points, seed=tgt_seed)
                    target = align_pair(source, target)
                except (CloudError, ValueError) as exc:
                    msg = f"{category} base {i} param {spec.name}: generation failed ({exc})"
                    log.warning(msg)
                    if skipped is not None:
                        skipped.append(msg)
                    continue
                instruction = spec.inc_instruction if direction == "inc" else spec.dec_instruction
                triplets.append(EditTriplet(
                    id=f"geom-{category}-{i:04d}-{j:02d}",
                    kind=KIND_GEOMETRY,
                    source=source,
                    target=target,
                    instructions=(instruction,),
                    category=category,
                    meta={"param": spec.name, "direction": direction,
                          "property": spec.property,
                          "old": _json_value(adjusted[spec.name]),
                          "new": _json_value(perturbed[spec.name])},
                ))
    return triplets


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def derive_prompt_pair(t: EditTriplet) -> tuple[str, str]:
    """Caption pair for inversion-based editing, derived from triplet metadata.

    'a chair' -> 'a chair with blue legs' for a color edit; geometry edits
    describe the adjusted property ('a chair with increased seat height').
    """
    src = f"a {t.category}"
    if t.kind == KIND_COLOR:
        if "part" not in t.meta or "color" not in t.meta:
            raise DatasetError(f"{t.id}: color triplet meta lacks part/color for prompts")
        part = t.meta["part"]
        if part.startswith(t.category + " "):
            part = part[len(t.category) + 1:]
        return src, f"a {t.category} with {t.meta['color']} {part}"
    if "direction" not in t.meta or "property" not in t.meta:
        raise DatasetError(f"{t.id}: geometry triplet meta lacks direction/property for prompts")
    word = "increased" if t.meta["direction"] == "inc" else "decreased"
    return src, f"a {t.category} with {word} {t.meta['property']}"


def add_instruction_variants(triplets: list[EditTriplet],
                             client: DiversifierClient | None = None) -> list[EditTriplet]:
    """Extend each triplet's template instruction with 3 diversified variants."""
    out = list(triplets)
    for start in range(0, len(out), BATCH_LIMIT):
        chunk = out[start:start + BATCH_LIMIT]
        mapping = diversify_instructions([t.instructions[0] for t in chunk], client)
        for local, triplet in enumerate(chunk):
            variants = mapping[local]
            out[start + local] = replace(triplet,
                                         instructions=triplet.instructions + tuple(variants))
    return out


# ---------------------------------------------------------------------------
# container format: records.bin + manifest.json
# ---------------------------------------------------------------------------

def _encode_record(t: EditTriplet) -> bytes:
    parts = [
        struct.pack("<H", len(t.id.encode())), t.id.encode(),
        struct.pack("<B", _KIND_BYTE[t.kind]),
        struct.pack("<H", len(t.category.encode())), t.category.encode(),
        struct.pack("<H", len(t.instructions)),
    ]
    for text in t.instructions:
        raw = text.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(pc6_bytes(t.source))
    parts.append(pc6_bytes(t.target))
    meta = json.dumps(t.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    payload = b"".join(parts)
    return struct.pack("<I", len(payload)) + payload


def _decode_record(payload: bytes) -> EditTriplet:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(payload):
            raise DatasetError("record payload truncated")
        out = payload[pos:pos + n]
        pos += n
        return out

    (id_len,) = struct.unpack("<H", take(2))
    rec_id = take(id_len).decode("utf-8")
    kind = _BYTE_KIND.get(take(1)[0])
    if kind is None:
        raise DatasetError(f"record {rec_id}: bad kind byte")
    (cat_len,) = struct.unpack("<H", take(2))
    category = take(cat_len).decode("utf-8")
    (n_instr,) = struct.unpack("<H", take(2))
    instructions = []
    for _ in range(n_instr):
        (slen,) = struct.unpack("<H", take(2))
        instructions.append(take(slen).decode("utf-8"))
    source, used = cloud_from_pc6_bytes(payload, pos)
    pos += used
    target, used = cloud_from_pc6_bytes(payload, pos)
    pos += used
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8"))
    return EditTriplet(id=rec_id, kind=kind, source=source, target=target,
                       instructions=tuple(instructions), category=category, meta=meta)


def _count_triplets(triplets) -> dict:
    counts: dict = {}
    for t in triplets:
        counts.setdefault(t.kind, {})
        counts[t.kind][t.category] = counts[t.kind].get(t.category, 0) + 1
    return counts


def write_dataset(triplets: list[EditTriplet], path, seed: int = 0,
                  config: dict | None = None, warnings: list | None = None) -> DatasetManifest:
    """Write manifest.json + records.bin; returns the manifest."""
    if not triplets:
        raise DatasetError("refusing to write an empty dataset")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    config = config or {}
    index = []
    offset = 0
    with open(path / "records.bin", "wb") as f:
        for t in triplets:
            blob = _encode_record(t)
            index.append({"id": t.id, "offset": offset, "length": len(blob)})
            f.write(blob)
            offset += len(blob)
    manifest = DatasetManifest(version=DATASET_VERSION, counts=_count_triplets(triplets),
                               index=index, seed=seed, config=config,
                               config_hash=config_hash(config),
                               warnings=list(warnings or []))
    (path / "manifest.json").write_text(manifest.to_json())
    return manifest


def read_dataset(path) -> tuple[list[EditTriplet], DatasetManifest]:
    path = Path(path)
    manifest = DatasetManifest.from_json((path / "manifest.json").read_text())
    if manifest.version != DATASET_VERSION:
        raise DatasetError(f"unsupported dataset version {manifest.version}")
    blob = (path / "records.bin").read_bytes()
    total = sum(sum(per.values()) for per in manifest.counts.values())
    if total != len(manifest.index):
        raise DatasetError("manifest counts do not match index length")
    triplets = []
    for entry in manifest.index:
        off, length, rec_id = entry["offset"], entry["length"], entry["id"]
        try:
            if off + length > len(blob):
                raise DatasetError("record extends past end of file")
            (payload_len,) = struct.unpack_from("<I", blob, off)
            if payload_len + 4 != length:
                raise DatasetError("length prefix disagrees with index")
            triplet = _decode_record(blob[off + 4:off + length])
            if triplet.id != rec_id:
                raise DatasetError("record id disagrees with index")
        except (DatasetError, CloudError, struct.error, json.JSONDecodeError,
                UnicodeDecodeError) as exc:
            raise DatasetError(f"corrupt record {rec_id}: {exc}") from exc
        triplets.append(triplet)
    return triplets, manifest


def generate_dataset(color_shapes: int, geom_bases: int, seed: int,
                     n_points: int = 1024, diversify: str = "offline",
                     client: DiversifierClient | None = None,
                     categories=CATEGORIES) -> tuple[list[EditTriplet], dict, list]:
    """Full pipeline: color + geometry triplets, optional diversification.

    Returns (triplets, config dict, warnings). The config + seed reproduce
    the dataset exactly.
    """
    if diversify not in ("llm", "offline", "none"):
        raise DatasetError(f"bad diversify mode {diversify!r}")
    warnings: list = []
    triplets: list[EditTriplet] = []
    if color_shapes > 0:
        shapes = native_color_shapes(color_shapes, seed=seed, n_points=n_points,
                                     categories=categories)
        triplets += gen_color_examples(shapes, DEFAULT_COLORS, seed=seed, skipped=warnings)
    if geom_bases > 0:
        triplets += gen_geometry_examples(geom_bases, seed=seed, n_points=n_points,
                                          categories=categories, skipped=warnings)
    if diversify == "offline":
        triplets = add_instruction_variants(triplets, client=None)
    elif diversify == "llm":
        triplets = add_instruction_variants(triplets, client=client or DiversifierClient())
    config = {"color_shapes": color_shapes, "geom_bases": geom_bases,
              "n_points": n_points, "diversify": diversify,
              "categories": list(categories)}
    return triplets, config, warnings

"""On-disk artifact formats other than heightmaps.

Every JSON artifact carries ``schema_version`` and is written with sorted
keys, fixed indentation and shortest round-trip floats, so identical inputs
give byte-identical files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .annotate import AnnotationSet, InstanceRaster
from .craters import CraterSpec
from .dem import header_path, read_header
from .errors import DimensionMismatchError, HeaderError, UnreadableFileError
from .forge import PlacementManifest

ARTIFACT_SCHEMA_VERSION = 1
RAW_U32 = "raw-u32"


def _dump(path: Path, doc: dict) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UnreadableFileError(f"cannot write {path}: {exc}") from exc


def _load(path: str | os.PathLike, kind: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UnreadableFileError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        raise HeaderError(f"{path}: not a {kind} file")
    if doc.get("schema_version") != ARTIFACT_SCHEMA_VERSION:
        raise HeaderError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    return doc


def write_craters(path: str | os.PathLike, craters: list[CraterSpec], master_seed: int) -> None:
    _dump(Path(path), {
        "kind": "craters",
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "master_seed": master_seed,
        "craters": [c.to_record() for c in craters],
    })


def read_craters(path: str | os.PathLike) -> list[CraterSpec]:
    return [CraterSpec.from_record(r) for r in _load(path, "craters")["craters"]]


def manifest_document(manifest: PlacementManifest) -> dict:
    return {
        "kind": "placement-manifest",
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "seed_record": {"master_seed": manifest.master_seed, "stage_labels": list(manifest.stage_labels)},
        "instances": [
            {"asset_id": a, "x": x, "y": y, "z": z, "yaw": yaw, "scale": s}
            for a, x, y, z, yaw, s in manifest.instances
        ],
    }


def write_manifest(path: str | os.PathLike, manifest: PlacementManifest) -> None:
    _dump(Path(path), manifest_document(manifest))


def read_manifest(path: str | os.PathLike) -> PlacementManifest:
    doc = _load(path, "placement-manifest")
    inst = doc["instances"]
    cols = {k: np.array([r[k] for r in inst], dtype=np.float64) for k in ("x", "y", "z", "yaw", "scale")}
    seed = doc["seed_record"]
    return PlacementManifest(tuple(r["asset_id"] for r in inst), master_seed=seed["master_seed"],
                             stage_labels=tuple(seed["stage_labels"]), **cols)


def write_annotations(path: str | os.PathLike, annotations: AnnotationSet, raster: InstanceRaster,
                      master_seed: int) -> None:
    _dump(Path(path), {
        "kind": "annotations",
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "master_seed": master_seed,
        "raster": {"width": raster.width, "height": raster.height, "resolution_m_per_px": raster.resolution,
                   "origin": "row 0 = south edge (y = 0)"},
        "instances": [a.to_record() for a in annotations],
    })


def read_annotations(path: str | os.PathLike) -> list[dict]:
    return _load(path, "annotations")["instances"]


def save_instance_raster(raster: InstanceRaster, path: str | os.PathLike) -> None:
    """Little-endian uint32 rows (row 0 = south) plus a ``.hdr`` sidecar."""
    path = Path(path)
    fields = {"format": RAW_U32, "width": raster.width, "height": raster.height,
              "resolution_m_per_px": repr(raster.resolution)}
    try:
        path.write_bytes(raster.ids.astype("<u4").tobytes())
        header_path(path).write_text("".join(f"{k} = {v}\n" for k, v in fields.items()))
    except OSError as exc:
        raise UnreadableFileError(f"cannot write {path}: {exc}") from exc


def load_instance_raster(path: str | os.PathLike) -> InstanceRaster:
    fields = read_header(path)
    if fields.get("format") != RAW_U32:
        raise HeaderError(f"{path}: expected format {RAW_U32}")
    try:
        w, h = int(fields["width"]), int(fields["height"])
        res = float(fields["resolution_m_per_px"])
    except (KeyError, ValueError) as exc:
        raise HeaderError(f"{path}: bad header field: {exc}") from None
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    if len(data) != 4 * w * h:
        raise DimensionMismatchError(f"{path}: {len(data)} bytes for {w}x{h} uint32")
    return InstanceRaster(np.frombuffer(data, "<u4").reshape(h, w), res)


def save_grayscale_png(image: np.ndarray, path: str | os.PathLike) -> None:
    """8-bit grayscale PNG, flipped so north is up."""
    try:
        Image.fromarray(np.ascontiguousarray(np.flipud(image).astype(np.uint8))).save(path, format="PNG")
    except OSError as exc:
        raise UnreadableFileError(f"cannot write {path}: {exc}") from exc

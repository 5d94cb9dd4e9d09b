#!/usr/bin/env python3
"""
Dataset manifests and lighting-weights files

Both are JSON. Manifest paths are stored relative to the manifest's own
directory so a dataset can be moved as a whole.
"""

import os
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from olat_relight.core.errors import ManifestError
from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage, load_image, load_mask, save_image
from olat_relight.core.probe import DEFAULT_NOISE_FLOOR, BasisFootprint, LatLongMap, LightingWeights, footprint_from_probe
from olat_relight.core.relight import ReflectanceField
from olat_relight.utils.fs_utils import atomic_write_text, ensure_directory

logger = logging.getLogger(__name__)

FIELD_MANIFEST_NAME = "field.json"


@dataclass
class BasisEntry:
    id: int
    olat: str
    probe: Optional[str] = None


@dataclass
class ExemplarEntry:
    pose: str
    olats: List[str]
    relit: Optional[str] = None


def _require(data: Dict[str, Any], key: str, kind, where: str):
    if key not in data:
        raise ManifestError(f"{where}: missing key '{key}'")
    value = data[key]
    if not isinstance(value, kind):
        raise ManifestError(f"{where}: '{key}' has the wrong type")
    return value


def _optional_path(data: Dict[str, Any], key: str, where: str) -> Optional[str]:
    value = data.get(key)
    if value is not None and not isinstance(value, str):
        raise ManifestError(f"{where}: '{key}' must be a path or null")
    return value


@dataclass
class DatasetManifest:
    """
    Capture dataset description

    Attributes:
        root: Directory that relative paths are resolved against
        dims: Image dimensions of every OLAT and frame
        basis: Basis entries sorted by id
        exemplars: Exemplar poses
        interview_probe: Lat-long probe of the interview lighting
        mask_dir: Directory of subject masks
    """

    root: str
    dims: ImageDims
    basis: List[BasisEntry]
    exemplars: List[ExemplarEntry] = field(default_factory=list)
    interview_probe: Optional[str] = None
    mask_dir: Optional[str] = None

    def __post_init__(self):
        self.basis = sorted(self.basis, key=lambda entry: entry.id)
        ids = [entry.id for entry in self.basis]
        if not ids:
            raise ManifestError("Manifest has no basis entries")
        if ids != list(range(len(ids))):
            raise ManifestError(f"Basis ids must be exactly 0..{len(ids) - 1}, got {ids}")
        for ex in self.exemplars:
            if len(ex.olats) != len(ids):
                raise ManifestError(
                    f"Exemplar {ex.pose} lists {len(ex.olats)} OLATs for {len(ids)} basis conditions"
                )

    @property
    def basis_ids(self) -> List[int]:
        return [entry.id for entry in self.basis]

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.root, path))

    def referenced_paths(self) -> List[str]:
        paths = []
        for entry in self.basis:
            paths.append(entry.olat)
            if entry.probe:
                paths.append(entry.probe)
        for ex in self.exemplars:
            paths.extend(ex.olats)
            if ex.relit:
                paths.append(ex.relit)
        for extra in (self.interview_probe, self.mask_dir):
            if extra:
                paths.append(extra)
        return paths

    @classmethod
    def load(cls, path: str) -> "DatasetManifest":
        """
        Load and validate a manifest

        Args:
            path: Manifest file

        Returns:
            The manifest, with every referenced path checked for existence
        """
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(data, dict):
            raise ManifestError(f"{path}: top level must be an object")

        dims = _require(data, "dims", list, path)
        if len(dims) != 2 or not all(isinstance(d, int) and d > 0 for d in dims):
            raise ManifestError(f"{path}: dims must be [W, H] positive integers")

        basis = []
        for i, raw in enumerate(_require(data, "basis", list, path)):
            where = f"{path}: basis[{i}]"
            if not isinstance(raw, dict):
                raise ManifestError(f"{where} must be an object")
            basis.append(BasisEntry(
                id=_require(raw, "id", int, where),
                olat=_require(raw, "olat", str, where),
                probe=_optional_path(raw, "probe", where),
            ))

        exemplars = []
        for i, raw in enumerate(data.get("exemplars") or []):
            where = f"{path}: exemplars[{i}]"
            if not isinstance(raw, dict):
                raise ManifestError(f"{where} must be an object")
            olats = _require(raw, "olats", list, where)
            if not all(isinstance(p, str) for p in olats):
                raise ManifestError(f"{where}: olats must be paths")
            exemplars.append(ExemplarEntry(
                pose=str(_require(raw, "pose", str, where)),
                olats=olats,
                relit=_optional_path(raw, "relit", where),
            ))

        manifest = cls(
            root=os.path.dirname(os.path.abspath(path)),
            dims=ImageDims(dims[0], dims[1]),
            basis=basis,
            exemplars=exemplars,
            interview_probe=_optional_path(data, "interview_probe", path),
            mask_dir=_optional_path(data, "mask_dir", path),
        )
        missing = [p for p in manifest.referenced_paths() if not os.path.exists(manifest.resolve(p))]
        if missing:
            raise ManifestError(f"{path}: unresolvable paths {missing}")
        logger.debug(f"Loaded manifest {path}: {len(basis)} basis conditions, {len(exemplars)} exemplars")
        return manifest

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dims": [self.dims.width, self.dims.height],
            "basis": [{"id": e.id, "olat": e.olat, "probe": e.probe} for e in self.basis],
            "exemplars": [{"pose": e.pose, "olats": list(e.olats), "relit": e.relit} for e in self.exemplars],
            "interview_probe": self.interview_probe,
            "mask_dir": self.mask_dir,
        }

    def save(self, path: str) -> None:
        """Write the manifest atomically"""
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    def _load_images(self, paths: Sequence[str]) -> List[ImageF]:
        return [load_image(self.resolve(p)) for p in paths]

    def load_field(self) -> ReflectanceField:
        """The basis reflectance field in basis-id order"""
        field = ReflectanceField.from_images(
            self._load_images([e.olat for e in self.basis]), self.basis_ids
        )
        if field.dims != self.dims:
            raise ManifestError(f"OLAT images are {field.dims}, manifest says {self.dims}")
        return field

    def load_footprints(self, noise_floor: float = DEFAULT_NOISE_FLOOR) -> List[BasisFootprint]:
        """Footprints of every basis condition from its lat-long probe"""
        footprints = []
        for entry in self.basis:
            if not entry.probe:
                raise ManifestError(f"Basis condition {entry.id} has no probe")
            probe = LatLongMap(load_image(self.resolve(entry.probe)))
            footprints.append(footprint_from_probe(probe, noise_floor))
        return footprints

    def load_exemplar_fields(self) -> List[ReflectanceField]:
        return [
            ReflectanceField.from_images(self._load_images(ex.olats), self.basis_ids)
            for ex in self.exemplars
        ]

    def load_interview_probe(self) -> LatLongMap:
        if not self.interview_probe:
            raise ManifestError("Manifest has no interview probe")
        return LatLongMap(load_image(self.resolve(self.interview_probe)))

    def load_mask(self, name: str) -> MaskImage:
        if not self.mask_dir:
            raise ManifestError("Manifest has no mask directory")
        return load_mask(os.path.join(self.resolve(self.mask_dir), name))


def save_field(field: ReflectanceField, out_dir: str) -> str:
    """
    Write a field as olat_KKK.pfm images plus a basis-only manifest

    Args:
        field: Reflectance field
        out_dir: Output directory, created if missing

    Returns:
        Path of the written manifest
    """
    ensure_directory(out_dir)
    entries = []
    for k, basis_id in enumerate(field.basis_ids):
        name = f"olat_{basis_id:03d}.pfm"
        save_image(field.image(k), os.path.join(out_dir, name))
        entries.append(BasisEntry(basis_id, name, None))
    manifest = DatasetManifest(root=os.path.abspath(out_dir), dims=field.dims, basis=entries)
    path = os.path.join(out_dir, FIELD_MANIFEST_NAME)
    manifest.save(path)
    return path


def load_weights(path: str) -> LightingWeights:
    """
    Read a weights file

    Args:
        path: JSON file with basis_ids and an N x 3 weights list

    Returns:
        The lighting weights
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: top level must be an object")
    ids = _require(data, "basis_ids", list, path)
    rows = _require(data, "weights", list, path)
    if len(ids) != len(rows):
        raise ManifestError(f"{path}: {len(ids)} basis ids for {len(rows)} weight rows")
    for row in rows:
        if not isinstance(row, list) or len(row) != 3:
            raise ManifestError(f"{path}: every weight row must be [r, g, b]")
    return LightingWeights([[float(v) for v in row] for row in rows], tuple(int(i) for i in ids))


def save_weights(w: LightingWeights, path: str) -> None:
    """Write a weights file; json floats use repr so re-reading is exact"""
    data = {
        "basis_ids": list(w.basis_ids),
        "weights": [[float(v) for v in row] for row in w.weights],
    }
    atomic_write_text(path, json.dumps(data, indent=2) + "\n")

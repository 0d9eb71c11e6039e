"""Training-corpus synthesis: sample Gaussian z, map to w, render, persist.

Each entry is a (z, w, image) triple on disk. Vectors use a 16-byte-header
little-endian float32 binary format; images are 8-bit PNGs of the [0, 1]
mapping. The JSON manifest is written last as the atomic completion marker
and carries SHA-256 hashes of every file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import BackendHandles, generate, map_z_to_w
from .core import LATENT_DIM, from_unit_range, to_unit_range, validate_image
from .errors import EmptyDatasetError, IoError

VEC_MAGIC = b"CFV1"
SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


def write_vector(path: Path, values: np.ndarray):
    values = np.asarray(values, dtype="<f4")
    header = VEC_MAGIC + struct.pack("<I", values.shape[0]) + b"\x00" * 8
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())


def read_vector(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != VEC_MAGIC:
            raise IoError(f"{path} is not a vector file")
        (dim,) = struct.unpack("<I", header[4:8])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.shape[0] != dim:
        raise IoError(f"{path}: header claims {dim} values, found {data.shape[0]}")
    return data.astype(np.float32)


def save_image_png(path: Path, img: torch.Tensor):
    """Persist a [-1, 1] CHW image as an 8-bit PNG."""
    validate_image(img)
    unit = to_unit_range(img.detach()).clamp(0, 1)
    arr = (unit * 255.0).round().to(torch.uint8).permute(1, 2, 0).numpy()
    Image.fromarray(arr, mode="RGB").save(path)


def load_image_png(path: Path) -> torch.Tensor:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc
    return from_unit_range(torch.from_numpy(arr).permute(2, 0, 1))


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class ManifestEntry:
    index: int
    z_file: str
    w_file: str
    image_file: str
    z_sha256: str
    w_sha256: str
    image_sha256: str


@dataclass
class DatasetManifest:
    seed: int
    count: int
    resolution: int
    backend_kind: str
    entries: list[ManifestEntry] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    root: Path | None = None

    def save(self, out_dir: Path):
        payload = {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "count": self.count,
            "resolution": self.resolution,
            "backend_kind": self.backend_kind,
            "entries": [vars(e) for e in self.entries],
        }
        with open(out_dir / MANIFEST_NAME, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, root: Path) -> "DatasetManifest":
        path = Path(root) / MANIFEST_NAME
        if not path.exists():
            raise IoError(f"no manifest at {path}")
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            seed=payload["seed"],
            count=payload["count"],
            resolution=payload["resolution"],
            backend_kind=payload["backend_kind"],
            entries=[ManifestEntry(**e) for e in payload["entries"]],
            schema_version=payload["schema_version"],
            root=Path(root),
        )

    def verify_files(self):
        """Re-hash every referenced file; raises IoError on any mismatch."""
        if self.root is None:
            raise IoError("manifest has no root directory")
        for e in self.entries:
            for rel, want in ((e.z_file, e.z_sha256), (e.w_file, e.w_sha256),
                              (e.image_file, e.image_sha256)):
                path = self.root / rel
                if not path.exists():
                    raise IoError(f"missing dataset file {path}")
                got = _sha256(path)
                if got != want:
                    raise IoError(f"hash mismatch for {path}: {got} != {want}")

    def entry_image(self, entry: ManifestEntry) -> torch.Tensor:
        return load_image_png(self.root / entry.image_file)

    def entry_w(self, entry: ManifestEntry) -> np.ndarray:
        return read_vector(self.root / entry.w_file)


def sample_z(seed: int, index: int) -> np.ndarray:
    """Per-entry Gaussian stream: deterministic and order-independent."""
    rng = np.random.default_rng([seed, index])
    return rng.standard_normal(LATENT_DIM).astype(np.float32)


def forge(count: int, seed: int, handles: BackendHandles, out_dir: Path,
          backend_kind: str = "toy") -> DatasetManifest:
    """Render `count` (z, w, image) triples; manifest written last.

    Each entry is forwarded individually so the output is byte-identical no
    matter how rendering is chunked or parallelized by callers.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(seed=seed, count=count, resolution=handles.resolution,
                               backend_kind=backend_kind, root=out_dir)
    for i in range(count):
        z = sample_z(seed, i)
        with torch.no_grad():
            w = map_z_to_w(handles.mapping, torch.from_numpy(z))
            img = generate(handles.generator, w)
        z_file, w_file, img_file = f"z_{i:06d}.vec", f"w_{i:06d}.vec", f"img_{i:06d}.png"
        write_vector(out_dir / z_file, z)
        write_vector(out_dir / w_file, w.numpy())
        save_image_png(out_dir / img_file, img)
        manifest.entries.append(ManifestEntry(
            index=i, z_file=z_file, w_file=w_file, image_file=img_file,
            z_sha256=_sha256(out_dir / z_file),
            w_sha256=_sha256(out_dir / w_file),
            image_sha256=_sha256(out_dir / img_file),
        ))
    manifest.save(out_dir)
    return manifest


def sample_pair(manifest: DatasetManifest, same: bool,
                rng: np.random.Generator) -> tuple[ManifestEntry, ManifestEntry]:
    """Draw an (identity, pose) entry pair with replacement."""
    if not manifest.entries:
        raise EmptyDatasetError("cannot sample from an empty dataset")
    i = int(rng.integers(len(manifest.entries)))
    if same:
        return manifest.entries[i], manifest.entries[i]
    j = int(rng.integers(len(manifest.entries)))
    return manifest.entries[i], manifest.entries[j]

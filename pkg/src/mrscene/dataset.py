"""Sample storage, manifests, and the deterministic synthetic generator.

Binary sample layout (all integers and floats little-endian):

    magic "MRS1" | version u16 | K u16
    per subset:  band_count u32, H u32, W u32, band*H*W float32
                 (band-major, then row-major)
    labels:      C u32, C bytes of {0,1}

The synthetic generator stands in for a large multi-resolution archive:
each class owns a per-band spectral signature and a footprint measured in
cells of a 4x4 patch grid; every image paints 1..4 non-overlapping class
regions aligned to that grid into all K resolutions, then adds Gaussian
noise. Identical (seed, parameters) produce byte-identical output.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    FormatError,
    ManifestMismatchError,
    TruncatedFileError,
    UsageError,
)

MAGIC = b"MRS1"
FORMAT_VERSION = 1

# regions are aligned to this many cells per image side (16 patches)
GRID = 4

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Sample:
    """One scene: K resolution-grouped band stacks plus a binary label vector."""

    subsets: list
    labels: np.ndarray
    id: str

    def n_bands_total(self) -> int:
        return sum(s.shape[0] for s in self.subsets)


@dataclass
class SyntheticProfile:
    name: str
    subset_shapes: list  # (bands, H, W) per resolution group
    default_classes: int
    max_classes: int


PROFILES = {
    "tiny": SyntheticProfile("tiny", [(4, 24, 24), (6, 12, 12), (2, 4, 4)], 8, 16),
    "bigearthnet-shaped": SyntheticProfile(
        "bigearthnet-shaped", [(4, 120, 120), (6, 60, 60), (2, 20, 20)], 43, 43
    ),
}


@dataclass
class DatasetManifest:
    n_subsets: int
    subset_shapes: list
    n_classes: int
    class_names: list
    splits: dict
    seed: int = 0
    noise: float = 0.0
    profile: str = ""

    def all_ids(self) -> list:
        return [sid for name in SPLIT_NAMES for sid in self.splits.get(name, [])]

    def to_json(self) -> str:
        payload = {
            "n_subsets": self.n_subsets,
            "subset_shapes": [list(s) for s in self.subset_shapes],
            "n_classes": self.n_classes,
            "class_names": self.class_names,
            "splits": self.splits,
            "seed": self.seed,
            "noise": self.noise,
            "profile": self.profile,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
        try:
            return cls(
                n_subsets=payload["n_subsets"],
                subset_shapes=[tuple(s) for s in payload["subset_shapes"]],
                n_classes=payload["n_classes"],
                class_names=payload["class_names"],
                splits=payload["splits"],
                seed=payload.get("seed", 0),
                noise=payload.get("noise", 0.0),
                profile=payload.get("profile", ""),
            )
        except KeyError as exc:
            raise FormatError(f"manifest missing field {exc}") from exc

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def write_sample(path, sample: Sample):
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<HH", FORMAT_VERSION, len(sample.subsets))
    for arr in sample.subsets:
        bands, h, w = arr.shape
        blob += struct.pack("<III", bands, h, w)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    labels = np.asarray(sample.labels, dtype=np.uint8)
    blob += struct.pack("<I", labels.size)
    blob += labels.tobytes()
    Path(path).write_bytes(bytes(blob))


def _take(buf: memoryview, n: int, path, what: str) -> memoryview:
    if len(buf) < n:
        raise TruncatedFileError(f"{path}: file ends inside {what}")
    return buf[:n]


def read_sample(path, manifest: DatasetManifest = None) -> Sample:
    """Read one MRS1 file; optionally validate shapes against a manifest."""
    raw = memoryview(Path(path).read_bytes())
    if bytes(_take(raw, 4, path, "magic")) != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}")
    raw = raw[4:]
    version, n_subsets = struct.unpack("<HH", _take(raw, 4, path, "header"))
    raw = raw[4:]
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    subsets = []
    for k in range(n_subsets):
        bands, h, w = struct.unpack("<III", _take(raw, 12, path, f"subset {k} header"))
        raw = raw[12:]
        nbytes = bands * h * w * 4
        arr = np.frombuffer(_take(raw, nbytes, path, f"subset {k} data"), dtype="<f4")
        subsets.append(arr.reshape(bands, h, w).copy())
        raw = raw[nbytes:]
    (n_classes,) = struct.unpack("<I", _take(raw, 4, path, "label header"))
    raw = raw[4:]
    labels = np.frombuffer(_take(raw, n_classes, path, "labels"), dtype=np.uint8).copy()
    if len(raw) != n_classes:
        raise FormatError(f"{path}: trailing bytes after labels")
    if labels.size and labels.max() > 1:
        raise FormatError(f"{path}: labels must be 0/1 bytes")
    sample = Sample(subsets=subsets, labels=labels, id=Path(path).stem)
    if manifest is not None:
        _check_against_manifest(sample, manifest, path)
    return sample


def _check_against_manifest(sample: Sample, manifest: DatasetManifest, path):
    shapes = [s.shape for s in sample.subsets]
    expected = [tuple(s) for s in manifest.subset_shapes]
    if shapes != expected:
        raise ManifestMismatchError(f"{path}: subset shapes {shapes} != manifest {expected}")
    if sample.labels.size != manifest.n_classes:
        raise ManifestMismatchError(
            f"{path}: {sample.labels.size} labels != manifest n_classes {manifest.n_classes}"
        )
    if sample.labels.sum() < 1:
        raise ManifestMismatchError(f"{path}: a valid sample carries at least one positive label")


def split_counts(n: int, fractions=(0.6, 0.2, 0.2)) -> tuple:
    """Floor each split, then hand leftovers to the largest fractional parts
    (ties resolved in train, val, test order). 64 samples -> 38/13/13."""
    quotas = [n * f for f in fractions]
    counts = [int(q) for q in quotas]
    leftovers = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in range(leftovers):
        counts[order[i % len(counts)]] += 1
    return tuple(counts)


def class_signatures(rng: np.random.Generator, n_classes: int, n_bands: int) -> np.ndarray:
    """Per-class per-band means, kept away from the zero background."""
    magnitude = rng.uniform(0.3, 1.0, size=(n_classes, n_bands))
    sign = rng.choice([-1.0, 1.0], size=(n_classes, n_bands))
    return magnitude * sign


def _render_sample(rng, profile: SyntheticProfile, signatures, footprints, n_classes, noise):
    n_regions = int(rng.integers(1, 5))
    classes = rng.choice(n_classes, size=min(n_regions, n_classes), replace=False)
    occupied = np.zeros((GRID, GRID), dtype=bool)
    placed = []  # (class, row0, col0, rows, cols) in grid cells
    for c in classes:
        fh, fw = footprints[c]
        for _ in range(8):
            r0 = int(rng.integers(0, GRID - fh + 1))
            c0 = int(rng.integers(0, GRID - fw + 1))
            if not occupied[r0 : r0 + fh, c0 : c0 + fw].any():
                occupied[r0 : r0 + fh, c0 : c0 + fw] = True
                placed.append((int(c), r0, c0, fh, fw))
                break
    subsets = []
    band_offset = 0
    for bands, h, w in profile.subset_shapes:
        arr = np.zeros((bands, h, w), dtype=np.float32)
        ch, cw = h // GRID, w // GRID
        for c, r0, c0, fh, fw in placed:
            sig = signatures[c, band_offset : band_offset + bands]
            arr[:, r0 * ch : (r0 + fh) * ch, c0 * cw : (c0 + fw) * cw] = sig[:, None, None]
        if noise > 0:
            arr += rng.normal(0.0, noise, size=arr.shape).astype(np.float32)
        subsets.append(arr)
        band_offset += bands
    labels = np.zeros(n_classes, dtype=np.uint8)
    for c, *_ in placed:
        labels[c] = 1
    return subsets, labels


def generate_synthetic(
    out_dir,
    seed: int,
    n_samples: int,
    profile: str = "tiny",
    noise: float = 0.1,
    n_classes: int = None,
    split_fractions=(0.6, 0.2, 0.2),
) -> DatasetManifest:
    """Write a synthetic dataset (samples + manifest.json) under out_dir."""
    if n_samples < 1:
        raise UsageError(f"n_samples must be >= 1, got {n_samples}")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    prof = PROFILES[profile]
    if n_classes is None:
        n_classes = prof.default_classes
    if not 1 <= n_classes <= prof.max_classes:
        raise ConfigError(f"profile {profile!r} supports 1..{prof.max_classes} classes, got {n_classes}")
    for bands, h, w in prof.subset_shapes:
        if h % GRID or w % GRID:
            raise ConfigError(f"subset {bands}x{h}x{w} not divisible by the {GRID}x{GRID} grid")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    n_bands = sum(s[0] for s in prof.subset_shapes)
    signatures = class_signatures(rng, n_classes, n_bands)
    footprints = rng.integers(1, 3, size=(n_classes, 2))

    ids = []
    for i in range(n_samples):
        subsets, labels = _render_sample(rng, prof, signatures, footprints, n_classes, noise)
        sid = f"{profile}-{i:05d}"
        write_sample(out / f"{sid}.mrs", Sample(subsets=subsets, labels=labels, id=sid))
        ids.append(sid)

    counts = split_counts(n_samples, split_fractions)
    order = rng.permutation(n_samples)
    splits = {}
    start = 0
    for name, count in zip(SPLIT_NAMES, counts):
        splits[name] = [ids[j] for j in order[start : start + count]]
        start += count

    manifest = DatasetManifest(
        n_subsets=len(prof.subset_shapes),
        subset_shapes=[tuple(s) for s in prof.subset_shapes],
        n_classes=n_classes,
        class_names=[f"class_{c:02d}" for c in range(n_classes)],
        splits=splits,
        seed=seed,
        noise=noise,
        profile=profile,
    )
    manifest.save(out / "manifest.json")
    return manifest


def load_split(manifest: DatasetManifest, split: str, root) -> list:
    """All samples of a split, in manifest order, validated against it."""
    if split not in manifest.splits:
        raise UsageError(f"unknown split {split!r}; manifest has {sorted(manifest.splits)}")
    root = Path(root)
    return [read_sample(root / f"{sid}.mrs", manifest) for sid in manifest.splits[split]]


def dataset_signatures(manifest: DatasetManifest) -> np.ndarray:
    """Re-derive the generator's class signatures from the manifest seed."""
    rng = np.random.Generator(np.random.PCG64(manifest.seed))
    n_bands = sum(s[0] for s in manifest.subset_shapes)
    return class_signatures(rng, manifest.n_classes, n_bands)

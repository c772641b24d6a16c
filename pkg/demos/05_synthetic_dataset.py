"""The synthetic multi-resolution dataset: generation, format, separability.

Each class owns a per-band spectral signature and a footprint on the 4x4
patch grid; images paint 1..4 non-overlapping class regions into all
resolution groups and add Gaussian noise. Labels are the placed classes.
"""

import tempfile
from pathlib import Path

import numpy as np

from mrscene.dataset import (
    dataset_signatures,
    generate_synthetic,
    load_split,
    read_sample,
)

root = Path(tempfile.mkdtemp(prefix="mrscene-demo-")) / "data"

print("== generation is deterministic ==")
manifest = generate_synthetic(root, seed=42, n_samples=64, profile="tiny", noise=0.1)
print(f"wrote {sum(len(v) for v in manifest.splits.values())} samples under {root}")
print(f"splits: { {k: len(v) for k, v in manifest.splits.items()} }")
print(f"subset shapes: {manifest.subset_shapes}, classes: {manifest.n_classes}")

print("\n== the binary sample format round-trips bit-exactly ==")
sid = manifest.splits["train"][0]
sample = read_sample(root / f"{sid}.mrs", manifest)
again = read_sample(root / f"{sid}.mrs", manifest)
print(f"sample {sid}: labels {np.flatnonzero(sample.labels).tolist()}, "
      f"identical on re-read: {all(np.array_equal(a, b) for a, b in zip(sample.subsets, again.subsets))}")

print("\n== class structure is visible in patch means ==")
signatures = dataset_signatures(manifest)
cells = []
for g in range(4):
    for h in range(4):
        means = []
        for arr in sample.subsets:
            ch, cw = arr.shape[1] // 4, arr.shape[2] // 4
            means.append(arr[:, g * ch : (g + 1) * ch, h * cw : (h + 1) * cw].mean(axis=(1, 2)))
        cells.append(np.concatenate(means))
candidates = np.vstack([np.zeros(signatures.shape[1]), signatures])
assignments = [int(np.argmin(np.linalg.norm(candidates - cell, axis=1))) - 1 for cell in cells]
print("nearest signature per grid cell (-1 = background):")
for g in range(4):
    print("  " + " ".join(f"{assignments[4 * g + h]:3d}" for h in range(4)))
print(f"classes found: {sorted(set(a for a in assignments if a >= 0))}, "
      f"true labels: {np.flatnonzero(sample.labels).tolist()}")

print("\n== noise-free data is perfectly separable ==")
clean = generate_synthetic(root.parent / "clean", seed=7, n_samples=12, profile="tiny", noise=0.0)
ok = True
for s in load_split(clean, "train", root.parent / "clean"):
    sig = dataset_signatures(clean)
    cand = np.vstack([np.zeros(sig.shape[1]), sig])
    found = set()
    for g in range(4):
        for h in range(4):
            means = [arr[:, g * arr.shape[1] // 4 : (g + 1) * arr.shape[1] // 4,
                         h * arr.shape[2] // 4 : (h + 1) * arr.shape[2] // 4].mean(axis=(1, 2))
                     for arr in s.subsets]
            nearest = int(np.argmin(np.linalg.norm(cand - np.concatenate(means), axis=1)))
            if nearest:
                found.add(nearest - 1)
    ok = ok and found == set(np.flatnonzero(s.labels))
print(f"nearest-signature classifier recovers every label set: {ok}")

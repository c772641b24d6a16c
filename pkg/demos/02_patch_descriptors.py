"""From a multi-resolution scene to one descriptor per patch.

The image's band groups (one per ground resolution) are tiled into the
same 4x4 grid of patches; each group runs through its own conv branch,
branch outputs are concatenated per patch, and a shared fusion layer
emits the patch descriptor.
"""

import numpy as np

from mrscene.kbranch import (
    DEFAULT_BAND_GROUPS,
    assemble_patches,
    branch_forward,
    default_branch_specs,
    fuse_descriptors,
    split_patches,
)
from mrscene.model import Model, ModelConfig
from mrscene.tensor import Tensor

rng = np.random.default_rng(1)

# archive-scale geometry: 10m bands 120x120, 20m bands 60x60, 60m bands 20x20
subsets = [
    rng.normal(size=(4, 120, 120)).astype(np.float32),
    rng.normal(size=(6, 60, 60)).astype(np.float32),
    rng.normal(size=(2, 20, 20)).astype(np.float32),
]

print("== tiling into 16 non-overlapping patches ==")
patches = split_patches(subsets, 16)
for k, tiles in enumerate(patches.per_subset):
    print(f"  group {k} ({','.join(DEFAULT_BAND_GROUPS[k])}): {tiles.shape}")

back = assemble_patches(patches)
print("reassembly is bit-exact:", all(np.array_equal(a, b) for a, b in zip(subsets, back)))

print("\n== branch schedules ==")
for k, spec in enumerate(default_branch_specs(DEFAULT_BAND_GROUPS)):
    layers = ", ".join(
        f"{l.kernel}x{l.kernel}({l.filters}){'+pool' if l.pool else ''}" for l in spec.layers
    )
    h0 = subsets[k].shape[1] // 4
    trace = [s[0] for s in spec.spatial_trace(h0, h0)]
    print(f"  branch {k}: {layers} -> fc({spec.fc_out}); spatial {' -> '.join(map(str, trace))}")

print("\n== one patch through all branches ==")
config = ModelConfig(n_classes=43, subset_shapes=[s.shape for s in subsets])
model = Model(config, seed=0)
outs = [
    branch_forward(Tensor(patches.patch(5, k)), spec, model.branch_params[k])
    for k, spec in enumerate(config.branches)
]
print(f"  branch outputs: {[o.shape for o in outs]} (concat width {sum(o.shape[0] for o in outs)})")
descriptor = fuse_descriptors(outs, model.fusion)
print(f"  fused local descriptor: {descriptor.shape}")

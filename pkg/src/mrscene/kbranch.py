"""Per-resolution CNN branches producing one local descriptor per patch.

Each image is tiled into R non-overlapping patches; every resolution group
of bands runs through its own convolutional branch, branch outputs are
concatenated per patch, and a shared fully connected fusion layer emits the
patch descriptor. All parameters are shared across patches.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .init import xavier_init
from .tensor import Tensor


@dataclass
class ConvLayerSpec:
    kernel: int
    filters: int
    pool: bool = False


@dataclass
class BranchSpec:
    """Architecture of one branch: its bands, conv stack, and output width."""

    band_indices: list
    layers: list
    fc_out: int = 128

    def validate(self):
        """Enforce the filter regime: start at 32, double up then halve
        down, end at 64."""
        if not self.layers:
            raise ConfigError("branch needs at least one conv layer")
        filters = [l.filters for l in self.layers]
        if filters[0] != 32:
            raise ConfigError(f"first conv layer must have 32 filters, got {filters[0]}")
        if filters[-1] != 64:
            raise ConfigError(f"last conv layer must have 64 filters, got {filters[-1]}")
        climbing = True
        for prev, cur in zip(filters, filters[1:]):
            if climbing and cur == 2 * prev:
                continue
            climbing = False
            if cur * 2 != prev:
                raise ConfigError(f"filter counts must double then halve, got {filters}")
        if self.fc_out < 1:
            raise ConfigError(f"fc_out must be positive, got {self.fc_out}")

    def spatial_trace(self, h: int, w: int) -> list:
        """Spatial sizes after each layer; same-padding convs keep size,
        pooling floors by two."""
        trace = [(h, w)]
        for layer in self.layers:
            if layer.pool:
                if h < 2 or w < 2:
                    raise ConfigError(f"pooling a {h}x{w} map would reach zero size")
                h, w = h // 2, w // 2
            trace.append((h, w))
        return trace


def default_branch_specs(band_groups, fc_out: int = 128) -> list:
    """Standard schedules: 5x5-then-3x3 with two pools for the highest
    resolution, 3x3 with one pool in between, 2x2 without pooling for the
    lowest resolution."""
    filters = (32, 64, 128, 64)
    specs = []
    last = len(band_groups) - 1
    for k, bands in enumerate(band_groups):
        if k == 0 and last > 0:
            kernels, pools = (5, 3, 3, 3), (True, True, False, False)
        elif k == last:
            kernels, pools = (2, 2, 2, 2), (False, False, False, False)
        else:
            kernels, pools = (3, 3, 3, 3), (True, False, False, False)
        layers = [ConvLayerSpec(ks, f, p) for ks, f, p in zip(kernels, filters, pools)]
        specs.append(BranchSpec(band_indices=list(bands), layers=layers, fc_out=fc_out))
    return specs


# Sentinel-2 style grouping by ground resolution: 10m, 20m, 60m bands.
DEFAULT_BAND_GROUPS = (
    ("B02", "B03", "B04", "B08"),
    ("B05", "B06", "B07", "B8A", "B11", "B12"),
    ("B01", "B09"),
)


@dataclass
class PatchSet:
    """Row-major patches of one sample, one stacked array per subset.

    per_subset[k] has shape (R, bands_k, H_k/g, W_k/g) with patch r at
    grid cell (r // g, r % g).
    """

    per_subset: list
    grid: int

    @property
    def n_patches(self) -> int:
        return self.grid * self.grid

    def patch(self, r: int, k: int) -> np.ndarray:
        return self.per_subset[k][r]


def split_patches(subsets, n_patches: int) -> PatchSet:
    """Tile every subset of a sample into sqrt(R) x sqrt(R) patches."""
    grid = int(round(np.sqrt(n_patches)))
    if grid * grid != n_patches:
        raise ConfigError(f"patch count must be a perfect square, got {n_patches}")
    per_subset = []
    for arr in subsets:
        bands, h, w = arr.shape
        if h % grid or w % grid:
            raise ConfigError(f"subset {bands}x{h}x{w} not divisible into {grid}x{grid} patches")
        ph, pw = h // grid, w // grid
        tiles = (
            arr.reshape(bands, grid, ph, grid, pw)
            .transpose(1, 3, 0, 2, 4)
            .reshape(n_patches, bands, ph, pw)
        )
        per_subset.append(tiles)
    return PatchSet(per_subset=per_subset, grid=grid)


def assemble_patches(patches: PatchSet) -> list:
    """Inverse of split_patches; reproduces the original subsets bit-exactly."""
    out = []
    g = patches.grid
    for tiles in patches.per_subset:
        r, bands, ph, pw = tiles.shape
        arr = tiles.reshape(g, g, bands, ph, pw).transpose(2, 0, 3, 1, 4).reshape(bands, g * ph, g * pw)
        out.append(arr.copy())
    return out


@dataclass
class FcParams:
    weight: Tensor
    bias: Tensor

    def named(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


@dataclass
class BranchParams:
    conv_kernels: list = field(default_factory=list)
    conv_biases: list = field(default_factory=list)
    fc: FcParams = None

    def named(self, prefix: str):
        for i, (k, b) in enumerate(zip(self.conv_kernels, self.conv_biases)):
            yield f"{prefix}.conv{i}.kernels", k
            yield f"{prefix}.conv{i}.bias", b
        yield from self.fc.named(f"{prefix}.fc")


def make_branch_params(spec: BranchSpec, in_bands: int, in_h: int, in_w: int,
                       seed: int, prefix: str, dtype=np.float32) -> BranchParams:
    params = BranchParams()
    channels = in_bands
    for i, layer in enumerate(spec.layers):
        shape = (layer.filters, channels, layer.kernel, layer.kernel)
        params.conv_kernels.append(xavier_init(shape, seed, f"{prefix}.conv{i}.kernels", dtype))
        params.conv_biases.append(xavier_init((layer.filters,), seed, f"{prefix}.conv{i}.bias", dtype))
        channels = layer.filters
    h, w = spec.spatial_trace(in_h, in_w)[-1]
    flat = channels * h * w
    params.fc = FcParams(
        weight=xavier_init((spec.fc_out, flat), seed, f"{prefix}.fc.weight", dtype),
        bias=xavier_init((spec.fc_out,), seed, f"{prefix}.fc.bias", dtype),
    )
    return params


def branch_forward(x: Tensor, spec: BranchSpec, params: BranchParams) -> Tensor:
    """One branch: conv/ReLU stack with configured pooling, then an FC layer.

    Accepts a single patch (bands, h, w) or a stack (N, bands, h, w).
    """
    expected = len(spec.band_indices)
    if x.shape[-3] != expected:
        raise ShapeError(f"branch expects {expected} bands, got input {x.shape}")
    out = x
    for layer, kernels, bias in zip(spec.layers, params.conv_kernels, params.conv_biases):
        out = T.relu(T.conv2d(out, kernels, bias))
        if layer.pool:
            out = T.maxpool2(out)
    if out.ndim == 4:
        flat = T.reshape(out, (out.shape[0], -1))
    else:
        flat = T.reshape(out, (-1,))
    return T.relu(T.fc(flat, params.fc.weight, params.fc.bias))


def fuse_descriptors(branch_outputs, fusion: FcParams) -> Tensor:
    """Concatenate the K branch outputs of a patch and project to the
    shared descriptor width (linear, parameters shared across patches)."""
    if not branch_outputs:
        raise ShapeError("fuse_descriptors needs at least one branch output")
    joined = T.concat(list(branch_outputs), axis=-1) if len(branch_outputs) > 1 else branch_outputs[0]
    return T.fc(joined, fusion.weight, fusion.bias)

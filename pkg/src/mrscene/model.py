"""Full network assembly and configuration."""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import attention_scores, pool_descriptors
from .birnn import bidirectional_pass, make_lstm_params
from .errors import ConfigError, ShapeError
from .head import classify, posteriors
from .init import xavier_init
from .kbranch import (
    BranchSpec,
    ConvLayerSpec,
    DEFAULT_BAND_GROUPS,
    FcParams,
    branch_forward,
    default_branch_specs,
    fuse_descriptors,
    make_branch_params,
)
from .tensor import Tensor


@dataclass
class ModelConfig:
    """Every architecture hyperparameter plus the input geometry."""

    n_classes: int
    subset_shapes: list  # (bands, H, W) per resolution group
    branches: list = None  # BranchSpec per group; default schedules if None
    n_patches: int = 16
    descriptor_width: int = 128  # patch descriptor width after fusion
    hidden_width: int = 128  # LSTM hidden units per direction
    attention_heads: int = 4
    attention_width: int = 64
    threshold: float = 0.5
    per_position_lstm: bool = False

    def __post_init__(self):
        if self.branches is None:
            if len(self.subset_shapes) == len(DEFAULT_BAND_GROUPS):
                groups = DEFAULT_BAND_GROUPS
            else:
                groups = [tuple(f"band{k}_{i}" for i in range(s[0])) for k, s in enumerate(self.subset_shapes)]
            self.branches = default_branch_specs(groups)

    @property
    def grid(self) -> int:
        return int(round(np.sqrt(self.n_patches)))

    @property
    def sequence_width(self) -> int:
        return 2 * self.hidden_width

    def patch_shape(self, k: int) -> tuple:
        bands, h, w = self.subset_shapes[k]
        return (bands, h // self.grid, w // self.grid)

    def validate(self, strict_filters: bool = True):
        g = self.grid
        if g * g != self.n_patches:
            raise ConfigError(f"n_patches must be a perfect square, got {self.n_patches}")
        if len(self.branches) != len(self.subset_shapes):
            raise ConfigError(
                f"{len(self.branches)} branches for {len(self.subset_shapes)} band subsets"
            )
        if self.n_classes < 1:
            raise ConfigError("n_classes must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        for name, value in (("descriptor_width", self.descriptor_width),
                            ("hidden_width", self.hidden_width),
                            ("attention_heads", self.attention_heads),
                            ("attention_width", self.attention_width)):
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        for k, (spec, shape) in enumerate(zip(self.branches, self.subset_shapes)):
            bands, h, w = shape
            if len(spec.band_indices) != bands:
                raise ConfigError(
                    f"branch {k} lists {len(spec.band_indices)} bands but subset {k} has {bands}"
                )
            if h % g or w % g:
                raise ConfigError(f"subset {k} ({h}x{w}) not divisible into {g}x{g} patches")
            if strict_filters:
                spec.validate()
            spec.spatial_trace(h // g, w // g)
        if any(l.pool for l in self.branches[-1].layers):
            raise ConfigError("the lowest-resolution branch must not pool")

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "subset_shapes": [list(s) for s in self.subset_shapes],
            "branches": [
                {
                    "band_indices": list(b.band_indices),
                    "layers": [[l.kernel, l.filters, bool(l.pool)] for l in b.layers],
                    "fc_out": b.fc_out,
                }
                for b in self.branches
            ],
            "n_patches": self.n_patches,
            "descriptor_width": self.descriptor_width,
            "hidden_width": self.hidden_width,
            "attention_heads": self.attention_heads,
            "attention_width": self.attention_width,
            "threshold": self.threshold,
            "per_position_lstm": self.per_position_lstm,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        branches = None
        if payload.get("branches") is not None:
            branches = [
                BranchSpec(
                    band_indices=list(b["band_indices"]),
                    layers=[ConvLayerSpec(k, f, p) for k, f, p in b["layers"]],
                    fc_out=b["fc_out"],
                )
                for b in payload["branches"]
            ]
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        kwargs = {k: v for k, v in payload.items() if k in known and k != "branches"}
        kwargs["subset_shapes"] = [tuple(s) for s in payload["subset_shapes"]]
        return cls(branches=branches, **kwargs)


@dataclass
class ForwardResult:
    scores: Tensor  # (B, C) logits
    attention: Tensor  # (B, T, R)

    @property
    def probabilities(self) -> Tensor:
        return posteriors(self.scores)


class Model:
    """Parameter container plus the end-to-end forward pass."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.parameters = {}

        self.branch_params = []
        for k, spec in enumerate(config.branches):
            bands, ph, pw = config.patch_shape(k)
            params = make_branch_params(spec, bands, ph, pw, seed, f"branch{k}", dtype)
            self.branch_params.append(params)
            self._register(params.named(f"branch{k}"))

        total_branch_out = sum(spec.fc_out for spec in config.branches)
        self.fusion = FcParams(
            weight=xavier_init((config.descriptor_width, total_branch_out), seed, "fusion.weight", dtype),
            bias=xavier_init((config.descriptor_width,), seed, "fusion.bias", dtype),
        )
        self._register(self.fusion.named("fusion"))

        def lstm(prefix):
            if config.per_position_lstm:
                sets = [
                    make_lstm_params(config.descriptor_width, config.hidden_width, seed,
                                     f"{prefix}.pos{r}", dtype)
                    for r in range(config.n_patches)
                ]
                for r, p in enumerate(sets):
                    self._register(p.named(f"{prefix}.pos{r}"))
                return sets
            shared = make_lstm_params(config.descriptor_width, config.hidden_width, seed, prefix, dtype)
            self._register(shared.named(prefix))
            return shared

        self.lstm_fwd = lstm("lstm.fwd")
        self.lstm_bwd = lstm("lstm.bwd")

        self.attn_hidden = xavier_init(
            (config.attention_width, config.sequence_width), seed, "attention.hidden", dtype
        )
        self.attn_heads = xavier_init(
            (config.attention_heads, config.attention_width), seed, "attention.heads", dtype
        )
        self._register([("attention.hidden", self.attn_hidden), ("attention.heads", self.attn_heads)])

        clf_in = config.sequence_width * config.attention_heads
        self.clf_weight = xavier_init((config.n_classes, clf_in), seed, "classifier.weight", dtype)
        self.clf_bias = xavier_init((config.n_classes,), seed, "classifier.bias", dtype)
        self._register([("classifier.weight", self.clf_weight), ("classifier.bias", self.clf_bias)])

    def _register(self, named):
        for name, tensor in named:
            if name in self.parameters:
                raise ConfigError(f"duplicate parameter name {name!r}")
            self.parameters[name] = tensor

    def zero_grad(self):
        for p in self.parameters.values():
            p.zero_grad()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters.values())

    def _tile_batch(self, arr: np.ndarray, k: int) -> np.ndarray:
        """(B, bands, H, W) -> (R*B, bands, ph, pw), patch-major so that rows
        [r*B, (r+1)*B) hold patch r of every sample."""
        g = self.config.grid
        b, bands, h, w = arr.shape
        ph, pw = h // g, w // g
        return (
            arr.reshape(b, bands, g, ph, g, pw)
            .transpose(2, 4, 0, 1, 3, 5)
            .reshape(g * g * b, bands, ph, pw)
        )

    def forward(self, subset_arrays) -> ForwardResult:
        """Logits and attention for a batch.

        subset_arrays: one (B, bands_k, H_k, W_k) array per resolution group.
        """
        cfg = self.config
        if len(subset_arrays) != len(cfg.branches):
            raise ShapeError(f"expected {len(cfg.branches)} subsets, got {len(subset_arrays)}")
        batch = subset_arrays[0].shape[0]
        branch_outs = []
        for k, (spec, params) in enumerate(zip(cfg.branches, self.branch_params)):
            arr = np.ascontiguousarray(subset_arrays[k], dtype=self.dtype)
            if arr.shape[1:] != tuple(cfg.subset_shapes[k]):
                raise ShapeError(
                    f"subset {k} shape {arr.shape[1:]} != configured {tuple(cfg.subset_shapes[k])}"
                )
            tiles = Tensor(self._tile_batch(arr, k))
            branch_outs.append(branch_forward(tiles, spec, params))  # (R*B, fc_out)

        descriptors = fuse_descriptors(branch_outs, self.fusion)  # (R*B, d_psi)
        steps = [T.slice_rows(descriptors, r * batch, (r + 1) * batch) for r in range(cfg.n_patches)]
        enriched = bidirectional_pass(steps, self.lstm_fwd, self.lstm_bwd)  # R x (B, 2*hidden)
        stacked = T.concat(
            [T.reshape(phi, (batch, 1, cfg.sequence_width)) for phi in enriched], axis=1
        )
        omega = T.swap_last_axes(stacked)  # (B, 2*hidden, R): column r is patch r
        attn = attention_scores(omega, self.attn_hidden, self.attn_heads)
        pooled = pool_descriptors(omega, attn)
        scores = classify(pooled, self.clf_weight, self.clf_bias)
        return ForwardResult(scores=scores, attention=attn)

    def forward_samples(self, samples) -> ForwardResult:
        arrays = [
            np.stack([s.subsets[k] for s in samples]) for k in range(len(self.config.subset_shapes))
        ]
        return self.forward(arrays)

    def predict_probabilities(self, samples, batch_size: int = 32) -> np.ndarray:
        """Posterior matrix (n_samples, C), computed in fixed-size batches."""
        out = []
        for start in range(0, len(samples), batch_size):
            result = self.forward_samples(samples[start : start + batch_size])
            out.append(result.probabilities.data)
        return np.concatenate(out, axis=0)

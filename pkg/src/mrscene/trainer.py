"""End-to-end training: optimizers, epoch loop, loss log, evaluation."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import write_checkpoint
from .errors import ConfigError, TrainingDivergedError
from .head import bce_with_logits_loss, predict
from .init import xavier_init  # re-exported: initialization belongs to training
from .metrics import MetricsReport, aggregate
from .model import Model

__all__ = [
    "TrainConfig", "TrainResult", "Adam", "Sgd", "make_optimizer",
    "train", "evaluate_model", "moving_average", "xavier_init",
]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    optimizer: str = "adam"
    seed: int = 0
    checkpoint_every: int = 0  # 0 = final checkpoint only
    threshold: float = 0.5
    shuffle: bool = True

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "threshold": self.threshold,
            "shuffle": self.shuffle,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        return cls(**{k: v for k, v in payload.items() if k in known})


class Adam:
    """Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, parameters: dict):
        self.step_count += 1
        t = self.step_count
        for name, p in parameters.items():
            if p.grad is None:
                raise RuntimeError(f"parameter {name!r} has no gradient")
            g = p.grad
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_entries(self) -> dict:
        entries = {"adam.step": np.array([self.step_count], dtype=np.float32)}
        for name in self.m:
            entries[f"adam.m.{name}"] = self.m[name]
            entries[f"adam.v.{name}"] = self.v[name]
        return entries

    def load_state_entries(self, entries: dict):
        step = entries.get("adam.step")
        self.step_count = int(np.asarray(step).reshape(-1)[0]) if step is not None else 0
        for key, value in entries.items():
            if key.startswith("adam.m."):
                self.m[key[len("adam.m."):]] = value.copy()
            elif key.startswith("adam.v."):
                self.v[key[len("adam.v."):]] = value.copy()


class Sgd:
    """Plain gradient descent."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate
        self.step_count = 0

    def step(self, parameters: dict):
        self.step_count += 1
        for name, p in parameters.items():
            if p.grad is None:
                raise RuntimeError(f"parameter {name!r} has no gradient")
            p.data -= self.learning_rate * p.grad

    def state_entries(self) -> dict:
        return {"sgd.step": np.array([self.step_count], dtype=np.float32)}

    def load_state_entries(self, entries: dict):
        step = entries.get("sgd.step")
        self.step_count = int(np.asarray(step).reshape(-1)[0]) if step is not None else 0


def make_optimizer(kind: str, learning_rate: float):
    if kind == "adam":
        return Adam(learning_rate)
    if kind == "sgd":
        return Sgd(learning_rate)
    raise ConfigError(f"unknown optimizer {kind!r}")


@dataclass
class TrainResult:
    loss_trajectory: list = field(default_factory=list)
    final_checkpoint: str = ""
    optimizer: object = None


def _epoch_order(n: int, seed: int, epoch: int, shuffle: bool) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch])))
    return rng.permutation(n)


def _stack_batch(samples, n_subsets: int):
    arrays = [np.stack([s.subsets[k] for s in samples]) for k in range(n_subsets)]
    targets = np.stack([s.labels for s in samples]).astype(np.float32)
    return arrays, targets


def train(model: Model, samples, cfg: TrainConfig, out_dir=None, run_config: dict = None) -> TrainResult:
    """Seeded epoch loop: shuffle, batch, forward, backward, optimizer step.

    Appends the mean per-sample loss of every epoch to the trajectory,
    writes `loss_log.txt` and checkpoints under out_dir when given, and
    aborts on a non-finite loss.
    """
    cfg.validate()
    if not samples:
        raise ConfigError("training needs at least one sample")
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    result = TrainResult(optimizer=optimizer)
    n_subsets = len(model.config.subset_shapes)
    echo = dict(run_config or {})
    echo.setdefault("model", model.config.to_dict())
    echo.setdefault("train", cfg.to_dict())

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, cfg.epochs + 1):
        order = _epoch_order(len(samples), cfg.seed, epoch, cfg.shuffle)
        total_loss = 0.0
        for batch_index, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [samples[i] for i in order[start : start + cfg.batch_size]]
            arrays, targets = _stack_batch(batch, n_subsets)
            model.zero_grad()
            loss = bce_with_logits_loss(model.forward(arrays).scores, targets)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            loss.backward()
            optimizer.step(model.parameters)
            total_loss += loss_value * len(batch)
        result.loss_trajectory.append(total_loss / len(samples))

        if out is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            write_checkpoint(out / f"checkpoint-{epoch:04d}.mac", model.parameters,
                             optimizer.state_entries(), epoch, echo)

    if out is not None:
        final = out / "checkpoint-final.mac"
        write_checkpoint(final, model.parameters, optimizer.state_entries(), cfg.epochs, echo)
        result.final_checkpoint = str(final)
        log_lines = [f"{epoch}\t{loss:.8e}" for epoch, loss in enumerate(result.loss_trajectory, start=1)]
        (out / "loss_log.txt").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return result


def evaluate_model(model: Model, samples, threshold: float = 0.5, batch_size: int = 32,
                   keep_per_sample: bool = False) -> MetricsReport:
    probs = model.predict_probabilities(samples, batch_size)
    pairs = [(s.labels, predict(probs[i], threshold)) for i, s in enumerate(samples)]
    return aggregate(pairs, keep_per_sample=keep_per_sample)


def moving_average(values, window: int = 5) -> np.ndarray:
    """Trailing moving average; entry i averages values[i-window+1 .. i]."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < window:
        raise ConfigError(f"need at least {window} values, got {values.size}")
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")

"""File-backed run configuration (JSON)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .distributions import make_grid
from .errors import ConfigError
from .mcmc import ChainConfig
from .training import VARIANTS, TrainConfig

DATASET_KINDS = ("hetero-edgelist", "molecular-coords", "synthetic")


@dataclass
class RunConfig:
    dataset: dict
    grid: dict = field(default_factory=lambda: {"lo": 0.0, "hi": 1.0, "step": 0.05})
    variant: str = "PT"
    eta: float = 25.0
    em_iterations: int = 15
    mstep_epochs: int = 20
    a0: float = 0.5
    step_c: float | None = None
    pretrain_epochs: int = 100
    pretrain_lr: float | None = None
    chain: dict = field(default_factory=lambda: {
        "n_iterations": 15000, "burn_in": 1000, "thinning": 1})
    hidden_dim: int = 64
    num_layers: int = 2
    weight_clip: float | None = None
    seed: int = 0
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int | None = None  # None -> seed
    threads: int = 1
    out_dir: str | None = None

    KEYS = (
        "dataset", "grid", "variant", "eta", "em_iterations", "mstep_epochs",
        "a0", "step_c", "pretrain_epochs", "pretrain_lr", "chain",
        "hidden_dim", "num_layers", "weight_clip", "seed", "split",
        "split_seed", "threads", "out_dir",
    )

    def validate(self, base_dir: Path | None = None) -> None:
        kind = self.dataset.get("kind")
        if kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        for key in ("lo", "hi", "step"):
            if key not in self.grid:
                raise ConfigError(f"grid spec missing {key!r}")
        make_grid(self.grid["lo"], self.grid["hi"], self.grid["step"])
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if kind == "hetero-edgelist":
            self._check_paths(("edges", "features", "labels"), base_dir)
        elif kind == "molecular-coords":
            self._check_paths(("coords", "targets"), base_dir)
        ChainConfig(eta=self.eta, **self.chain)  # validates counts
        self.to_train_config()  # validates the training block

    def _check_paths(self, keys, base_dir: Path | None) -> None:
        for key in keys:
            raw = self.dataset.get(key)
            if raw is None:
                raise ConfigError(f"dataset spec missing {key!r}")
            if not self.resolve_path(raw, base_dir).exists():
                raise ConfigError(f"dataset path does not exist: {raw}")

    @staticmethod
    def resolve_path(raw: str, base_dir: Path | None) -> Path:
        p = Path(raw)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        return p

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            grid=make_grid(self.grid["lo"], self.grid["hi"], self.grid["step"]),
            chain=ChainConfig(eta=self.eta, **self.chain),
            variant=self.variant,
            em_iterations=self.em_iterations,
            mstep_epochs=self.mstep_epochs,
            a0=self.a0,
            step_c=self.step_c,
            pretrain_epochs=self.pretrain_epochs,
            pretrain_lr=self.pretrain_lr,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            weight_clip=self.weight_clip,
            seed=self.seed,
        )

    def snapshot(self) -> str:
        doc = {k: getattr(self, k) for k in self.KEYS}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(RunConfig.KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "dataset" not in doc:
        raise ConfigError("config missing 'dataset'")
    if "split" in doc:
        doc["split"] = tuple(doc["split"])
    cfg = RunConfig(**doc)
    cfg.validate(base_dir=path.parent)
    return cfg

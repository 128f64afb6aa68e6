from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import FormatError, InvalidArgumentError
from ..model import ModelConfig
from ..sequence_control import SELECTORS

SEED_ENV = "SEQSEG_SEED"
VARIANTS = ("seqsam", "mcl")


@dataclass
class TrainConfig:
    dataset: str = "data"
    checkpoint: str = "runs/model.ckpt"
    variant: str = "seqsam"
    M_train: int = 3
    K: int = 3
    bptt: bool = True
    selector: str = "chunked"
    lr: float = 1e-4
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 2
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    max_train_samples: int | None = None
    time_budget_s: float | None = None  # stop after the epoch that crosses this
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        self.betas = tuple(self.betas)
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.selector not in SELECTORS:
            raise InvalidArgumentError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if self.K < 1 or self.M_train < self.K:
            raise InvalidArgumentError(f"need M_train >= K >= 1, got M_train={self.M_train}, K={self.K}")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise InvalidArgumentError("batch_size and patience must be >= 1 and max_epochs >= 0")
        if self.variant == "mcl":
            self.model.num_heads = self.M_train

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**data)


def load_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read config: {exc.strerror}", path) from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path) from exc


def apply_seed_override(data: dict) -> dict:
    """Return a copy of ``data`` whose seed is replaced by $SEQSEG_SEED when set."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return dict(data)
    try:
        seed = int(raw)
    except ValueError as exc:
        raise InvalidArgumentError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc
    return {**data, "seed": seed}

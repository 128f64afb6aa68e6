"""Training loop for the recurrent model and the MCL baseline."""

from __future__ import annotations

import json
import logging
import math
import time
from pathlib import Path

import numpy as np
import torch

from ..checkpoint import save_checkpoint
from ..errors import FormatError, TrainingDivergenceError
from ..matching import batched_set_loss
from ..model import SeqSegModel, downsample_labels, mcl_loss
from ..sequence_control import selection_indices
from ..synthdata import dataset_checksum, read_dataset
from .config import TrainConfig

log = logging.getLogger(__name__)

VAL_RNG_STREAM = 1


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


class Batches:
    """Tensors for one split at the resolutions training needs."""

    def __init__(self, samples, downsample: int, dtype=torch.float32):
        self.ids = [s.sample_id for s in samples]
        self.images = torch.as_tensor(np.stack([s.image for s in samples]), dtype=dtype)
        labels = torch.as_tensor(np.stack([np.stack(s.labels) for s in samples]), dtype=dtype)
        self.labels = downsample_labels(labels, downsample)
        self.bboxes = np.array([s.bbox for s in samples], dtype=np.int64)

    def __len__(self):
        return len(self.ids)


def batch_loss(model: SeqSegModel, cfg: TrainConfig, images, bboxes, labels, rng) -> torch.Tensor:
    """Per-sample losses (N,) for one batch.

    The recurrent variant unrolls M_train masks, keeps K of them per sample
    through the configured selector, and applies the matched set loss. The
    MCL variant scores all heads with the winner-takes-all loss.
    """
    if cfg.variant == "mcl":
        probs = torch.sigmoid(model.mcl_forward(images, bboxes, cfg.M_train))
        return mcl_loss(probs, labels)
    logits = model.unroll(images, bboxes, cfg.M_train, bptt=cfg.bptt)
    idx = torch.as_tensor([selection_indices(cfg.M_train, cfg.K, cfg.selector, rng) for _ in range(len(images))])
    chosen = torch.gather(logits, 1, idx[:, :, None, None].expand(-1, -1, *logits.shape[-2:]))
    losses, _ = batched_set_loss(torch.sigmoid(chosen), labels)
    return losses


def validation_loss(model, cfg: TrainConfig, data: Batches, chunk: int = 100) -> float:
    rng = np.random.default_rng([cfg.seed, VAL_RNG_STREAM])
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(data), chunk):
            sl = slice(start, start + chunk)
            total += float(batch_loss(model, cfg, data.images[sl], data.bboxes[sl], data.labels[sl], rng).sum())
    return total / len(data)


def train(cfg: TrainConfig, log_path=None):
    """Train per ``cfg``; writes the best-validation checkpoint and a JSONL log.

    Returns the list of per-epoch log records. Epoch 0 records the
    validation loss at initialisation.
    """
    data_dir = Path(cfg.dataset)
    if not data_dir.is_dir():
        raise FormatError("dataset directory not found", data_dir)
    splits = read_dataset(data_dir, ("train", "val"))
    if "train" not in splits or "val" not in splits:
        raise FormatError("dataset needs train and val splits", data_dir)
    train_samples = splits["train"]
    if cfg.max_train_samples is not None:
        train_samples = train_samples[: cfg.max_train_samples]
    for s in train_samples[:1] + splits["val"][:1]:
        if len(s.labels) != cfg.K:
            raise FormatError(f"dataset has {len(s.labels)} labels per sample, config says K={cfg.K}", data_dir)

    set_determinism(cfg.seed)
    model = SeqSegModel(cfg.model)
    d = cfg.model.downsample
    train_data = Batches(train_samples, d)
    val_data = Batches(splits["val"], d)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)

    ckpt_path = Path(cfg.checkpoint)
    log_path = Path(log_path) if log_path else ckpt_path.with_suffix(".log.jsonl")
    log_path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"train_config": cfg.to_dict(), "dataset_sha256": dataset_checksum(data_dir), "epoch": 0}

    model.eval()
    best = validation_loss(model, cfg, val_data)
    records = [{"epoch": 0, "train_loss": None, "val_loss": best}]
    save_checkpoint(ckpt_path, model, {**meta, "val_loss": best})
    stale = 0
    step = 0
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = rng.permutation(len(train_data))
        running = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            losses = batch_loss(model, cfg, train_data.images[idx], train_data.bboxes[idx],
                                train_data.labels[idx], rng)
            loss = losses.mean()
            step += 1
            if not math.isfinite(loss.item()):
                raise TrainingDivergenceError(step, loss.item())
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            running += float(losses.detach().sum())
        model.eval()
        val = validation_loss(model, cfg, val_data)
        if not math.isfinite(val):
            raise TrainingDivergenceError(step, val)
        records.append({"epoch": epoch, "train_loss": running / len(train_data), "val_loss": val})
        log.info("epoch %d train %.4f val %.4f", epoch, records[-1]["train_loss"], val)
        if val < best:
            best = val
            stale = 0
            save_checkpoint(ckpt_path, model, {**meta, "epoch": epoch, "val_loss": val})
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        if cfg.time_budget_s is not None and time.perf_counter() - t0 > cfg.time_budget_s:
            log.warning("time budget of %.0f s exhausted after epoch %d", cfg.time_budget_s, epoch)
            break
    with open(log_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return records

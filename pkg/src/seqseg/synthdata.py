"""Synthetic multi-annotator segmentation data and its on-disk format.

Each image holds one bright blob over a smooth background. Every annotator
traces the blob with their own boundary wobble and grows or shrinks it by a
few pixels, and occasionally leaves the image unannotated, so label sets
disagree on size and contour while sharing one mode.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import FormatError, InvalidArgumentError
from .mask_ops import as_binary_mask

MANIFEST = "manifest.json"
SPLITS = ("train", "val", "test")


@dataclass
class DatasetConfig:
    num_samples: int = 1200
    image_size: int = 64
    K: int = 3
    radius_range: tuple[float, float] = (10.0, 20.0)
    boundary_noise: float = 0.08
    annotator_boundary_noise: float = 0.04
    dilation_range: int = 3
    empty_annotation_prob: float = 0.1
    splits: tuple[float, float, float] = (1000 / 1200, 100 / 1200, 100 / 1200)
    seed: int = 0

    def __post_init__(self):
        self.radius_range = tuple(self.radius_range)
        self.splits = tuple(self.splits)
        if self.K < 2:
            raise InvalidArgumentError("K must be >= 2")
        if not 0.0 <= self.empty_annotation_prob < 1.0:
            raise InvalidArgumentError("empty_annotation_prob must lie in [0, 1)")
        if len(self.splits) != 3 or abs(sum(self.splits) - 1.0) > 1e-9 or min(self.splits) < 0:
            raise InvalidArgumentError("split fractions must be three non-negative values summing to 1")
        lo, hi = self.radius_range
        if not 1.0 <= lo <= hi or 2 * self.margin(hi) > self.image_size - 1:
            raise InvalidArgumentError("radius range does not fit the image")

    def margin(self, radius: float) -> int:
        # distance a blob of this radius needs from the border, worst case
        return int(np.ceil(radius * (1 + 3 * self.boundary_noise) + self.dilation_range)) + 1

    def split_counts(self) -> dict[str, int]:
        n_train = int(round(self.splits[0] * self.num_samples))
        n_val = int(round(self.splits[1] * self.num_samples))
        return {"train": n_train, "val": n_val, "test": self.num_samples - n_train - n_val}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetConfig":
        return cls(**data)


@dataclass
class Sample:
    image: np.ndarray
    labels: list[np.ndarray]
    bbox: tuple[int, int, int, int]
    sample_id: str = ""
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.image.ndim != 2:
            raise InvalidArgumentError("image must be 2-D")
        if len(self.labels) < 2:
            raise InvalidArgumentError("a sample needs at least two labels")
        for y in self.labels:
            if as_binary_mask(y).shape != self.image.shape:
                raise InvalidArgumentError("label shape differs from image shape")
        if not any(y.any() for y in self.labels):
            raise InvalidArgumentError("every label is empty")


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius**2


def _warped_ellipse(size, center, radii, angle, harmonics):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = (c * dx + s * dy) / radii[1]
    v = (-s * dx + c * dy) / radii[0]
    rho = np.hypot(u, v)
    theta = np.arctan2(v, u)
    boundary = np.ones_like(theta)
    for order, (amp, phase) in enumerate(harmonics, start=2):
        boundary += amp * np.cos(order * theta + phase)
    return rho <= boundary


def _harmonics(rng, amplitude):
    return [(amplitude * rng.standard_normal(), rng.uniform(0, 2 * np.pi)) for _ in range(3)]


def generate_sample(cfg: DatasetConfig, rng: np.random.Generator, sample_id: str = "") -> Sample:
    """Draw one image with K annotator masks and a box prompt."""
    size = cfg.image_size
    lo, hi = cfg.radius_range
    radii = rng.uniform(lo, hi, size=2)
    margin = cfg.margin(radii.max())
    center = rng.uniform(margin, size - 1 - margin, size=2)
    angle = rng.uniform(0, np.pi)
    shape_harmonics = _harmonics(rng, cfg.boundary_noise)
    truth = _warped_ellipse(size, center, radii, angle, shape_harmonics)

    coarse = rng.standard_normal((size // 8, size // 8))
    background = ndimage.zoom(coarse, 8, order=3)
    background = 0.15 + 0.1 * (background - background.min()) / (np.ptp(background) + 1e-12)
    blob = ndimage.gaussian_filter(truth.astype(np.float64), 1.0)
    image = background + 0.45 * blob + 0.05 * rng.standard_normal((size, size))
    image = np.clip(image, 0.0, 1.0)

    while True:
        labels = []
        for _ in range(cfg.K):
            jitter = [(a + cfg.annotator_boundary_noise * rng.standard_normal(), p) for a, p in shape_harmonics]
            mask = _warped_ellipse(size, center, radii, angle, jitter)
            grow = int(rng.integers(-cfg.dilation_range, cfg.dilation_range + 1))
            if grow > 0:
                mask = ndimage.binary_dilation(mask, _disk(grow))
            elif grow < 0:
                eroded = ndimage.binary_erosion(mask, _disk(-grow))
                mask = eroded if eroded.any() else mask
            if rng.random() < cfg.empty_annotation_prob:
                mask = np.zeros_like(mask)
            labels.append(mask.astype(np.uint8))
        if any(y.any() for y in labels):
            break
    bbox = bbox_from_labels(labels, rng)
    return Sample(image=image, labels=labels, bbox=bbox, sample_id=sample_id, meta={"truth": truth})


def bbox_from_labels(labels, rng: np.random.Generator) -> tuple[int, int, int, int]:
    """Tight (x_min, y_min, x_max, y_max) box of a random non-empty label."""
    nonempty = [y for y in labels if np.asarray(y).any()]
    if not nonempty:
        raise InvalidArgumentError("all labels are empty; cannot place a box")
    chosen = np.asarray(nonempty[int(rng.integers(len(nonempty)))])
    rows = np.flatnonzero(chosen.any(axis=1))
    cols = np.flatnonzero(chosen.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def generate_dataset(cfg: DatasetConfig) -> dict[str, list[Sample]]:
    """All splits, each sample drawn from its own (seed, index) stream."""
    out = {}
    index = 0
    for split, count in cfg.split_counts().items():
        samples = []
        for _ in range(count):
            samples.append(generate_sample(cfg, sample_rng(cfg.seed, index), sample_id=f"s{index:05d}"))
            index += 1
        out[split] = samples
    return out


# -- disk format ------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_png(path: Path, arr: np.ndarray) -> None:
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, optimize=False)


def write_split(samples, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        s.validate()
        img_name = f"{s.sample_id}_img.png"
        _write_png(directory / img_name, np.rint(np.clip(s.image, 0, 1) * 255))
        files = {"image": img_name}
        checksums = {img_name: _sha256(directory / img_name)}
        label_names = []
        for k, y in enumerate(s.labels):
            name = f"{s.sample_id}_lab{k}.png"
            _write_png(directory / name, as_binary_mask(y) * 255)
            label_names.append(name)
            checksums[name] = _sha256(directory / name)
        files["labels"] = label_names
        entries.append({"sample_id": s.sample_id, "bbox": list(s.bbox), "files": files, "sha256": checksums})
    manifest = {"num_samples": len(entries), "K": len(samples[0].labels) if samples else 0, "samples": entries}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True))


def write_dataset(splits: dict, directory, cfg: DatasetConfig | None = None) -> None:
    """Write ``{split: samples}`` as one sub-directory per split."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split, samples in splits.items():
        write_split(samples, directory / split)
    if cfg is not None:
        (directory / "dataset_config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.array(im)
    except OSError as exc:
        raise FormatError("unreadable image file", path) from exc


def read_split(directory) -> list[Sample]:
    directory = Path(directory)
    manifest_path = directory / MANIFEST
    if not manifest_path.is_file():
        raise FormatError("missing manifest", manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
        entries = manifest["samples"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError("corrupt manifest", manifest_path) from exc
    if manifest.get("num_samples") != len(entries):
        raise FormatError("manifest sample count disagrees with its entries", manifest_path)
    samples = []
    for entry in entries:
        for name, digest in entry["sha256"].items():
            path = directory / name
            if not path.is_file():
                raise FormatError("missing file", path)
            if _sha256(path) != digest:
                raise FormatError("checksum mismatch", path)
        image = _read_png(directory / entry["files"]["image"]).astype(np.float64) / 255.0
        labels = []
        for name in entry["files"]["labels"]:
            raw = _read_png(directory / name)
            if not np.isin(raw, (0, 255)).all():
                raise FormatError("mask file holds values other than 0 and 255", directory / name)
            labels.append((raw == 255).astype(np.uint8))
        sample = Sample(image=image, labels=labels, bbox=tuple(int(v) for v in entry["bbox"]),
                        sample_id=entry["sample_id"])
        try:
            sample.validate()
        except InvalidArgumentError as exc:
            raise FormatError(f"invalid sample {sample.sample_id}: {exc}", directory) from exc
        samples.append(sample)
    return samples


def read_dataset(directory, splits=SPLITS) -> dict[str, list[Sample]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError("dataset directory not found", directory)
    return {split: read_split(directory / split) for split in splits if (directory / split).is_dir()}


def dataset_checksum(directory) -> str:
    """Digest over every split manifest, identifying a dataset on disk."""
    h = hashlib.sha256()
    for split in SPLITS:
        path = Path(directory) / split / MANIFEST
        if path.is_file():
            h.update(split.encode())
            h.update(path.read_bytes())
    return h.hexdigest()

"""Datasets: a seeded synthetic shapes generator and folder-backed image/mask sets.

Images are ``float32`` arrays ``(H, W, 3)`` in [0, 1]; masks are ``uint8``
``(H, W)`` with ``IGNORE_LABEL`` (255) marking void pixels. Folder layout::

    root/images/<stem>.png
    root/masks/<stem>.png        # single-channel indexed, optional for reconstruction
    root/manifest.txt            # "<split>\\t<stem>" per line
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

IGNORE_LABEL = 255
SPLITS = ("train", "val")

# per-class base colours; class 0 is background
_PALETTE = np.array(
    [
        [0.50, 0.50, 0.50],
        [0.90, 0.20, 0.15],
        [0.15, 0.35, 0.90],
        [0.20, 0.80, 0.25],
        [0.95, 0.85, 0.10],
        [0.75, 0.20, 0.85],
        [0.10, 0.85, 0.85],
        [0.95, 0.55, 0.10],
    ]
)


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Shape:
    kind: str  # "rect" or "disk"
    class_id: int
    cy: float
    cx: float
    size: float  # disk radius, or rectangle half-height
    aspect: float = 1.0  # rectangle half-width / half-height


@dataclass
class SyntheticParams:
    height: int = 32
    width: int = 32
    n_images: int = 512
    min_shapes: int = 1
    max_shapes: int = 3
    num_classes: int = 3
    seed: int = 7
    min_size: float = 4.0
    max_size: float = 9.0

    def validate(self) -> None:
        if min(self.height, self.width) < 16:
            raise DataError("synthetic image side must be >= 16")
        if self.num_classes < 2:
            raise DataError("synthetic data needs at least 2 classes")
        if self.n_images < 0 or not 0 <= self.min_shapes <= self.max_shapes:
            raise DataError("need n_images >= 0 and 0 <= min_shapes <= max_shapes")
        if not 0 < self.min_size <= self.max_size:
            raise DataError("need 0 < min_size <= max_size")


def shape_kind(class_id: int) -> str:
    return "rect" if class_id % 2 else "disk"


def class_color(class_id: int) -> np.ndarray:
    return _PALETTE[class_id % len(_PALETTE)]


def shape_mask(shape: Shape, height: int, width: int) -> np.ndarray:
    """Boolean raster of one shape, sampled at pixel centres."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64) + 0.5
    if shape.kind == "disk":
        return (yy - shape.cy) ** 2 + (xx - shape.cx) ** 2 <= shape.size**2
    if shape.kind == "rect":
        return (np.abs(yy - shape.cy) <= shape.size) & (np.abs(xx - shape.cx) <= shape.size * shape.aspect)
    raise DataError(f"unknown shape kind {shape.kind!r}")


def _background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Dim tinted gradient with mild per-pixel texture."""
    base = 0.25 + 0.2 * rng.random(3)
    gy, gx = rng.uniform(-0.15, 0.15, size=(2, 3))
    yy = np.linspace(-0.5, 0.5, height)[:, None, None]
    xx = np.linspace(-0.5, 0.5, width)[None, :, None]
    noise = rng.normal(0.0, 0.03, size=(height, width, 3))
    return base + gy * yy + gx * xx + noise


def render(shapes: Sequence[Shape], height: int, width: int, rng: np.random.Generator):
    """Paint shapes in order (later ones occlude) on a textured background.

    Returns the quantized image and a mask whose labels match the painted pixels exactly.
    """
    img = _background(rng, height, width)
    mask = np.zeros((height, width), dtype=np.uint8)
    for s in shapes:
        m = shape_mask(s, height, width)
        color = np.clip(class_color(s.class_id) + rng.uniform(-0.08, 0.08, size=3), 0, 1)
        shade = rng.normal(0.0, 0.02, size=(height, width, 3))
        img[m] = (color + shade)[m]
        mask[m] = s.class_id
    # quantize to 8 bits so PNG round-trips are exact
    img = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.float32) / np.float32(255.0)
    return img, mask


def random_shapes(rng: np.random.Generator, p: SyntheticParams) -> list[Shape]:
    count = int(rng.integers(p.min_shapes, p.max_shapes + 1))
    out = []
    for _ in range(count):
        cls = int(rng.integers(1, p.num_classes))
        size = float(rng.uniform(p.min_size, p.max_size))
        cy = float(rng.uniform(size * 0.6, p.height - size * 0.6))
        cx = float(rng.uniform(size * 0.6, p.width - size * 0.6))
        aspect = float(rng.uniform(0.6, 1.6)) if shape_kind(cls) == "rect" else 1.0
        out.append(Shape(shape_kind(cls), cls, cy, cx, size, aspect))
    return out


class SyntheticShapes:
    """Deterministic, index-addressable synthetic dataset (items rendered on demand)."""

    def __init__(self, params: SyntheticParams, split: str = "train"):
        params.validate()
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        self.params = params
        self.split = split
        self.num_classes = params.num_classes
        self.has_masks = True
        self._cache: dict[int, tuple] = {}

    def __len__(self) -> int:
        return self.params.n_images

    def __getitem__(self, i: int):
        if not 0 <= i < len(self):
            raise IndexError(i)
        if i not in self._cache:
            rng = np.random.default_rng([self.params.seed, SPLITS.index(self.split), i])
            shapes = random_shapes(rng, self.params)
            self._cache[i] = render(shapes, self.params.height, self.params.width, rng)
        return self._cache[i]

    def stem(self, i: int) -> str:
        return f"{self.split}_{i:05d}"


def generate_synthetic(params: SyntheticParams, split: str = "train"):
    """Materialize a synthetic split as ``(images (N,H,W,3), masks (N,H,W))``."""
    ds = SyntheticShapes(params, split)
    if len(ds) == 0:
        return np.zeros((0, params.height, params.width, 3), np.float32), np.zeros((0, params.height, params.width), np.uint8)
    items = [ds[i] for i in range(len(ds))]
    return np.stack([a for a, _ in items]), np.stack([b for _, b in items])


def read_manifest(root: Path) -> dict[str, list[str]]:
    path = root / "manifest.txt"
    splits: dict[str, list[str]] = {}
    if not path.exists():
        stems = sorted(p.stem for p in (root / "images").glob("*.png"))
        return {"train": stems, "val": stems}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected '<split>\\t<stem>'")
        splits.setdefault(parts[0].strip(), []).append(parts[1].strip())
    return splits


class FolderDataset:
    """Images (and optionally masks) in the folder layout described in the module docstring."""

    def __init__(
        self,
        root,
        split: str = "train",
        size: tuple[int, int] | None = None,
        num_classes: int = 21,
        require_masks: bool = False,
    ):
        self.root = Path(root)
        self.split = split
        self.size = size
        self.num_classes = num_classes
        if not (self.root / "images").is_dir():
            raise DataError(f"{self.root} has no images/ directory")
        stems = read_manifest(self.root).get(split)
        if not stems:
            raise DataError(f"no stems listed for split {split!r} under {self.root}")
        self.stems = stems
        for stem in stems:
            if not (self.root / "images" / f"{stem}.png").exists():
                raise DataError(f"missing image for stem {stem!r}")
        mask_dir = self.root / "masks"
        self.has_masks = mask_dir.is_dir()
        if require_masks and not self.has_masks:
            raise DataError(f"{self.root} has no masks/ directory")
        if self.has_masks:
            for stem in stems:
                if not (mask_dir / f"{stem}.png").exists():
                    raise DataError(f"image {stem!r} has no paired mask masks/{stem}.png")

    def __len__(self) -> int:
        return len(self.stems)

    def stem(self, i: int) -> str:
        return self.stems[i]

    def __getitem__(self, i: int):
        stem = self.stems[i]
        img = load_image(self.root / "images" / f"{stem}.png", self.size)
        mask = None
        if self.has_masks:
            mask = load_mask(self.root / "masks" / f"{stem}.png", self.size)
            bad = (mask >= self.num_classes) & (mask != IGNORE_LABEL)
            if bad.any():
                raise DataError(f"mask {stem!r} has label {int(mask[bad].max())} >= {self.num_classes}")
        return img, mask


def load_image(path, size: tuple[int, int] | None = None) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if size is not None and im.size != (size[1], size[0]):
                im = im.resize((size[1], size[0]), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32)
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr / np.float32(255.0)


def load_mask(path, size: tuple[int, int] | None = None) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "P"):
                raise DataError(f"mask {path} must be single-channel, got mode {im.mode}")
            if size is not None and im.size != (size[1], size[0]):
                im = im.resize((size[1], size[0]), Image.NEAREST)
            return np.asarray(im, dtype=np.uint8).copy()
    except OSError as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from exc


def save_image(path, image: np.ndarray) -> None:
    arr = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(path)


def save_folder(datasets: dict, root) -> Path:
    """Write ``{split: dataset}`` to the folder layout and a manifest."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for split, ds in datasets.items():
        for i in range(len(ds)):
            img, mask = ds[i]
            stem = ds.stem(i)
            save_image(root / "images" / f"{stem}.png", img)
            if mask is not None:
                save_mask(root / "masks" / f"{stem}.png", mask)
            lines.append(f"{split}\t{stem}\n")
    (root / "manifest.txt").write_text("".join(lines), encoding="utf-8")
    return root


def num_batches(dataset, batch_size: int) -> int:
    return math.ceil(len(dataset) / batch_size)


def epoch_order(n: int, seed: int, epoch: int, shuffle: bool = True) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def load_batch(dataset, batch_size: int, index: int, epoch: int = 0, seed: int = 0,
               shuffle: bool = True, flip: bool = False):
    """Batch ``index`` of ``epoch`` as torch tensors.

    Returns ``(images (B,3,H,W) float32, masks (B,H,W) int64 or None)``. Order and
    flips depend only on ``(seed, epoch, index)``.
    """
    nb = num_batches(dataset, batch_size)
    if not 0 <= index < nb:
        raise IndexError(f"batch index {index} outside [0, {nb})")
    order = epoch_order(len(dataset), seed, epoch, shuffle)
    idx = order[index * batch_size:(index + 1) * batch_size]
    items = [dataset[int(i)] for i in idx]
    images = np.stack([im for im, _ in items])
    masks = None if items[0][1] is None else np.stack([m for _, m in items])
    if flip:
        do = np.random.default_rng([seed, epoch, index, 1]).random(len(idx)) < 0.5
        images[do] = images[do][:, :, ::-1]
        if masks is not None:
            masks[do] = masks[do][:, :, ::-1]
    img_t = torch.from_numpy(np.ascontiguousarray(images)).permute(0, 3, 1, 2).contiguous()
    mask_t = None if masks is None else torch.from_numpy(masks.astype(np.int64))
    return img_t, mask_t


def make_dataset(cfg, split: str = "train"):
    """Build the dataset described by ``cfg.data`` and ``cfg.image``."""
    d = cfg.data
    size = (cfg.image.height, cfg.image.width)
    if d.kind == "synthetic":
        n = d.n_train if split == "train" else d.n_val
        return SyntheticShapes(
            SyntheticParams(height=size[0], width=size[1], n_images=n, max_shapes=d.max_shapes,
                            num_classes=d.num_classes, seed=d.seed),
            split,
        )
    need_masks = "SEGMENT" in cfg.tasks
    return FolderDataset(d.root, split, size, cfg.seg_decoder.num_classes, require_masks=need_masks)


class ArrayDataset:
    """In-memory images ``(N, H, W, 3)`` and optional masks ``(N, H, W)``."""

    def __init__(self, images: np.ndarray, masks: np.ndarray | None = None, num_classes: int | None = None):
        self.images = np.asarray(images, dtype=np.float32)
        self.masks = None if masks is None else np.asarray(masks, dtype=np.uint8)
        self.has_masks = self.masks is not None
        self.num_classes = num_classes

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int):
        return self.images[i], None if self.masks is None else self.masks[i]

    def stem(self, i: int) -> str:
        return f"item_{i:05d}"

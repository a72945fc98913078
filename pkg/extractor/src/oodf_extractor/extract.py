"""Folder-to-OODF extraction pipeline."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .backbone import (
    CHANNEL_MEAN,
    CHANNEL_STD,
    LAYER_DIMS,
    LAYER_NAMES,
    build_backbone,
    gap_features,
)
from .oodf import write_oodf

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}


@dataclass(frozen=True)
class ExtractionSpec:
    """What to extract: source folder, sizing, normalization, weights."""

    images_dir: str
    resize: tuple = (224, 224)
    normalize_final: bool = True
    weights: str = "pretrained"  # or "random" (fixed-seed, offline)
    batch_size: int = 32
    mean: tuple = CHANNEL_MEAN
    std: tuple = CHANNEL_STD
    extensions: frozenset = field(default_factory=lambda: frozenset(IMAGE_SUFFIXES))


def _list_images(spec: ExtractionSpec):
    root = Path(spec.images_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"image directory not found: {root}")
    return sorted(
        p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in spec.extensions
    )


def _load_tensor(path: Path, spec: ExtractionSpec) -> torch.Tensor:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize(spec.resize, Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(spec.mean, dtype=np.float32)) / np.asarray(
        spec.std, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1))


def extract(spec: ExtractionSpec, out_path) -> dict:
    """Extract GAP features for every readable image into an OODF file.

    Images are processed in sorted-path order. Unreadable files are
    skipped with a warning and listed in the returned manifest; zero
    usable images is an error. The last tap is L2-normalized per row
    unless ``spec.normalize_final`` is off.
    """
    paths = _list_images(spec)
    tapped = build_backbone(spec.weights)
    collected = {name: [] for name in LAYER_NAMES}
    used, skipped = [], []
    batch, batch_paths = [], []

    def flush():
        if not batch:
            return
        feats = gap_features(tapped, torch.stack(batch))
        for name in LAYER_NAMES:
            collected[name].append(feats[name].numpy().astype(np.float32))
        used.extend(batch_paths)
        batch.clear()
        batch_paths.clear()

    for path in paths:
        try:
            tensor = _load_tensor(path, spec)
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            skipped.append({"path": str(path), "reason": str(exc)})
            continue
        batch.append(tensor)
        batch_paths.append(str(path))
        if len(batch) >= spec.batch_size:
            flush()
    flush()

    if not used:
        raise ValueError(f"no usable images under {spec.images_dir}")
    layers = [np.concatenate(collected[name], axis=0) for name in LAYER_NAMES]
    if spec.normalize_final:
        final = layers[-1]
        norms = np.linalg.norm(final, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        layers[-1] = (final / norms).astype(np.float32)
    for arr, dim in zip(layers, LAYER_DIMS):
        assert arr.shape[1] == dim
    write_oodf(out_path, LAYER_NAMES, layers)
    return {
        "out": str(out_path),
        "n_images": len(used),
        "images": used,
        "skipped": skipped,
        "layers": [
            {"name": name, "dim": int(arr.shape[1])}
            for name, arr in zip(LAYER_NAMES, layers)
        ],
        "normalize_final": spec.normalize_final,
        "weights": spec.weights,
    }

"""Batch deep-feature extraction: image tree in, Feature CSV out.

The image directory holds one subdirectory per class (``benign`` -> label 0,
``malignant`` -> label 1). Rows appear benign-first, files sorted within each
class, ids are paths relative to the image root. Undecodable files are
skipped with a warning and listed in ``<out>.skipped.log``.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .formats import atomic_write_bytes, write_feature_csv
from .networks import DEFAULT_NETWORK, build_feature_model, get_network

CLASS_DIRS = (("benign", 0), ("malignant", 1))
BATCH_SIZE = 16


@dataclass(frozen=True)
class ExtractionJob:
    images_dir: str
    network: str = DEFAULT_NETWORK
    out_path: str = "features.csv"
    weights: str | None = "imagenet"
    seed: int = 0
    magnification: str = ""
    batch_size: int = BATCH_SIZE


@dataclass
class ExtractionResult:
    n_rows: int
    n_features: int
    skipped: list[tuple[str, str]] = field(default_factory=list)


def _list_images(images_dir: str) -> list[tuple[str, int]]:
    if not os.path.isdir(images_dir):
        raise FileNotFoundError(f"image directory not found: {images_dir}")
    entries: list[tuple[str, int]] = []
    seen_class_dir = False
    for class_name, label in CLASS_DIRS:
        class_dir = os.path.join(images_dir, class_name)
        if not os.path.isdir(class_dir):
            continue
        seen_class_dir = True
        for root, _, files in sorted(os.walk(class_dir)):
            for fname in sorted(files):
                rel = os.path.relpath(os.path.join(root, fname), images_dir)
                entries.append((rel, label))
    if not seen_class_dir:
        raise FileNotFoundError(
            f"{images_dir} has neither a benign/ nor a malignant/ subdirectory"
        )
    if not entries:
        raise FileNotFoundError(f"{images_dir} contains no image files")
    return entries


def load_image(path: str, size: int) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(rgb, dtype=np.float32)


def extract_features(job: ExtractionJob) -> ExtractionResult:
    spec = get_network(job.network)
    model = build_feature_model(job.network, weights=job.weights, seed=job.seed)
    entries = _list_images(job.images_dir)

    ids: list[str] = []
    labels: list[int] = []
    batches: list[np.ndarray] = []
    skipped: list[tuple[str, str]] = []
    pending: list[np.ndarray] = []

    def flush():
        if pending:
            x = spec.preprocess(np.stack(pending))
            batches.append(np.asarray(model(x, training=False)))
            pending.clear()

    for rel, label in entries:
        path = os.path.join(job.images_dir, rel)
        try:
            pixels = load_image(path, spec.input_size)
        except (OSError, ValueError) as exc:
            reason = str(exc) or exc.__class__.__name__
            print(f"featex: warning: skipping {rel}: {reason}", file=sys.stderr)
            skipped.append((rel, reason))
            continue
        ids.append(rel)
        labels.append(label)
        pending.append(pixels)
        if len(pending) == job.batch_size:
            flush()
    flush()

    if not ids:
        raise ValueError(f"{job.images_dir}: every image failed to decode")
    features = np.concatenate(batches, axis=0)
    write_feature_csv(job.out_path, ids, labels, features)
    if skipped:
        log = "".join(f"{rel}\t{reason}\n" for rel, reason in skipped)
        atomic_write_bytes(job.out_path + ".skipped.log", log.encode("utf-8"))
    return ExtractionResult(
        n_rows=len(ids), n_features=features.shape[1], skipped=skipped
    )

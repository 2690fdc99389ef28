"""End-to-end extraction: images + prompts -> bank directory."""

from __future__ import annotations

import hashlib
import os

import numpy as np
import torch

from . import images
from .bankwriter import write_bank_dir
from .embedder import Embedder
from .spec import MAX_SKIP_FRACTION, ExtractError, ExtractSpec


def _item_seed(spec_seed: int, index: int) -> int:
    blob = f"view:{spec_seed}:{index}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") & 0x7FFFFFFF


def _embed_split(embedder: Embedder, listing: images.SplitListing,
                 spec: ExtractSpec, with_views: bool):
    """Embed one split; returns (features, labels, weak, strong, skipped)."""
    feats, labels = [], []
    weak, strong = [], []
    batch, batch_weak, batch_strong = [], [], []
    skipped = 0

    def flush():
        if not batch:
            return
        feats.append(embedder.embed_images(torch.stack(batch)))
        batch.clear()
        if with_views:
            weak.append(embedder.embed_images(torch.stack(batch_weak)))
            strong.append(embedder.embed_images(torch.stack(batch_strong)))
            batch_weak.clear()
            batch_strong.clear()

    for index, (path, label) in enumerate(zip(listing.paths, listing.labels)):
        img = images.decode(path)
        if img is None:
            skipped += 1
            continue
        batch.append(images.preprocess(img))
        labels.append(label)
        if with_views:
            w, s = images.augmented_views(img, _item_seed(spec.seed, index))
            batch_weak.append(w)
            batch_strong.append(s)
        if len(batch) >= spec.batch_size:
            flush()
    flush()

    dim = spec.embedding_dim
    out = np.concatenate(feats) if feats else np.zeros((0, dim), dtype=np.float32)
    out_w = np.concatenate(weak) if weak else None
    out_s = np.concatenate(strong) if strong else None
    return out, np.asarray(labels, dtype=np.uint32), out_w, out_s, skipped


def extract(spec: ExtractSpec) -> str:
    """Run one extraction job; returns the bank directory path."""
    spec.validate()
    class_names, train, test = images.list_dataset(spec.split_dir)
    embedder = Embedder(spec)

    train_x, train_y, weak, strong, skip_train = _embed_split(
        embedder, train, spec, with_views=spec.emit_augmented)
    test_x, test_y, _, _, skip_test = _embed_split(
        embedder, test, spec, with_views=False)

    total = len(train.paths) + len(test.paths)
    skipped = skip_train + skip_test
    if total == 0:
        raise ExtractError(f"no images found under {spec.split_dir}")
    if skipped:
        print(f"warning: skipped {skipped}/{total} undecodable images")
    if skipped / total > MAX_SKIP_FRACTION:
        raise ExtractError(
            f"skipped {skipped}/{total} images, above the "
            f"{MAX_SKIP_FRACTION:.0%} failure budget")
    if len(train_y) == 0:
        raise ExtractError("train split is empty after decoding")

    write_bank_dir(
        spec.out,
        class_names=class_names,
        prototypes=embedder.class_prototypes(class_names),
        logit_scale=embedder.logit_scale,
        train_features=train_x,
        train_labels=train_y,
        test_features=test_x,
        test_labels=test_y,
        weak_features=weak,
        strong_features=strong,
        backbone=spec.backbone,
        dataset=spec.dataset,
        template=spec.template,
        normalized=False,
    )
    print(f"wrote {spec.out}: {len(train_y)} train / {len(test_y)} test items, "
          f"dim {spec.embedding_dim}, {len(class_names)} classes"
          + (", with augmented views" if spec.emit_augmented else ""))
    return os.path.abspath(spec.out)

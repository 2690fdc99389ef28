"""Extraction job description and validation."""

from __future__ import annotations

from dataclasses import dataclass

# backbone tag -> (pooled backbone width, output embedding dim)
BACKBONES = {
    "RN50": (2048, 1024),
    "ViT-B/16": (768, 512),
}

MAX_SKIP_FRACTION = 0.01


class ExtractError(Exception):
    """Any extraction failure: bad spec, unreadable checkpoint, too many skips."""


@dataclass
class ExtractSpec:
    """One extraction job.

    ``split_dir`` holds ``train/<class>/*`` and optionally ``test/<class>/*``
    image folders. Without a checkpoint the backbone and text prototypes are
    deterministic seeded stand-ins (smoke mode) so the pipeline and format
    can be exercised end to end; see the README for the real-weights path.
    """

    dataset: str
    split_dir: str
    backbone: str = "RN50"
    template: str = "a photo of a {}."
    batch_size: int = 32
    device: str = "cpu"
    emit_augmented: bool = False
    out: str = "bank"
    checkpoint: str | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.backbone not in BACKBONES:
            raise ExtractError(
                f"unknown backbone {self.backbone!r}; choose from {sorted(BACKBONES)}")
        if self.template.count("{}") != 1:
            raise ExtractError(
                f"template must contain exactly one {{}} placeholder: {self.template!r}")
        if self.batch_size < 1:
            raise ExtractError("batch_size must be >= 1")

    @property
    def embedding_dim(self) -> int:
        return BACKBONES[self.backbone][1]

"""Frozen vision backbone + projection to the CLIP embedding width.

The visual side is a torchvision backbone (resnet50 or vit_b_16) with its
classification head replaced by a linear projection into the CLIP embedding
space: 1024-d for RN50, 512-d for ViT-B/16.

Weights come from a local checkpoint when given (see ``load_checkpoint``);
otherwise the backbone and projection are seeded random initializations and
the class prototypes are deterministic prompt-hash embeddings. That smoke
mode produces meaningless but fully deterministic features, which is all the
format/pipeline contract needs.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn
from torchvision.models import resnet50, vit_b_16

from .spec import BACKBONES, ExtractError, ExtractSpec

DEFAULT_LOGIT_SCALE = 100.0  # exp(4.6052), the converged CLIP temperature


def _seed_from(*parts) -> int:
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def _build_visual(backbone: str) -> nn.Module:
    if backbone == "RN50":
        model = resnet50(weights=None)
        model.fc = nn.Identity()
    else:  # ViT-B/16
        model = vit_b_16(weights=None)
        model.heads = nn.Identity()
    return model


class Embedder:
    """Batched image embedding plus prompt prototypes for one spec."""

    def __init__(self, spec: ExtractSpec):
        spec.validate()
        self.spec = spec
        width, dim = BACKBONES[spec.backbone]
        torch.manual_seed(_seed_from("visual", spec.backbone, spec.seed))
        self.visual = _build_visual(spec.backbone)
        self.proj = nn.Linear(width, dim, bias=False)
        self.logit_scale = DEFAULT_LOGIT_SCALE
        self._checkpoint_prototypes: dict[str, np.ndarray] | None = None
        if spec.checkpoint:
            self._load_checkpoint(spec.checkpoint)
        self.visual.to(spec.device).eval()
        self.proj.to(spec.device).eval()
        for p in self.visual.parameters():
            p.requires_grad_(False)

    def _load_checkpoint(self, path: str) -> None:
        """Checkpoint layout: {'visual': state_dict, 'proj': (dim, width)
        tensor, 'logit_scale': float, 'text_prototypes': {name: vector}}.
        All keys optional; missing pieces keep their seeded defaults."""
        try:
            blob = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise ExtractError(f"cannot load checkpoint {path}: {exc}") from exc
        if "visual" in blob:
            self.visual.load_state_dict(blob["visual"])
        if "proj" in blob:
            with torch.no_grad():
                self.proj.weight.copy_(blob["proj"])
        if "logit_scale" in blob:
            self.logit_scale = float(blob["logit_scale"])
        if "text_prototypes" in blob:
            self._checkpoint_prototypes = {
                name: np.asarray(vec, dtype=np.float32)
                for name, vec in blob["text_prototypes"].items()
            }

    @torch.no_grad()
    def embed_images(self, batch: torch.Tensor) -> np.ndarray:
        """(n, 3, 224, 224) preprocessed batch -> (n, dim) float32."""
        feats = self.proj(self.visual(batch.to(self.spec.device)))
        return feats.cpu().numpy().astype(np.float32)

    def class_prototypes(self, class_names: list[str]) -> np.ndarray:
        """Unit-norm prototype per class from the (single) prompt template.

        With one template the paper's average over prompts degenerates to
        that prompt's embedding. Checkpoint prototypes win when present;
        otherwise each prompt hashes to a seeded Gaussian direction.
        """
        dim = self.spec.embedding_dim
        rows = []
        for name in class_names:
            prompt = self.spec.template.format(name.replace("_", " "))
            if self._checkpoint_prototypes is not None:
                if name not in self._checkpoint_prototypes:
                    raise ExtractError(f"checkpoint has no text prototype for {name!r}")
                vec = self._checkpoint_prototypes[name].astype(np.float64)
                if vec.shape != (dim,):
                    raise ExtractError(
                        f"prototype for {name!r} has shape {vec.shape}, expected ({dim},)")
            else:
                rng = np.random.default_rng(_seed_from("prompt", prompt, dim))
                vec = rng.normal(size=dim)
            rows.append(vec / np.linalg.norm(vec))
        return np.stack(rows).astype(np.float32)

"""Image-folder listing, deterministic preprocessing, and view augmentation."""

from __future__ import annotations

import os
from dataclasses import dataclass

import torch
from PIL import Image
from torchvision import transforms
from torchvision.transforms import InterpolationMode

from .spec import ExtractError

IMAGE_SIZE = 224
# CLIP preprocessing statistics
MEAN = (0.48145466, 0.4578275, 0.40821073)
STD = (0.26862954, 0.26130258, 0.27577711)
IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".webp")

_base = transforms.Compose([
    transforms.Resize(IMAGE_SIZE, interpolation=InterpolationMode.BICUBIC),
    transforms.CenterCrop(IMAGE_SIZE),
    transforms.ToTensor(),
    transforms.Normalize(MEAN, STD),
])

# weak view: horizontal flip plus a small translation
_weak = transforms.Compose([
    transforms.RandomHorizontalFlip(p=0.5),
    transforms.RandomAffine(degrees=0, translate=(0.05, 0.05),
                            interpolation=InterpolationMode.BILINEAR),
    transforms.Resize(IMAGE_SIZE, interpolation=InterpolationMode.BICUBIC),
    transforms.CenterCrop(IMAGE_SIZE),
    transforms.ToTensor(),
    transforms.Normalize(MEAN, STD),
])

# strong view: RandAugment plus random erasing (our stand-in for the
# loosely specified CTAugment-style policy; magnitude fixed below)
_strong = transforms.Compose([
    transforms.RandAugment(num_ops=2, magnitude=9),
    transforms.Resize(IMAGE_SIZE, interpolation=InterpolationMode.BICUBIC),
    transforms.CenterCrop(IMAGE_SIZE),
    transforms.ToTensor(),
    transforms.Normalize(MEAN, STD),
    transforms.RandomErasing(p=0.5, scale=(0.02, 0.2)),
])


@dataclass
class SplitListing:
    """Sorted image paths and integer labels for one dataset split."""

    paths: list[str]
    labels: list[int]


def list_dataset(split_dir: str) -> tuple[list[str], SplitListing, SplitListing]:
    """Scan ``split_dir/train`` (required) and ``split_dir/test`` (optional).

    Class names are the sorted train subdirectory names; labels index into
    that order for both splits. Files are sorted for determinism.
    """
    train_dir = os.path.join(split_dir, "train")
    if not os.path.isdir(train_dir):
        raise ExtractError(f"no train split at {train_dir}")
    class_names = sorted(
        d for d in os.listdir(train_dir) if os.path.isdir(os.path.join(train_dir, d)))
    if not class_names:
        raise ExtractError(f"no class folders under {train_dir}")
    label_of = {name: i for i, name in enumerate(class_names)}

    def scan(root: str) -> SplitListing:
        paths, labels = [], []
        if os.path.isdir(root):
            for name in sorted(os.listdir(root)):
                cls_dir = os.path.join(root, name)
                if not os.path.isdir(cls_dir):
                    continue
                if name not in label_of:
                    raise ExtractError(f"class {name!r} in {root} not present in train")
                for fname in sorted(os.listdir(cls_dir)):
                    if fname.lower().endswith(IMAGE_EXTENSIONS):
                        paths.append(os.path.join(cls_dir, fname))
                        labels.append(label_of[name])
        return SplitListing(paths, labels)

    return class_names, scan(train_dir), scan(os.path.join(split_dir, "test"))


def decode(path: str) -> Image.Image | None:
    """Open and convert to RGB; None on any decode failure (caller counts)."""
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except Exception:
        return None


def preprocess(img: Image.Image) -> torch.Tensor:
    return _base(img)


def augmented_views(img: Image.Image, item_seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    """One (weak, strong) tensor pair, fully determined by ``item_seed``."""
    torch.manual_seed(item_seed)
    weak = _weak(img)
    torch.manual_seed(item_seed ^ 0x5712076)
    strong = _strong(img)
    return weak, strong

"""Feature-bank extractor for the hoso-adapter engine.

Runs a frozen vision backbone over an image-folder dataset, embeds the class
prompts, and writes the bank directory format (manifest.json + little-endian
float32/uint32 payloads) that ``hoso`` consumes.
"""

from .spec import BACKBONES, ExtractSpec, ExtractError
from .extract import extract

__all__ = ["BACKBONES", "ExtractSpec", "ExtractError", "extract"]
__version__ = "0.1.0"

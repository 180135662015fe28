"""Content addressing for serialized models (SHA-256 over canonical bytes)."""

import hashlib

from . import nn

__all__ = ["blob_digest", "model_digest"]


def blob_digest(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def model_digest(model: nn.ModelParams) -> str:
    return blob_digest(nn.to_bytes(model))

"""Batch embedding extraction from pretrained vision backbones to ATCF."""

from .backbones import BACKBONES, get_backbone
from .extract import ExtractJob, extract

__all__ = ["BACKBONES", "ExtractJob", "extract", "get_backbone"]

"""Pretrained backbone registry.

Each backbone exposes embed(images) -> (B, dim) float array plus enough
metadata for the output manifest. Heavy dependencies (torch, torchvision,
transformers) are imported lazily so the package installs and the registry
is inspectable without them; loading a backbone without its weights
available raises BackboneUnavailable with a clear diagnostic.

Vision classifiers are tapped at the average-pooling layer before the
classification head; CLIP models use the non-normalized image encoder
output (the projected embedding, without L2 normalization).
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np


class BackboneUnavailable(RuntimeError):
    """Weights or a required dependency could not be loaded."""


@dataclass(frozen=True)
class BackboneSpec:
    """Registry entry: output dimension and a loader for the live backbone."""

    name: str
    dim: int
    loader: Callable
    transform_id: str


class Backbone:
    """A loaded model ready for batch inference.

    preprocess maps one PIL image to a CHW float tensor; embed runs a batch
    of preprocessed tensors and returns a (B, dim) float64 array.
    """

    def __init__(self, spec: BackboneSpec, preprocess, embed_fn):
        self.spec = spec
        self.preprocess = preprocess
        self._embed = embed_fn

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def transform_id(self) -> str:
        return self.spec.transform_id

    def embed(self, batch) -> np.ndarray:
        out = np.asarray(self._embed(batch), dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.spec.dim:
            raise BackboneUnavailable(
                f"{self.spec.name} produced shape {out.shape}, "
                f"expected (B, {self.spec.dim})")
        return out


def _import_torch():
    try:
        import torch
        return torch
    except ImportError as exc:
        raise BackboneUnavailable(
            "torch is required for pretrained backbones; install the "
            "[torch] extra") from exc


def _torchvision_backbone(spec, model_fn, weights_attr, device):
    torch = _import_torch()
    try:
        import torchvision.models as tvm
    except ImportError as exc:
        raise BackboneUnavailable("torchvision is required") from exc
    try:
        weights = getattr(tvm, weights_attr).DEFAULT
        model = getattr(tvm, model_fn)(weights=weights)
    except Exception as exc:
        raise BackboneUnavailable(
            f"could not load {spec.name} weights: {exc}") from exc
    # drop the classification head; keep everything through average pooling
    model.eval().to(device)
    tf = weights.transforms()

    def embed(batch):
        with torch.no_grad():
            x = torch.stack([torch.as_tensor(np.asarray(b)) for b in batch])
            x = x.to(device)
            if model_fn == "resnet50":
                feats = torch.nn.Sequential(
                    *list(model.children())[:-1])(x).flatten(1)
            else:  # mobilenet_v3_large: features -> avgpool, skip classifier
                feats = model.avgpool(model.features(x)).flatten(1)
        return feats.cpu().numpy()

    return Backbone(spec, lambda img: tf(img), embed)


def _clip_backbone(spec, hf_name, device):
    torch = _import_torch()
    try:
        from transformers import CLIPImageProcessor, CLIPVisionModelWithProjection
    except ImportError as exc:
        raise BackboneUnavailable("transformers is required for CLIP") from exc
    try:
        model = CLIPVisionModelWithProjection.from_pretrained(hf_name)
        processor = CLIPImageProcessor.from_pretrained(hf_name)
    except Exception as exc:
        raise BackboneUnavailable(
            f"could not load {spec.name} weights: {exc}") from exc
    model.eval().to(device)

    def preprocess(img):
        out = processor(images=img, return_tensors="np")
        return out["pixel_values"][0]

    def embed(batch):
        with torch.no_grad():
            x = torch.as_tensor(np.stack([np.asarray(b) for b in batch]))
            out = model(pixel_values=x.to(device))
        return out.image_embeds.cpu().numpy()  # non-normalized projection

    return Backbone(spec, preprocess, embed)


def _make_registry():
    specs = {}

    def add(name, dim, transform_id, loader):
        specs[name] = BackboneSpec(name=name, dim=dim, loader=loader,
                                   transform_id=transform_id)

    add("resnet50", 2048, "torchvision.ResNet50_Weights.DEFAULT.transforms",
        lambda spec, device: _torchvision_backbone(
            spec, "resnet50", "ResNet50_Weights", device))
    add("mobilenet-v3-large", 960,
        "torchvision.MobileNet_V3_Large_Weights.DEFAULT.transforms",
        lambda spec, device: _torchvision_backbone(
            spec, "mobilenet_v3_large", "MobileNet_V3_Large_Weights", device))
    add("clip-vit-l-14", 768, "transformers.CLIPImageProcessor",
        lambda spec, device: _clip_backbone(
            spec, "openai/clip-vit-large-patch14", device))
    add("clip-vit-b-32", 512, "transformers.CLIPImageProcessor",
        lambda spec, device: _clip_backbone(
            spec, "openai/clip-vit-base-patch32", device))
    return specs


BACKBONES = _make_registry()


def get_backbone(name: str, device: str = "cpu") -> Backbone:
    """Load a registered backbone onto a device."""
    if name not in BACKBONES:
        known = ", ".join(sorted(BACKBONES))
        raise KeyError(f"unknown backbone {name!r}; known: {known}")
    spec = BACKBONES[name]
    return spec.loader(spec, device)

"""Run a backbone over an image folder and write an ATCF feature file.

The output is exactly the primary codec's feature format, produced through
its public writer, so everything extracted here can be fitted and encoded
end to end. A JSON manifest sidecar records the backbone, preprocessing
identity and content hashes for reproducibility.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from atcodec.codec import write_features
from atcodec.gmm import FeatureSet

from .backbones import Backbone, get_backbone

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".webp")


@dataclass
class ExtractJob:
    """One extraction run: backbone, image source, ATCF destination."""

    model: str
    input_dir: Path
    output: Path
    batch_size: int = 32
    device: str = "cpu"
    labeled: bool = False  # directory names become integer labels

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        self.output = Path(self.output)
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def _list_images(root: Path):
    return sorted(p for p in root.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def collect_images(job: ExtractJob):
    """Deterministic (path, label) list; labels are None unless requested."""
    root = job.input_dir
    if not root.is_dir():
        raise FileNotFoundError(f"input directory not found: {root}")
    if job.labeled:
        classes = sorted(d for d in root.iterdir() if d.is_dir())
        if not classes:
            raise FileNotFoundError(f"no class directories under {root}")
        pairs = [(p, idx) for idx, d in enumerate(classes)
                 for p in _list_images(d)]
    else:
        pairs = [(p, None) for p in _list_images(root)]
    if not pairs:
        raise FileNotFoundError(f"no images found under {root}")
    return pairs


def _load_image(path: Path):
    from PIL import Image, UnidentifiedImageError
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (OSError, UnidentifiedImageError) as exc:
        raise OSError(f"unreadable image {path}: {exc}") from exc


def extract(job: ExtractJob, backbone: Optional[Backbone] = None) -> Path:
    """Embed every image and write ATCF plus a manifest sidecar.

    A preloaded backbone can be injected (tests use a stub); otherwise the
    registered one is loaded for job.model. Output order follows the sorted
    path order, so repeated runs are byte-identical.
    """
    pairs = collect_images(job)
    if backbone is None:
        backbone = get_backbone(job.model, job.device)
    vectors = np.empty((len(pairs), backbone.dim))
    for start in range(0, len(pairs), job.batch_size):
        chunk = pairs[start:start + job.batch_size]
        batch = [backbone.preprocess(_load_image(p)) for p, _ in chunk]
        vectors[start:start + len(chunk)] = backbone.embed(batch)

    labels = None
    if job.labeled:
        labels = np.array([lab for _, lab in pairs], dtype=np.int64)
    payload = write_features(FeatureSet(vectors, labels))
    job.output.parent.mkdir(parents=True, exist_ok=True)
    job.output.write_bytes(payload)
    _write_manifest(job, backbone, pairs, payload)
    return job.output


def _write_manifest(job, backbone, pairs, payload):
    inputs = hashlib.sha256()
    for path, _ in pairs:
        inputs.update(str(path).encode())
        inputs.update(path.read_bytes())
    manifest = {
        "tool": "embed-extract",
        "model": job.model,
        "dim": backbone.dim,
        "count": len(pairs),
        "labeled": job.labeled,
        "transform": backbone.transform_id,
        "inputs_sha256": inputs.hexdigest(),
        "output": str(job.output),
        "output_sha256": hashlib.sha256(payload).hexdigest(),
    }
    sidecar = job.output.with_name(job.output.name + ".manifest.json")
    sidecar.write_text(json.dumps(manifest, indent=2) + "\n")

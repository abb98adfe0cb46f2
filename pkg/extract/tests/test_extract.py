"""Extraction pipeline tests against an injected stub backbone.

Real pretrained weights are not fetched in tests; the stub satisfies the
Backbone interface with a deterministic pixel projection, which is enough
to cover file discovery, labeling, batching, ATCF interoperability with the
codec package, determinism and the manifest sidecar.
"""

import json

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from atcodec.codec import design, decode_set, encode_set, read_features
from embed_extract import BACKBONES, ExtractJob, extract
from embed_extract.backbones import Backbone, BackboneSpec
from embed_extract.cli import main as cli_main

STUB_DIM = 16


def make_stub(dim=STUB_DIM):
    spec = BackboneSpec(name="stub", dim=dim, loader=None,
                        transform_id="stub-v1")
    rng = np.random.default_rng(99)
    proj = rng.standard_normal((8 * 8 * 3, dim))

    def preprocess(img):
        small = img.resize((8, 8), Image.BILINEAR)
        return np.asarray(small, dtype=np.float64).ravel() / 255.0

    def embed(batch):
        return np.stack(batch) @ proj

    return Backbone(spec, preprocess, embed)


def write_image(path, seed, size=(24, 18)):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(arr).save(path)


@pytest.fixture
def image_dir(tmp_path):
    root = tmp_path / "imgs"
    root.mkdir()
    for i in range(7):
        write_image(root / f"img_{i:02d}.png", seed=i)
    return root


def test_registry_matches_published_dims():
    dims = {name: spec.dim for name, spec in BACKBONES.items()}
    assert dims == {
        "resnet50": 2048,
        "mobilenet-v3-large": 960,
        "clip-vit-l-14": 768,
        "clip-vit-b-32": 512,
    }


def test_unknown_backbone_rejected():
    from embed_extract import get_backbone
    with pytest.raises(KeyError, match="unknown backbone"):
        get_backbone("vgg16")


def test_extract_writes_readable_atcf(image_dir, tmp_path):
    out = tmp_path / "feats.atcf"
    job = ExtractJob(model="resnet50", input_dir=image_dir, output=out,
                     batch_size=3)
    extract(job, backbone=make_stub())
    data = read_features(out.read_bytes())
    assert data.count == 7
    assert data.dim == STUB_DIM
    assert data.labels is None
    assert np.all(np.isfinite(data.vectors))


def test_single_image(image_dir, tmp_path):
    solo = tmp_path / "solo"
    solo.mkdir()
    write_image(solo / "one.png", seed=42)
    out = tmp_path / "one.atcf"
    extract(ExtractJob(model="resnet50", input_dir=solo, output=out),
            backbone=make_stub())
    data = read_features(out.read_bytes())
    assert (data.count, data.dim) == (1, STUB_DIM)


def test_directory_labels(tmp_path):
    root = tmp_path / "classes"
    for ci, name in enumerate(["cats", "dogs"]):
        d = root / name
        d.mkdir(parents=True)
        for i in range(3):
            write_image(d / f"{i}.png", seed=100 * ci + i)
    out = tmp_path / "labeled.atcf"
    extract(ExtractJob(model="resnet50", input_dir=root, output=out,
                       labeled=True), backbone=make_stub())
    data = read_features(out.read_bytes())
    assert data.count == 6
    assert sorted(set(data.labels.tolist())) == [0, 1]
    # class directories are sorted, so cats -> 0, dogs -> 1
    assert data.labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_determinism_across_runs(image_dir, tmp_path):
    outs = []
    for run in range(2):
        out = tmp_path / f"run{run}.atcf"
        extract(ExtractJob(model="resnet50", input_dir=image_dir, output=out,
                           batch_size=2), backbone=make_stub())
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_batch_size_does_not_change_output(image_dir, tmp_path):
    outs = []
    for bs in (1, 4, 100):
        out = tmp_path / f"bs{bs}.atcf"
        extract(ExtractJob(model="resnet50", input_dir=image_dir, output=out,
                           batch_size=bs), backbone=make_stub())
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_manifest_sidecar(image_dir, tmp_path):
    import hashlib
    out = tmp_path / "feats.atcf"
    extract(ExtractJob(model="resnet50", input_dir=image_dir, output=out),
            backbone=make_stub())
    manifest = json.loads((tmp_path / "feats.atcf.manifest.json").read_text())
    assert manifest["model"] == "resnet50"
    assert manifest["dim"] == STUB_DIM
    assert manifest["count"] == 7
    assert manifest["transform"] == "stub-v1"
    assert manifest["output_sha256"] == hashlib.sha256(
        out.read_bytes()).hexdigest()


def test_missing_and_empty_inputs(tmp_path):
    with pytest.raises(FileNotFoundError, match="not found"):
        extract(ExtractJob(model="resnet50", input_dir=tmp_path / "nope",
                           output=tmp_path / "x.atcf"), backbone=make_stub())
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(FileNotFoundError, match="no images"):
        extract(ExtractJob(model="resnet50", input_dir=empty,
                           output=tmp_path / "x.atcf"), backbone=make_stub())


def test_bad_batch_size_rejected(image_dir, tmp_path):
    with pytest.raises(ValueError, match="batch size"):
        ExtractJob(model="resnet50", input_dir=image_dir,
                   output=tmp_path / "x.atcf", batch_size=0)


def test_unreadable_image_diagnostic(tmp_path):
    root = tmp_path / "broken"
    root.mkdir()
    (root / "fake.png").write_bytes(b"this is not an image")
    with pytest.raises(OSError, match="unreadable image"):
        extract(ExtractJob(model="resnet50", input_dir=root,
                           output=tmp_path / "x.atcf"), backbone=make_stub())


def test_codec_round_trip_on_extracted_features(image_dir, tmp_path):
    """Cross-component check: extracted ATCF fits and encodes end to end."""
    out = tmp_path / "feats.atcf"
    extract(ExtractJob(model="resnet50", input_dir=image_dir, output=out),
            backbone=make_stub())
    data = read_features(out.read_bytes())
    model = design(data, thetas=[float(np.var(data.vectors))])
    stream = encode_set(model, 0, data)
    recon = decode_set(model, stream)
    assert recon.vectors.shape == data.vectors.shape


def test_cli_with_stub(image_dir, tmp_path, monkeypatch):
    import importlib
    ext_mod = importlib.import_module("embed_extract.extract")
    monkeypatch.setattr(ext_mod, "get_backbone",
                        lambda name, device: make_stub())
    out = tmp_path / "cli.atcf"
    result = CliRunner().invoke(cli_main, [
        str(image_dir), "--model", "resnet50", "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert read_features(out.read_bytes()).count == 7


def test_cli_missing_dir_exit_code(tmp_path):
    result = CliRunner().invoke(cli_main, [
        str(tmp_path / "nope"), "--model", "resnet50",
        "-o", str(tmp_path / "x.atcf")])
    assert result.exit_code == 2

"""Command-line surface: reproducible fit / encode / decode / sweep workflows.

Every command writes a JSON manifest next to its primary output recording
the parameters, input/output hashes and (where applicable) the model id, so
a run can be reproduced from the manifest alone.

Exit codes: 0 success, 2 usage, 3 I/O, 4 file-format or model mismatch,
5 numerical failure.
"""

import functools
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import codec as codec_mod
from . import evalkit, pca as pca_mod
from .errors import (AtcodecError, CorruptModel, CorruptStream, InvalidInput,
                     ModelMismatch, NumericalFailure, UnsupportedVersion)
from .gmm import FeatureSet, fit_supervised
from .quantizer import DEFAULT_LADDER
from .synth import synthetic_source

EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_NUMERICAL = 5


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (CorruptStream, CorruptModel, ModelMismatch,
                UnsupportedVersion) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FORMAT)
        except NumericalFailure as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except InvalidInput as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except AtcodecError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
    return wrapper


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(command: str, params: dict, inputs, outputs,
                    model_id: str = None):
    manifest = {
        "command": command,
        "params": params,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs},
    }
    if model_id is not None:
        manifest["model_id"] = model_id
    primary = Path(outputs[0])
    path = primary.with_name(primary.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_floats(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_ints(text: str):
    return [int(v) for v in text.split(",") if v.strip()]


def _load_model(path: str):
    return codec_mod.deserialize_model(Path(path).read_bytes())


def _load_features(path: str) -> FeatureSet:
    return codec_mod.read_features(Path(path).read_bytes())


@click.group()
def main():
    """Adaptive transform coding for semantic feature compression."""


@main.command("synth")
@click.option("--components", "-k", default=5, show_default=True)
@click.option("--dim", "-n", default=32, show_default=True)
@click.option("--count", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--separation", default=6.0, show_default=True,
              help="Pairwise mean separation in units of the largest sigma.")
@click.option("--eig-max", default=4.0, show_default=True)
@click.option("--eig-min", default=0.01, show_default=True)
@click.option("--out", "-o", required=True, type=click.Path())
@_handle_errors
def cmd_synth(components, dim, count, seed, separation, eig_max, eig_min, out):
    """Sample a synthetic mixture source into an ATCF feature file."""
    source = synthetic_source(components, dim, seed=seed,
                              separation=separation, eig_max=eig_max,
                              eig_min=eig_min)
    data = source.sample(count, seed=seed + 1)
    Path(out).write_bytes(codec_mod.write_features(data))
    _write_manifest("synth", {
        "components": components, "dim": dim, "count": count, "seed": seed,
        "separation": separation, "eig_max": eig_max, "eig_min": eig_min,
    }, inputs=[], outputs=[out])
    click.echo(f"wrote {count} vectors of dim {dim} to {out}")


def _fit_common(features, out, thetas, k, reg, seed, ladder, gamma,
                supervised, verbose, command):
    data = _load_features(features)
    theta_list = _parse_floats(thetas)
    ladder_list = _parse_ints(ladder) if ladder else list(DEFAULT_LADDER)
    prefit = None
    if supervised:
        superclass_map = None
        if supervised != "-":
            raw = json.loads(Path(supervised).read_text())
            superclass_map = {int(a): int(b) for a, b in raw.items()}
        if gamma is not None:
            stage = pca_mod.fit_global_pca(data)
            stage = stage.truncate(pca_mod.select_M(stage.spectrum, gamma))
            prefit = fit_supervised(pca_mod.reduce(stage, data),
                                    superclass_map=superclass_map, reg=reg)
        else:
            prefit = fit_supervised(data, superclass_map=superclass_map,
                                    reg=reg)
    model = codec_mod.design(data, thetas=theta_list, n_components=k, reg=reg,
                             seed=seed, ladder=ladder_list, gamma=gamma,
                             prefit_gmm=prefit)
    if verbose and model.gmm.log_likelihoods_.size:
        for i, ll in enumerate(model.gmm.log_likelihoods_):
            click.echo(f"iter {i:3d}  log-likelihood {ll:.6f}")
    Path(out).write_bytes(codec_mod.serialize_model(model))
    _write_manifest(command, {
        "components": k, "reg": reg, "seed": seed, "thetas": theta_list,
        "ladder": ladder_list, "gamma": gamma,
        "supervised": bool(supervised),
    }, inputs=[features], outputs=[out], model_id=model.model_id.hex())
    return model


@main.command("fit")
@click.argument("features", type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--thetas", required=True,
              help="Comma-separated quality points (water levels).")
@click.option("--components", "-k", default=1, show_default=True)
@click.option("--reg", default=1e-6, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--ladder", default="", help="Comma-separated level counts.")
@click.option("--supervised", default="",
              help="Path to a JSON label->superclass map, or '-' to use "
                   "labels as components directly.")
@click.option("--verbose", "-v", is_flag=True)
@_handle_errors
def cmd_fit(features, out, thetas, components, reg, seed, ladder, supervised,
            verbose):
    """Fit the mixture + quantizer bank + quality maps into a model file."""
    model = _fit_common(features, out, thetas, components, reg, seed, ladder,
                        None, supervised, verbose, "fit")
    click.echo(f"model {model.model_id.hex()} -> {out}")


@main.command("pca-fit")
@click.argument("features", type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--thetas", required=True)
@click.option("--gamma", default=0.99, show_default=True,
              help="Explained-variance threshold selecting M.")
@click.option("--components", "-k", default=1, show_default=True)
@click.option("--reg", default=1e-6, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--ladder", default="")
@click.option("--supervised", default="")
@click.option("--verbose", "-v", is_flag=True)
@_handle_errors
def cmd_pca_fit(features, out, thetas, gamma, components, reg, seed, ladder,
                supervised, verbose):
    """Fit the PCA-reduced variant and report the parameter savings."""
    model = _fit_common(features, out, thetas, components, reg, seed, ladder,
                        gamma, supervised, verbose, "pca-fit")
    n = model.pca.n_features
    m = model.pca.m
    k = model.gmm.k_
    full = pca_mod.param_count(n, None, k, "full")
    reduced = pca_mod.param_count(n, m, k, "pca")
    click.echo(f"selected M={m} of N={n} (gamma={gamma})")
    click.echo(f"parameters: full={full}  pca={reduced}")
    click.echo(f"model {model.model_id.hex()} -> {out}")


@main.command("encode")
@click.argument("model_file", type=click.Path(exists=True))
@click.argument("features", type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--theta-id", default=0, show_default=True)
@click.option("--coder", type=click.Choice(["ac", "flc"]), default="ac",
              show_default=True)
@_handle_errors
def cmd_encode(model_file, features, out, theta_id, coder):
    """Encode a feature file into an ATCS bitstream."""
    model = _load_model(model_file)
    data = _load_features(features)
    stream = codec_mod.encode_set(model, theta_id, data, coder=coder)
    Path(out).write_bytes(stream.to_bytes())
    model_rate, actual = codec_mod.measure_rate(model, theta_id, data,
                                                coder=coder)
    dim = data.dim
    click.echo(f"model rate {model_rate:.3f} bits/vec "
               f"({model_rate / dim:.4f} bits/dim); "
               f"actual {actual:.3f} bits/vec ({actual / dim:.4f} bits/dim)")
    _write_manifest("encode", {
        "theta_id": theta_id, "coder": coder,
        "model_rate_bits": model_rate, "actual_bits": actual,
    }, inputs=[model_file, features], outputs=[out],
        model_id=model.model_id.hex())


@main.command("decode")
@click.argument("model_file", type=click.Path(exists=True))
@click.argument("stream_file", type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@_handle_errors
def cmd_decode(model_file, stream_file, out):
    """Decode an ATCS bitstream back into an ATCF feature file."""
    model = _load_model(model_file)
    stream = codec_mod.EncodedStream.from_bytes(Path(stream_file).read_bytes())
    data = codec_mod.decode_set(model, stream)
    Path(out).write_bytes(codec_mod.write_features(data))
    _write_manifest("decode", {"theta_id": stream.theta_idx},
                    inputs=[model_file, stream_file], outputs=[out],
                    model_id=model.model_id.hex())
    click.echo(f"decoded {data.count} vectors -> {out}")


@main.command("sweep")
@click.argument("model_files", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--features", "-f", required=True, type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--thetas", default="", help="Override the baked quality points.")
@click.option("--jsonl", is_flag=True, help="Emit JSON lines instead of CSV.")
@click.option("--max-coded", default=None, type=int,
              help="Cap vectors run through the entropy coder per point.")
@_handle_errors
def cmd_sweep(model_files, features, out, thetas, jsonl, max_coded):
    """Rate-distortion sweep over models and quality points, to CSV/JSONL."""
    models = [_load_model(p) for p in model_files]
    data = _load_features(features)
    theta_list = _parse_floats(thetas) if thetas else None
    report = evalkit.rd_sweep(models, data, thetas=theta_list,
                              max_coded=max_coded)
    Path(out).write_text(report.to_jsonl() if jsonl else report.to_csv())
    _write_manifest("sweep", {"thetas": theta_list, "jsonl": jsonl},
                    inputs=list(model_files) + [features], outputs=[out])
    click.echo(f"wrote {len(report.rows)} sweep rows -> {out}")


@main.command("compare")
@click.argument("adaptive_model", type=click.Path(exists=True))
@click.argument("baseline_model", type=click.Path(exists=True))
@click.option("--features", "-f", required=True, type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--thetas", default="")
@click.option("--baseline-thetas", default="")
@click.option("--max-coded", default=None, type=int)
@_handle_errors
def cmd_compare(adaptive_model, baseline_model, features, out, thetas,
                baseline_thetas, max_coded):
    """Adaptive-vs-baseline comparison at matched rates, to JSON."""
    model_a = _load_model(adaptive_model)
    model_b = _load_model(baseline_model)
    data = _load_features(features)
    summary = evalkit.compare_adaptive(
        model_a, model_b, data,
        thetas=_parse_floats(thetas) if thetas else None,
        baseline_thetas=_parse_floats(baseline_thetas) if baseline_thetas
        else None,
        max_coded=max_coded)
    Path(out).write_text(json.dumps(summary, indent=2) + "\n")
    _write_manifest("compare", {}, inputs=[adaptive_model, baseline_model,
                                           features], outputs=[out])
    click.echo(f"win rate {summary['win_rate']:.3f} -> {out}")


if __name__ == "__main__":
    main()

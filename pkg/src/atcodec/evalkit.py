"""Metrics and experiment harness: NMSE, cosine similarity, RD sweeps.

Reports are plain data (CSV with a fixed column order, or JSON lines);
plotting stays out of the library.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import codec as codec_mod
from . import rdtheory
from .errors import InvalidInput
from .gmm import FeatureSet

REPORT_COLUMNS = (
    "K", "theta", "model_rate_bits", "actual_bits", "flc_bits", "nmse",
    "mean_cosine", "theory_conditional_rate", "theory_genie_rate",
    "theory_distortion",
)


def nmse(original, reconstructed, normalization: str = "variance") -> float:
    """Reconstruction MSE normalized by the original data's spread.

    normalization="variance" divides by sum ||x_i - x_bar||^2 (the default,
    anchoring the zero-rate K=1 point at 1); "energy" divides by the raw
    second moment sum ||x_i||^2 for comparisons against external numbers.
    """
    x = original.vectors if isinstance(original, FeatureSet) else np.atleast_2d(original)
    xhat = reconstructed.vectors if isinstance(reconstructed, FeatureSet) \
        else np.atleast_2d(reconstructed)
    if x.shape != xhat.shape:
        raise InvalidInput("shape mismatch between original and reconstruction")
    if normalization == "variance":
        denom = float(np.sum((x - x.mean(axis=0)) ** 2))
    elif normalization == "energy":
        denom = float(np.sum(x ** 2))
    else:
        raise InvalidInput(f"unknown normalization {normalization!r}")
    if denom <= 0:
        raise InvalidInput("degenerate data: zero normalization denominator")
    return float(np.sum((x - xhat) ** 2)) / denom


def mean_cosine(original, reconstructed) -> float:
    """Mean cosine similarity between paired rows."""
    x = original.vectors if isinstance(original, FeatureSet) else np.atleast_2d(original)
    xhat = reconstructed.vectors if isinstance(reconstructed, FeatureSet) \
        else np.atleast_2d(reconstructed)
    if x.shape != xhat.shape:
        raise InvalidInput("shape mismatch between original and reconstruction")
    nx = np.linalg.norm(x, axis=1)
    nxh = np.linalg.norm(xhat, axis=1)
    if np.any(nx == 0) or np.any(nxh == 0):
        raise InvalidInput("cosine similarity undefined for zero vectors")
    return float(np.mean(np.sum(x * xhat, axis=1) / (nx * nxh)))


@dataclass
class RdReport:
    """Sweep results, one row per (K, theta), sorted by that key."""

    rows: list = field(default_factory=list)

    def add(self, **kwargs):
        row = {col: kwargs[col] for col in REPORT_COLUMNS}
        if not all(np.isfinite(v) for v in row.values()):
            raise InvalidInput("report rows must be finite")
        self.rows.append(row)
        self.rows.sort(key=lambda r: (r["K"], r["theta"]))

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=REPORT_COLUMNS,
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return out.getvalue()

    def to_jsonl(self) -> str:
        return "".join(json.dumps(row) + "\n" for row in self.rows)


def _theta_index(model, theta: float) -> int:
    existing = model.thetas
    hits = np.flatnonzero(np.isclose(existing, theta, rtol=1e-12, atol=0.0))
    if hits.size:
        return int(hits[0])
    model.add_quality_point(theta)
    return len(model.maps) - 1


def rd_sweep(models, data, thetas=None, coder: str = "ac",
             max_coded=None) -> RdReport:
    """Encode/decode the data at each (model, theta) and attach theory curves.

    thetas=None sweeps each model's baked quality points; otherwise missing
    quality points are appended to the model. max_coded caps the number of
    vectors run through the entropy coder for the actual_bits column.
    """
    data = data if isinstance(data, FeatureSet) else FeatureSet(data)
    if isinstance(models, codec_mod.CodecModel):
        models = [models]
    report = RdReport()
    for model in models:
        sweep_thetas = [m.theta for m in model.maps] if thetas is None else thetas
        for theta in sweep_thetas:
            idx = _theta_index(model, float(theta))
            _, _, recon = codec_mod.quantize_batch(model, idx, data.vectors)
            model_rate, actual = codec_mod.measure_rate(
                model, idx, data, coder=coder, max_coded=max_coded)
            cond = rdtheory.conditional_rd(model.gmm, theta)
            genie = rdtheory.genie_bound(model.gmm, theta)
            theory_distortion = cond.distortion
            if model.pca is not None:
                theory_distortion += model.pca.discarded_energy
            report.add(
                K=model.gmm.k_,
                theta=float(theta),
                model_rate_bits=model_rate,
                actual_bits=actual,
                flc_bits=codec_mod.mean_flc_bits(model, idx, data),
                nmse=nmse(data.vectors, recon),
                mean_cosine=mean_cosine(data.vectors, recon),
                theory_conditional_rate=cond.rate_bits,
                theory_genie_rate=genie.rate_bits,
                theory_distortion=theory_distortion,
            )
    return report


def compare_adaptive(adaptive_model, baseline_model, data, thetas=None,
                     baseline_thetas=None, coder: str = "ac",
                     max_coded=None) -> dict:
    """Match sweep points of two codecs by model rate and report metric deltas.

    For each adaptive sweep point, the baseline point with the nearest model
    rate is selected; deltas are adaptive minus baseline, so negative NMSE
    deltas are adaptive wins. Swapping the two models negates the deltas.
    """
    sweep_a = rd_sweep(adaptive_model, data, thetas=thetas, coder=coder,
                       max_coded=max_coded).rows
    sweep_b = rd_sweep(baseline_model, data, thetas=baseline_thetas or thetas,
                       coder=coder, max_coded=max_coded).rows
    rates_b = np.array([r["model_rate_bits"] for r in sweep_b])
    buckets = []
    for row in sweep_a:
        j = int(np.argmin(np.abs(rates_b - row["model_rate_bits"])))
        other = sweep_b[j]
        denom = max(row["model_rate_bits"], other["model_rate_bits"], 1e-12)
        buckets.append({
            "adaptive_rate": row["model_rate_bits"],
            "baseline_rate": other["model_rate_bits"],
            "rate_mismatch": abs(row["model_rate_bits"]
                                 - other["model_rate_bits"]) / denom,
            "nmse_delta": row["nmse"] - other["nmse"],
            "cosine_delta": row["mean_cosine"] - other["mean_cosine"],
            "nmse_rel_improvement": (other["nmse"] - row["nmse"])
                                    / max(other["nmse"], 1e-300),
        })
    wins = sum(1 for b in buckets if b["nmse_delta"] <= 0)
    return {
        "buckets": buckets,
        "win_rate": wins / len(buckets) if buckets else float("nan"),
    }

"""Regenerate the golden format fixtures under tests/fixtures/.

The fixtures pin the ATCM/ATCF/ATCS byte layouts: any format change must
regenerate them deliberately and show up in review. Everything here is
deterministic (moment-based fit, fixed seeds, no EM).
"""

from pathlib import Path

import numpy as np

from atcodec.codec import (design, encode_set, serialize_model, write_features)
from atcodec.gmm import FeatureSet, fit_supervised
from atcodec.quantizer import DEFAULT_LADDER


def main():
    out_dir = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(20240601)
    half = 64
    a = rng.standard_normal((half, 4)) * [1.5, 1.0, 0.5, 0.25] + [4.0, 0, 0, 0]
    b = rng.standard_normal((half, 4)) * [0.8, 0.6, 0.4, 0.2] - [4.0, 0, 0, 0]
    train = FeatureSet(np.vstack([a, b]), labels=np.repeat([0, 1], half))

    gmm = fit_supervised(train)
    ladder = [L for L in DEFAULT_LADDER if L <= 16]
    model = design(train, thetas=[0.5, 0.02], prefit_gmm=gmm, ladder=ladder)

    features = FeatureSet(train.vectors[:8], labels=train.labels[:8])
    (out_dir / "golden.atcm").write_bytes(serialize_model(model))
    (out_dir / "golden.atcf").write_bytes(write_features(features))

    for coder in ("ac", "flc"):
        stream = encode_set(model, 1, features, coder=coder)
        (out_dir / f"golden_{coder}.atcs").write_bytes(stream.to_bytes())

    print(f"fixtures written to {out_dir}")
    print(f"model_id: {model.model_id.hex()}")


if __name__ == "__main__":
    main()

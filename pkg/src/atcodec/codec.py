"""End-to-end feature compressor and its serialized artifacts.

Offline: fit the mixture (optionally in a PCA-reduced space), design the
quantizer bank once, and bake one quantization map per quality point theta.
Online: per vector, select the MAP mode, whiten, quantize each coefficient
whose selected level count exceeds 1, and entropy-code the mode index and
coefficient indices into an independently decodable segment.

Binary formats (ATCM model / ATCF features / ATCS stream) are little-endian
throughout and documented in docs/FORMAT.md.
"""

import hashlib
import io
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from . import pca as pca_mod
from .entropycoder import (ArithmeticDecoder, ArithmeticEncoder, SymbolModel,
                           flc_bits, flc_pack, flc_unpack)
from .errors import (CorruptModel, CorruptStream, InvalidInput, ModelMismatch,
                     UnsupportedVersion)
from .gmm import FeatureSet, GaussianMixture
from .pca import PcaStage
from .quantizer import (DEFAULT_LADDER, LloydMaxQuantizer, QuantizationMap,
                        QuantizerBank, build_bank, build_quantization_map)

MAGIC_MODEL = b"ATCM"
MAGIC_FEATURES = b"ATCF"
MAGIC_STREAM = b"ATCS"
FORMAT_VERSION = 1

CODER_AC = 0
CODER_FLC = 1
_CODER_NAMES = {"ac": CODER_AC, "flc": CODER_FLC}


# ------------------------------------------------------------------- model

@dataclass
class CodecModel:
    """Fitted compressor: mixture + quantizer bank + per-theta maps.

    The mixture lives in coding space: the PCA-reduced space when a stage is
    present, the source space otherwise.
    """

    gmm: GaussianMixture
    bank: QuantizerBank
    maps: list
    pca: Optional[PcaStage] = None
    _symbol_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([m.theta for m in self.maps])

    @property
    def model_id(self) -> bytes:
        return hashlib.blake2b(_model_params_bytes(self), digest_size=16).digest()

    def quantization_map(self, theta_idx: int) -> QuantizationMap:
        if not 0 <= theta_idx < len(self.maps):
            raise InvalidInput("quality index out of range")
        return self.maps[theta_idx]

    def add_quality_point(self, theta: float):
        """Append a quantization map; no other parameter changes."""
        self.maps.append(build_quantization_map(self.gmm, self.bank, theta))

    # symbol models are pure functions of the parameters; cache per instance
    def mode_symbol_model(self) -> SymbolModel:
        if "mode" not in self._symbol_cache:
            self._symbol_cache["mode"] = SymbolModel.from_probabilities(
                self.gmm.weights_)
        return self._symbol_cache["mode"]

    def level_symbol_model(self, levels: int) -> SymbolModel:
        key = ("L", levels)
        if key not in self._symbol_cache:
            self._symbol_cache[key] = SymbolModel.from_probabilities(
                self.bank[levels].probabilities)
        return self._symbol_cache[key]


def design(data, thetas, n_components=1, reg=1e-6, seed=0,
           ladder=DEFAULT_LADDER, gamma=None, prefit_gmm=None,
           tol=1e-6, max_iter=200) -> CodecModel:
    """Offline design: fit (or accept) the mixture, build the bank and maps."""
    thetas = [float(t) for t in thetas]
    if not thetas or any(t <= 0 for t in thetas):
        raise InvalidInput("need a non-empty list of positive thetas")
    data = data if isinstance(data, FeatureSet) else FeatureSet(data)

    stage = None
    coding_data = data
    if gamma is not None:
        stage = pca_mod.fit_global_pca(data)
        m = pca_mod.select_M(stage.spectrum, gamma)
        stage = stage.truncate(m)
        coding_data = pca_mod.reduce(stage, data)

    if prefit_gmm is not None:
        gmm = prefit_gmm
    else:
        gmm = GaussianMixture(n_components=n_components, reg=reg, tol=tol,
                              max_iter=max_iter, random_state=seed)
        gmm.fit(coding_data)

    bank = build_bank(ladder)
    maps = [build_quantization_map(gmm, bank, t) for t in thetas]
    return CodecModel(gmm=gmm, bank=bank, maps=maps, pca=stage)


# ------------------------------------------------------------------ streams

@dataclass
class EncodedStream:
    """Header plus independently decodable per-vector segments."""

    model_id: bytes
    theta_idx: int
    coder: int  # CODER_AC or CODER_FLC
    segments: list

    @property
    def count(self) -> int:
        return len(self.segments)

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        out.write(MAGIC_STREAM)
        out.write(struct.pack("<H", FORMAT_VERSION))
        out.write(self.model_id)
        out.write(struct.pack("<HBQ", self.theta_idx, self.coder, self.count))
        for seg in self.segments:
            out.write(struct.pack("<I", len(seg)))
            out.write(seg)
        return out.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncodedStream":
        buf = _Cursor(data)
        if buf.read(4) != MAGIC_STREAM:
            raise CorruptStream("bad stream magic")
        (version,) = struct.unpack("<H", buf.read(2))
        if version != FORMAT_VERSION:
            raise UnsupportedVersion(f"stream version {version}")
        model_id = buf.read(16)
        theta_idx, coder, count = struct.unpack("<HBQ", buf.read(11))
        segments = []
        for _ in range(count):
            (seg_len,) = struct.unpack("<I", buf.read(4))
            segments.append(buf.read(seg_len))
        return cls(model_id=model_id, theta_idx=theta_idx, coder=coder,
                   segments=segments)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptStream("unexpected end of data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


# ------------------------------------------------------------ core pipeline

def _to_coding_space(model: CodecModel, X: np.ndarray) -> np.ndarray:
    return model.pca.reduce(X) if model.pca is not None else X


def _from_coding_space(model: CodecModel, Xc: np.ndarray) -> np.ndarray:
    return model.pca.lift(Xc) if model.pca is not None else Xc


def quantize_batch(model: CodecModel, theta_idx: int, X):
    """Vectorized analysis: MAP modes, quantizer indices, reconstructions.

    Returns (modes, indices, recon): indices is (count, N') int32 with zeros
    at inactive coefficients (L*=1); recon is the exact decoder output in the
    source domain. Entropy coding is lossless, so this is the reference path
    for distortion measurements.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise InvalidInput("input vectors must be finite")
    qmap = model.quantization_map(theta_idx)
    Xc = _to_coding_space(model, X)
    gmm = model.gmm
    modes = gmm.predict(Xc)
    n, dim = Xc.shape
    indices = np.zeros((n, dim), dtype=np.int32)
    recon_c = np.empty_like(Xc)
    for c in range(gmm.k_):
        rows = np.flatnonzero(modes == c)
        if rows.size == 0:
            continue
        z = gmm.whiten(c, Xc[rows])
        zhat = np.zeros_like(z)
        for col in range(dim):
            levels = int(qmap.levels[c, col])
            if levels == 1:
                continue
            quant = model.bank[levels]
            j = quant.quantize(z[:, col])
            indices[rows, col] = j
            zhat[:, col] = quant.centroids[j]
        recon_c[rows] = gmm.unwhiten(c, zhat)
    return modes, indices, _from_coding_space(model, recon_c)


def _reconstruct(model: CodecModel, theta_idx: int, mode: int, indices):
    qmap = model.quantization_map(theta_idx)
    levels = qmap.levels[mode]
    zhat = np.zeros(levels.shape[0])
    active = np.flatnonzero(levels > 1)
    for col in active:
        zhat[col] = model.bank[int(levels[col])].centroids[indices[col]]
    xc = model.gmm.unwhiten(mode, zhat)
    return _from_coding_space(model, xc[None, :])[0]


def _segment_from_indices(model, qmap, mode, idx_row, coder):
    levels = qmap.levels[mode]
    active = np.flatnonzero(levels > 1)
    if coder == CODER_AC:
        enc = ArithmeticEncoder()
        enc.encode(int(mode), model.mode_symbol_model())
        for col in active:
            enc.encode(int(idx_row[col]),
                       model.level_symbol_model(int(levels[col])))
        return enc.finish()
    return flc_pack(int(mode), model.gmm.k_, idx_row[active], levels[active])


def encode_vector(model: CodecModel, theta_idx: int, x, coder: str = "ac") -> bytes:
    """Encode one vector into an independently decodable segment."""
    modes, indices, _ = quantize_batch(model, theta_idx, np.atleast_2d(x))
    qmap = model.quantization_map(theta_idx)
    return _segment_from_indices(model, qmap, int(modes[0]), indices[0],
                                 _CODER_NAMES[coder])


def decode_vector(model: CodecModel, theta_idx: int, segment: bytes,
                  coder: str = "ac") -> np.ndarray:
    """Exact centroid reconstruction of one encoded segment."""
    qmap = model.quantization_map(theta_idx)
    mode, indices = _decode_segment(model, qmap, segment, _CODER_NAMES[coder])
    return _reconstruct(model, theta_idx, mode, indices)


def _decode_segment(model, qmap, segment, coder):
    k = model.gmm.k_
    dim = qmap.levels.shape[1]
    indices = np.zeros(dim, dtype=np.int64)
    if coder == CODER_AC:
        dec = ArithmeticDecoder(segment)
        mode = dec.decode(model.mode_symbol_model())
        levels = qmap.levels[mode]
        for col in np.flatnonzero(levels > 1):
            indices[col] = dec.decode(model.level_symbol_model(int(levels[col])))
        return mode, indices
    kbits = (k - 1).bit_length()
    if kbits and not segment:
        raise CorruptStream("empty FLC segment")
    mode = int.from_bytes(segment, "little") & ((1 << kbits) - 1) if kbits else 0
    if mode >= k:
        raise CorruptStream("FLC mode index out of range")
    levels = qmap.levels[mode]
    active = np.flatnonzero(levels > 1)
    mode2, idx = flc_unpack(segment, k, levels[active])
    indices[active] = idx
    return mode2, indices


def encode_set(model: CodecModel, theta_idx: int, data, coder: str = "ac") -> EncodedStream:
    """Encode a batch; vector order is preserved and segments stay independent."""
    data = data if isinstance(data, FeatureSet) else FeatureSet(data)
    coder_id = _CODER_NAMES[coder]
    qmap = model.quantization_map(theta_idx)
    segments = []
    if data.count:
        modes, indices, _ = quantize_batch(model, theta_idx, data.vectors)
        segments = [
            _segment_from_indices(model, qmap, int(modes[i]), indices[i], coder_id)
            for i in range(data.count)
        ]
    return EncodedStream(model_id=model.model_id, theta_idx=theta_idx,
                         coder=coder_id, segments=segments)


def decode_set(model: CodecModel, stream: EncodedStream) -> FeatureSet:
    """Decode a stream back into feature vectors; refuses foreign models."""
    if stream.model_id != model.model_id:
        raise ModelMismatch("stream was produced under a different model")
    qmap = model.quantization_map(stream.theta_idx)
    gmm = model.gmm
    dim = gmm.n_features_
    count = stream.count
    modes = np.empty(count, dtype=np.int64)
    indices = np.zeros((count, dim), dtype=np.int64)
    for i, segment in enumerate(stream.segments):
        modes[i], indices[i] = _decode_segment(model, qmap, segment,
                                               stream.coder)
    # mode-grouped batch reconstruction, mirroring the encoder's arithmetic
    recon_c = np.empty((count, dim))
    for c in range(gmm.k_):
        rows = np.flatnonzero(modes == c)
        if rows.size == 0:
            continue
        zhat = np.zeros((rows.size, dim))
        for col in np.flatnonzero(qmap.levels[c] > 1):
            centroids = model.bank[int(qmap.levels[c, col])].centroids
            zhat[:, col] = centroids[indices[rows, col]]
        recon_c[rows] = gmm.unwhiten(c, zhat)
    return FeatureSet(_from_coding_space(model, recon_c))


# ----------------------------------------------------------------- metering

def measure_rate(model: CodecModel, theta_idx: int, data, coder: str = "ac",
                 max_coded: Optional[int] = None):
    """Empirical rate per vector: exact-probability model rate vs coder output.

    model_rate averages -log2 P(J=j | c_hat) over active coefficients plus
    -log2 pi_c_hat, using exact (unquantized) interval probabilities. The
    actual column is the mean encoded segment length in bits; max_coded caps
    how many vectors are entropy-coded for it (None = all).
    """
    data = data if isinstance(data, FeatureSet) else FeatureSet(data)
    if data.count == 0:
        raise InvalidInput("need at least one vector to measure rate")
    qmap = model.quantization_map(theta_idx)
    modes, indices, _ = quantize_batch(model, theta_idx, data.vectors)
    gmm = model.gmm

    bits = -np.log2(gmm.weights_[modes])
    for c in range(gmm.k_):
        rows = np.flatnonzero(modes == c)
        if rows.size == 0:
            continue
        for col in np.flatnonzero(qmap.levels[c] > 1):
            quant = model.bank[int(qmap.levels[c, col])]
            bits[rows] -= np.log2(quant.probabilities[indices[rows, col]])
    model_rate = float(bits.mean())

    coder_id = _CODER_NAMES[coder]
    n_coded = data.count if max_coded is None else min(max_coded, data.count)
    total = 0
    for i in range(n_coded):
        seg = _segment_from_indices(model, qmap, int(modes[i]), indices[i],
                                    coder_id)
        total += len(seg)
    actual = 8.0 * total / n_coded if n_coded else float("nan")
    return model_rate, actual


def mean_flc_bits(model: CodecModel, theta_idx: int, data) -> float:
    """Average fixed-length-code size per vector, from the accounting formula."""
    data = data if isinstance(data, FeatureSet) else FeatureSet(data)
    qmap = model.quantization_map(theta_idx)
    Xc = _to_coding_space(model, data.vectors)
    modes = model.gmm.predict(Xc)
    k = model.gmm.k_
    per_mode = np.array([flc_bits(qmap.levels[c], k) for c in range(k)])
    return float(per_mode[modes].mean())


# ------------------------------------------------------------ serialization

def _w_array(out, arr, dtype="<f8"):
    arr = np.ascontiguousarray(arr, dtype=dtype)
    out.write(arr.tobytes())


def _r_array(buf, count, dtype="<f8"):
    item = np.dtype(dtype).itemsize
    return np.frombuffer(buf.read(count * item), dtype=dtype).copy()


def _gmm_section(gmm: GaussianMixture) -> bytes:
    out = io.BytesIO()
    k, n = gmm.k_, gmm.n_features_
    out.write(struct.pack("<II", k, n))
    out.write(struct.pack("<d", float(gmm.reg)))
    _w_array(out, gmm.weights_)
    _w_array(out, gmm.eig_floor_)
    _w_array(out, gmm.means_)
    _w_array(out, gmm.covariances_)
    _w_array(out, gmm.eigvals_)
    _w_array(out, gmm.eigvecs_)
    return out.getvalue()


def _read_gmm_section(buf) -> GaussianMixture:
    k, n = struct.unpack("<II", buf.read(8))
    (reg,) = struct.unpack("<d", buf.read(8))
    gmm = GaussianMixture(n_components=k, reg=reg)
    gmm.weights_ = _r_array(buf, k)
    gmm.eig_floor_ = _r_array(buf, k)
    gmm.means_ = _r_array(buf, k * n).reshape(k, n)
    gmm.covariances_ = _r_array(buf, k * n * n).reshape(k, n, n)
    gmm.eigvals_ = _r_array(buf, k * n).reshape(k, n)
    gmm.eigvecs_ = _r_array(buf, k * n * n).reshape(k, n, n)
    gmm.n_features_ = n
    return gmm


def _bank_section(bank: QuantizerBank) -> bytes:
    out = io.BytesIO()
    out.write(struct.pack("<I", len(bank.ladder)))
    for levels in bank.ladder:
        quant = bank[levels]
        out.write(struct.pack("<Id", levels, quant.mse))
        _w_array(out, quant.centroids)
        _w_array(out, quant.boundaries[1:-1])
        _w_array(out, quant.probabilities)
    return out.getvalue()


def _read_bank_section(buf) -> QuantizerBank:
    (n_entries,) = struct.unpack("<I", buf.read(4))
    ladder = []
    quantizers = {}
    for _ in range(n_entries):
        levels, mse = struct.unpack("<Id", buf.read(12))
        centroids = _r_array(buf, levels)
        interior = _r_array(buf, levels - 1)
        probs = _r_array(buf, levels)
        boundaries = np.concatenate(([-np.inf], interior, [np.inf]))
        ladder.append(levels)
        quantizers[levels] = LloydMaxQuantizer(
            levels=levels, centroids=centroids, boundaries=boundaries,
            mse=mse, probabilities=probs)
    return QuantizerBank(ladder=tuple(ladder), quantizers=quantizers)


def _maps_section(maps) -> bytes:
    out = io.BytesIO()
    out.write(struct.pack("<I", len(maps)))
    for qmap in maps:
        k, n = qmap.levels.shape
        out.write(struct.pack("<dIII", qmap.theta, qmap.saturated, k, n))
        _w_array(out, qmap.levels, dtype="<u4")
    return out.getvalue()


def _read_maps_section(buf):
    (n_maps,) = struct.unpack("<I", buf.read(4))
    maps = []
    for _ in range(n_maps):
        theta, saturated, k, n = struct.unpack("<dIII", buf.read(20))
        levels = _r_array(buf, k * n, dtype="<u4").reshape(k, n).astype(np.int32)
        maps.append(QuantizationMap(theta=theta, levels=levels,
                                    saturated=saturated))
    return maps


def _pca_section(stage: Optional[PcaStage]) -> bytes:
    out = io.BytesIO()
    if stage is None:
        out.write(struct.pack("<B", 0))
        return out.getvalue()
    out.write(struct.pack("<B", 1))
    out.write(struct.pack("<II", stage.n_features, stage.m))
    _w_array(out, stage.mean)
    _w_array(out, stage.spectrum)
    _w_array(out, stage.basis)
    return out.getvalue()


def _read_pca_section(buf) -> Optional[PcaStage]:
    (present,) = struct.unpack("<B", buf.read(1))
    if not present:
        return None
    n, m = struct.unpack("<II", buf.read(8))
    mean = _r_array(buf, n)
    spectrum = _r_array(buf, n)
    basis = _r_array(buf, n * m).reshape(n, m)
    return PcaStage(mean=mean, basis=basis, spectrum=spectrum)


def _model_params_bytes(model: CodecModel) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC_MODEL)
    out.write(struct.pack("<H", FORMAT_VERSION))
    for section in (_gmm_section(model.gmm), _bank_section(model.bank),
                    _maps_section(model.maps), _pca_section(model.pca)):
        out.write(struct.pack("<I", len(section)))
        out.write(section)
    return out.getvalue()


def serialize_model(model: CodecModel) -> bytes:
    """Versioned binary container with a trailing 128-bit content hash."""
    params = _model_params_bytes(model)
    digest = hashlib.blake2b(params, digest_size=16).digest()
    return params + digest


def deserialize_model(data: bytes) -> CodecModel:
    """Parse and integrity-check a serialized model."""
    if len(data) < 22:
        raise CorruptModel("model file too short")
    params, digest = data[:-16], data[-16:]
    if hashlib.blake2b(params, digest_size=16).digest() != digest:
        raise CorruptModel("model content hash mismatch")
    buf = _Cursor(params)
    if buf.read(4) != MAGIC_MODEL:
        raise CorruptModel("bad model magic")
    (version,) = struct.unpack("<H", buf.read(2))
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"model version {version}")
    sections = []
    for _ in range(4):
        (length,) = struct.unpack("<I", buf.read(4))
        sections.append(_Cursor(buf.read(length)))
    return CodecModel(
        gmm=_read_gmm_section(sections[0]),
        bank=_read_bank_section(sections[1]),
        maps=_read_maps_section(sections[2]),
        pca=_read_pca_section(sections[3]),
    )


def write_features(data: FeatureSet) -> bytes:
    """ATCF container: f32 row-major payload plus optional u32 labels."""
    out = io.BytesIO()
    out.write(MAGIC_FEATURES)
    out.write(struct.pack("<HIQBB", FORMAT_VERSION, data.dim, data.count, 0,
                          1 if data.labels is not None else 0))
    _w_array(out, data.vectors, dtype="<f4")
    if data.labels is not None:
        _w_array(out, data.labels, dtype="<u4")
    return out.getvalue()


def read_features(data: bytes) -> FeatureSet:
    buf = _Cursor(data)
    if buf.read(4) != MAGIC_FEATURES:
        raise CorruptStream("bad feature-file magic")
    version, dim, count, dtype, has_labels = struct.unpack("<HIQBB", buf.read(16))
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"feature file version {version}")
    if dtype != 0:
        raise UnsupportedVersion(f"feature dtype code {dtype}")
    vectors = _r_array(buf, count * dim, dtype="<f4").astype(np.float64)
    vectors = vectors.reshape(count, dim)
    labels = None
    if has_labels:
        labels = _r_array(buf, count, dtype="<u4").astype(np.int64)
    return FeatureSet(vectors, labels)


# ---------------------------------------------------------------- estimator

class FeatureCodec(BaseEstimator):
    """sklearn-style wrapper around the offline design and online coding.

    fit(X) runs the full offline stage; encode/decode operate on batches and
    return EncodedStream / FeatureSet. gamma=None disables the PCA stage.
    """

    def __init__(self, n_components=1, reg=1e-6, random_state=0,
                 ladder=DEFAULT_LADDER, thetas=(1.0,), gamma=None,
                 tol=1e-6, max_iter=200):
        self.n_components = n_components
        self.reg = reg
        self.random_state = random_state
        self.ladder = ladder
        self.thetas = thetas
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        self.model_ = design(
            X, thetas=self.thetas, n_components=self.n_components,
            reg=self.reg, seed=self.random_state, ladder=self.ladder,
            gamma=self.gamma, tol=self.tol, max_iter=self.max_iter)
        return self

    def encode(self, X, theta_idx: int = 0, coder: str = "ac") -> EncodedStream:
        return encode_set(self.model_, theta_idx, X, coder=coder)

    def decode(self, stream: EncodedStream) -> FeatureSet:
        return decode_set(self.model_, stream)

    def transform(self, X, theta_idx: int = 0):
        """Quantize-reconstruct without entropy coding (same output as decode)."""
        _, _, recon = quantize_batch(self.model_, theta_idx,
                                     X.vectors if isinstance(X, FeatureSet) else X)
        return recon

    def measure_rate(self, X, theta_idx: int = 0, coder: str = "ac",
                     max_coded=None):
        return measure_rate(self.model_, theta_idx, X, coder=coder,
                            max_coded=max_coded)

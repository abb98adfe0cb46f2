"""Adaptive transform coding for semantic feature compression.

Fit a Gaussian mixture to feature vectors, then encode each vector with a
mode-dependent KLT, reverse-water-filling-allocated Lloyd-Max scalar
quantizers, and arithmetic coding.
"""

from .codec import (CodecModel, EncodedStream, FeatureCodec, decode_set,
                    decode_vector, design, deserialize_model, encode_set,
                    encode_vector, measure_rate, read_features,
                    serialize_model, write_features)
from .entropycoder import SymbolModel, ac_decode, ac_encode, flc_bits
from .errors import (AtcodecError, CorruptModel, CorruptStream, InvalidInput,
                     ModelMismatch, NumericalFailure, UnsupportedVersion)
from .evalkit import RdReport, compare_adaptive, mean_cosine, nmse, rd_sweep
from .gmm import FeatureSet, GaussianMixture, fit_supervised
from .linalg import EigenPair, regularize_spd, sym_eig
from .pca import (PcaStage, compose_reduced_transforms, fit_global_pca,
                  param_count, select_M)
from .quantizer import (DEFAULT_LADDER, LloydMaxQuantizer, QuantizationMap,
                        QuantizerBank, build_bank, build_quantization_map,
                        design_lloyd_max, select_levels)
from .rdtheory import (RdPoint, conditional_rd, gaussian_rd, genie_bound,
                       mode_entropy_bits, solve_theta, target_distortions)
from .synth import synthetic_source

__version__ = "0.1.0"

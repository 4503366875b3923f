"""Distributionally robust learned compression in plain numpy.

Quantized autoencoders trained against Wasserstein-ball and rotation
shifts, a two-stage successive-refinement code, and exact minimax theory
for scalar quantizers of uniform sources.
"""
from .codec import (StandardCompressor, StructuredCompressor, build_standard,
                    build_structured, compress, decompress, distortion, reconstruct,
                    train_structured)
from .dro import (adversarial_distortion, awgn_augment_train, inner_max, train_dro,
                  train_standard)
from .errors import (ConfigError, DimensionError, DomainError, FormatError, NumericalError,
                     RangeError, RobustCodecError, UsageError)
from .quantizer import Codebook, rate
from .training import DroConfig

__version__ = "0.1.0"

"""Desk-scale benchmark harness for online continual learning with pooled features."""

from .errors import (
    ChecksumError,
    ConfigError,
    ContractError,
    DataError,
    FormatError,
    NumericError,
    OclError,
    StateError,
    TruncationError,
)
from .learners import make_learner
from .metrics import bwt, forgetting, plasticity, rarg
from .pooling import PoolingSpec, moment_drift, pool, pool_moments
from .rng import RngStream
from .tensors import FeatureMap, read_tensor_record, write_tensor_record

__version__ = "0.1.0"

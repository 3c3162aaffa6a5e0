"""Generalized graph readouts (softmax and power-mean families) with a toy MPNN."""

from .batch import BatchError, GraphBatch, build_batch, permute_nodes, read_batch, write_batch
from .estimators import GeneralizedReadout, MPNNClassifier, MPNNRegressor
from .grad import Feature, ReadoutGradients, backward, backward_powermean, backward_softmax, finite_diff_oracle
from .readout import (
    PRESETS,
    Classic,
    Family,
    ReadoutDomainError,
    ReadoutError,
    ReadoutParameterError,
    ReadoutParams,
    readout,
    readout_classic,
    readout_powermean,
    readout_softmax,
)

__version__ = "0.1.0"

"""Low-rank CPTP Lindblad integrator with tensor-train compressed factor columns.

The density matrix is stored as rho = V V^dagger, where each column of V is a
tensor train.  Submodules provide the TT/MPO arithmetic, randomized rounding,
density-matrix rank truncation, flow operators, and the time stepper.
"""

from .tt import TensorTrain, TruncationReport
from .mpo import MatrixProductOperator
from .dm_compress import FactorMatrix, CompressOptions

__all__ = [
    "TensorTrain",
    "TruncationReport",
    "MatrixProductOperator",
    "FactorMatrix",
    "CompressOptions",
]

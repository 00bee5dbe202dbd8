"""Low-rank tensor completion with all-mode double nuclear norm factorization.

Model 1 regularizes the factors ``A_n, X_n`` of every mode-n unfolding with
nuclear norms; model 2 additionally applies isotropic TV to the mode-3
encoding.  See :func:`lrtc.solver.run`.
"""

from .kernels import shrink2d, svt, sylvester_fft_solve, tv_value
from .metrics import MetricsReport, ergas, evaluate, psnr, sam, ssim
from .solver import NumericalError, SolverConfig, Trace, run, suggest_ranks
from .tensor import (
    ObservationMask,
    fold,
    frobenius_norm,
    inner_product,
    project,
    project_complement,
    random_mask,
    synth_lowrank,
    unfold,
)

__version__ = "0.1.0"

"""Entropic multi-marginal optimal transport and the multi-marginal matching gap loss."""

from .baselines import aggregate_ave, aggregate_pwe, byol, ema_update, infonce
from .costs import CSD, CV, MultiwayCost, c_csd, c_cv, check_embeddings, circular_variance, cost_tensor, normalize, resultant_sq
from .encoder import SphericalEncoder
from .errors import FormatError, NumericalError, ShapeCapError, ValidationError
from .estimators import M3GLoss, MultiMarginalSinkhorn
from .m3g import M3GResult, m3g, m3g_gradient, m3g_k2, pairwise_marginal, value_and_grad
from .solver import SolveReport, SolverConfig, dual_objective, entropic_objective, marginal_deviation, mm_sinkhorn, primal_from_dual
from .tensor import inner, lse, marginal, tensor_sum

__version__ = "0.1.0"

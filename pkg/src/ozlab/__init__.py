"""ozlab: random-line representations, renewal structure and Ornstein-Zernike asymptotics
for the two-point function of subcritical Ising models."""

from .lattice import CouplingField, DualVector, LatticeGraph, ModelConfig, NormModel, build_graph, dual_vector, parse_config
from .gibbs import CorrelationTable, XiEstimate, exact_two_point, monte_carlo_two_point, strip_two_point
from .random_line import Line, enumerate_lines, line_weight, representation_sum
from .skeleton import Skeleton, build_skeleton, classify, surcharge_checks
from .decomposition import IrreducibleDecomposition, irreducible_decompose, is_irreducible
from .ruelle import Alphabet, RuelleOperator, SpectralData, off_axis_scan
from .local_limit import DisplacementDistribution, GaussianModel, gaussian_llt, qn_distribution
from .pipeline import IrreducibleAlphabet, OZFit, WulffBoundary, build_alphabet, oz_fit, oz_prefactor

__version__ = "0.1.0"

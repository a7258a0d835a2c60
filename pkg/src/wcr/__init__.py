"""Weak collocation regression for SDEs driven by Gaussian and alpha-stable Levy noise."""
from .assembly import LinearSystem, assemble, snapshot_features
from .cli import fit_dataset, load_config, run_simulation
from .collocation import KernelGroupSpec, KernelSet, build_kernel_set, lhs_centers
from .dictionary import CoefficientLayout, full_poly_basis, separable_poly_basis
from .levy_sim import SdeModel, SnapshotDataset, StableSamplerConfig, simulate
from .model_eval import FitReport, mre, reconstruct, wd1_marginal
from .regression import StridgeConfig, stridge
from .specfun import hyp1f1_nonpos

__version__ = "0.1.0"

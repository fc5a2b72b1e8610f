"""Fusion of labeled random finite set densities for distributed tracking."""

from .densities import (
    BernoulliTrack,
    GeneralLRFS,
    GridCJPDF,
    Hypothesis,
    Label,
    LMBDensity,
    MDGLMBDensity,
    ProductMixtureCJPDF,
    lmb_jep,
    lmb_to_mdglmb,
    mdglmb_to_lmb,
)
from .divergence import (
    DivergenceKind,
    chernoff_gm,
    csd_gm,
    divergence,
    divergence_matrix,
    jsd_gm,
    kld_gm,
)
from .estimators import GCIFusion, LabelMatcher, MILFusion, fuse_local_densities
from .fov import (
    SubspacePartition,
    decompose,
    discover_subspaces,
    fuse_subspaces,
    reconstruct,
)
from .fusion import (
    gci_fuse_general,
    gci_fuse_lmb,
    gci_fuse_mdglmb,
    information_loss_bound_check,
    kld_general,
    mil_fuse_general,
    mil_fuse_lmb,
    mil_fuse_mdglmb,
)
from .matching import build_cost_matrix, canonicalize, match, solve_assignment
from .mixture import GaussianMixture, GridPDF, Reduction, gm_reduce
from .sim import ConfigError, ScenarioConfig, load_config, monte_carlo, run_trial
from .tracker import BirthModel, LocalTracker, MotionModel, SensorModel

__version__ = "0.1.0"

__all__ = [
    "BernoulliTrack",
    "BirthModel",
    "build_cost_matrix",
    "canonicalize",
    "chernoff_gm",
    "ConfigError",
    "csd_gm",
    "decompose",
    "discover_subspaces",
    "divergence",
    "divergence_matrix",
    "DivergenceKind",
    "fuse_local_densities",
    "fuse_subspaces",
    "GaussianMixture",
    "gci_fuse_general",
    "gci_fuse_lmb",
    "gci_fuse_mdglmb",
    "GCIFusion",
    "GeneralLRFS",
    "gm_reduce",
    "GridCJPDF",
    "GridPDF",
    "Hypothesis",
    "information_loss_bound_check",
    "jsd_gm",
    "kld_general",
    "kld_gm",
    "Label",
    "LabelMatcher",
    "lmb_jep",
    "lmb_to_mdglmb",
    "LMBDensity",
    "load_config",
    "LocalTracker",
    "match",
    "mdglmb_to_lmb",
    "MDGLMBDensity",
    "mil_fuse_general",
    "mil_fuse_lmb",
    "mil_fuse_mdglmb",
    "MILFusion",
    "monte_carlo",
    "MotionModel",
    "ProductMixtureCJPDF",
    "reconstruct",
    "Reduction",
    "run_trial",
    "ScenarioConfig",
    "SensorModel",
    "solve_assignment",
    "SubspacePartition",
]

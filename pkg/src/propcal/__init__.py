"""Calibration-fairness auditing and post-processing of risk scores.

Audits binned risk predictions for absolute, proportional, and differential
calibration over intersectional subgroups, post-processes scores with
residual boosting under either cutoff rule, verifies the closed-form
relationships between the three criteria, and generates the simulation
populations used to study them.
"""

__version__ = "0.1.0"

from .boost import (
    BoostConfig,
    CategoryUpdate,
    PassRecord,
    UpdateTrace,
    apply_trace,
    mc_boost,
    pmc_boost,
    squash,
)
from .core import (
    MISSING_LEVEL,
    AuditDataset,
    Category,
    CategoryTable,
    ConfigurationError,
    Discretization,
    EmptyCollectionError,
    Group,
    GroupCollection,
    PropcalError,
    ValidationError,
    category_stats,
    enumerate_groups,
    make_discretization,
)
from .metrics import LossResult, auroc, calibration_curve, dc_loss, mc_loss, pmc_loss
from .sim import SCENARIOS, ScenarioTable, SimConfig, replicate_seeds, run_scenarios, simulate
from .theory import (
    BoundCheckReport,
    BoundCurve,
    BoundViolation,
    SharedLosses,
    bound_curve,
    constraint_bands,
    dc_to_mc_bound,
    mc_to_dc_bound,
    pmc_discretization_bound_geometric,
    pmc_discretization_bound_uniform,
    pmc_to_dc_bound,
    pmc_to_mc_bound,
    shared_losses,
    verify_bound,
)

__all__ = [
    "__version__",
    "MISSING_LEVEL",
    "SCENARIOS",
    "AuditDataset",
    "BoostConfig",
    "BoundCheckReport",
    "BoundCurve",
    "BoundViolation",
    "Category",
    "CategoryTable",
    "CategoryUpdate",
    "ConfigurationError",
    "Discretization",
    "EmptyCollectionError",
    "Group",
    "GroupCollection",
    "LossResult",
    "PassRecord",
    "PropcalError",
    "ScenarioTable",
    "SharedLosses",
    "SimConfig",
    "UpdateTrace",
    "ValidationError",
    "apply_trace",
    "auroc",
    "bound_curve",
    "calibration_curve",
    "category_stats",
    "constraint_bands",
    "dc_loss",
    "dc_to_mc_bound",
    "enumerate_groups",
    "make_discretization",
    "mc_boost",
    "mc_loss",
    "mc_to_dc_bound",
    "pmc_boost",
    "pmc_discretization_bound_geometric",
    "pmc_discretization_bound_uniform",
    "pmc_loss",
    "pmc_to_dc_bound",
    "pmc_to_mc_bound",
    "replicate_seeds",
    "run_scenarios",
    "shared_losses",
    "simulate",
    "squash",
    "verify_bound",
]

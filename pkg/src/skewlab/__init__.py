# src/skewlab/__init__.py
from __future__ import annotations

from .torus import ToralAutomorphism, cat_map, eigen_data, wrap
from .partition import MarkovPartition, builtin_cat_partition, partition_from_rectangles, verify_markov
from .system import SkewSystem, make_system, validate_system, center_exponent
from .reference import ReferenceMeasure, reference_measure
from .gibbs import EmpiricalMeasure, estimate_mu
from .hitting import hitting_series, estimate_transverse, check_holonomy_invariance
from .coupling import ContractionProfile, estimate_profile, run_coupling
from .stats import birkhoff_tail, correlation_decay, cumulant_bound
from .observables import Observable, observable
from .runtime import apply_runtime_options

__all__ = [
    # Base dynamics
    "ToralAutomorphism",
    "cat_map",
    "eigen_data",
    "wrap",
    "MarkovPartition",
    "builtin_cat_partition",
    "partition_from_rectangles",
    "verify_markov",
    # Skew product
    "SkewSystem",
    "make_system",
    "validate_system",
    "center_exponent",
    # Measures
    "ReferenceMeasure",
    "reference_measure",
    "EmpiricalMeasure",
    "estimate_mu",
    # Labs
    "hitting_series",
    "estimate_transverse",
    "check_holonomy_invariance",
    "ContractionProfile",
    "estimate_profile",
    "run_coupling",
    "birkhoff_tail",
    "correlation_decay",
    "cumulant_bound",
    "Observable",
    "observable",
    # Runtime config
    "apply_runtime_options",
]

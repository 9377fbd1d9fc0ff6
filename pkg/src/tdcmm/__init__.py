"""Transfer learning for degree-corrected mixed-membership (DCMM) networks.

A target network's eigenbasis is split into a part shared with related
source networks and a private part. The shared part is estimated by
pooling source eigenspaces through randomized sketches, optionally after
discarding sources that do not share it; the private part comes from the
target alone. Mixed-SCORE then turns the combined basis into degree,
membership and connectivity estimates.
"""
from .errors import *  # noqa: F401,F403
from .evaluation import (
    ExperimentReport,
    Scenario,
    ScenarioSpec,
    d_metric,
    eigengap_report,
    generate_scenario,
    run_experiment,
    sketch_benchmark,
)
from .io import load_edge_list
from .mixed_score import (
    DcmmEstimate,
    PointCloud,
    estimate_b1,
    estimate_connectivity,
    estimate_theta,
    full_pipeline,
    memberships,
    point_cloud,
    vertex_hunt,
)
from .model import (
    DcmmParams,
    build_probability_matrix,
    normalize_params,
    sample_adjacency,
    validate_params,
)
from .spectral import (
    EigenPairs,
    ProjectorAverage,
    SketchConfig,
    average_projector,
    deflate,
    power_sketch,
    projector,
    projector_distance,
    sketch_top_subspace,
    top_eigenpairs,
    trace_alignment,
)
from .transfer import (
    SelectionResult,
    TransferBasis,
    TransferConfig,
    cross_validate_tau,
    estimate_k_shared,
    estimate_shared,
    non_oracle_tdcmm,
    oracle_tdcmm,
    per_network_bases,
    select_sources,
)

__version__ = "0.1.0"

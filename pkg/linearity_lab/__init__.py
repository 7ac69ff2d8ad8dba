"""
linearity-lab: does a candidate quantum dynamics evolve every ensemble of a
density matrix the same way?

Linear maps must: any two ensembles with one density matrix can be prepared
remotely by measuring a distant partner, so a map that tells them apart would
signal. This package builds the ensembles, evolves them, and reports the
deviation.

Example usage:
    from linearity_lab import certify_linearity, map_from_spec, map_spec_adapter

    spec = map_spec_adapter.validate_python({"kind": "nonlinear", "family": "purity_power", "dim": 2})
    certificate = certify_linearity(map_from_spec(spec), dim=2, seed=1)
    print(certificate.verdict, certificate.max_deviation)

Scenario runs:
    from linearity_lab import ScenarioConfig, run_projection_demo

    report = run_projection_demo(ScenarioConfig(scenario="projection", factor_dim=2, seed=7))
"""

__version__ = "0.1.0"

# Statics
from linearity_lab.qstatics import (
    PAULI_X,
    PAULI_Z,
    DensityMatrix,
    FactorSubset,
    PureState,
    TensorStructure,
    fidelity,
    haar_sample,
    partial_trace,
    regroup_factors,
    trace_distance,
)

# Ensembles and steering
from linearity_lab.ensembles import (
    Ensemble,
    OutcomeRecord,
    SteeringBasis,
    collapse_measurement,
    design_steering,
    eigen_ensemble,
    ensembles_equivalent,
    hjw_ensemble,
    mixture_density,
    purify,
    steer,
)

# Dynamics
from linearity_lab.dynamics import (
    BlackBoxMap,
    DynamicalMap,
    KrausChannel,
    PurityPowerMap,
    WeinbergMap,
    apply_map,
    depolarizing_channel,
    embed_local,
    evolve_ensemble,
    map_from_spec,
    map_to_spec,
    purity_power_map,
    weinberg_evolve,
    weinberg_map,
)

# Witness
from linearity_lab.witness import (
    ChoiMatrix,
    WitnessConfig,
    certify_linearity,
    check_cptp,
    reconstruct_choi,
    verify_witness_report,
    witness_search,
)

# Wire models and errors
from linearity_lab.models import (
    LinearityCertificate,
    RunReport,
    ScenarioConfig,
    WitnessReport,
    map_spec_adapter,
)
from linearity_lab.errors import LabError, MapFaultError

# Scenarios
from linearity_lab.cli.scenarios import run_particle3d, run_projection_demo, verify_run_report

__all__ = [
    "__version__",
    # Statics
    "PAULI_X",
    "PAULI_Z",
    "DensityMatrix",
    "FactorSubset",
    "PureState",
    "TensorStructure",
    "fidelity",
    "haar_sample",
    "partial_trace",
    "regroup_factors",
    "trace_distance",
    # Ensembles
    "Ensemble",
    "OutcomeRecord",
    "SteeringBasis",
    "collapse_measurement",
    "design_steering",
    "eigen_ensemble",
    "ensembles_equivalent",
    "hjw_ensemble",
    "mixture_density",
    "purify",
    "steer",
    # Dynamics
    "BlackBoxMap",
    "DynamicalMap",
    "KrausChannel",
    "PurityPowerMap",
    "WeinbergMap",
    "apply_map",
    "depolarizing_channel",
    "embed_local",
    "evolve_ensemble",
    "map_from_spec",
    "map_to_spec",
    "purity_power_map",
    "weinberg_evolve",
    "weinberg_map",
    # Witness
    "ChoiMatrix",
    "WitnessConfig",
    "certify_linearity",
    "check_cptp",
    "reconstruct_choi",
    "verify_witness_report",
    "witness_search",
    # Models and errors
    "LinearityCertificate",
    "RunReport",
    "ScenarioConfig",
    "WitnessReport",
    "map_spec_adapter",
    "LabError",
    "MapFaultError",
    # Scenarios
    "run_particle3d",
    "run_projection_demo",
    "verify_run_report",
]

"""
Wire models for linearity-lab: JSON payloads, map specs and reports.

Complex numbers travel as two-element arrays ``[re, im]``; matrices are
row-major nested arrays. Numerical objects (states, ensembles, maps) live in
the library modules and convert to and from these payloads; this module only
knows about plain arrays.
"""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator

SCHEMA_VERSION = 1

ComplexEntry = tuple[float, float]
VectorJSON = list[ComplexEntry]
MatrixJSON = list[list[ComplexEntry]]


# ── Array codec ─────────────────────────────────────────────────────────────

def encode_vector(vector: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(vector, dtype=complex).ravel()]


def encode_matrix(matrix: np.ndarray) -> list[list[list[float]]]:
    return [encode_vector(row) for row in np.atleast_2d(np.asarray(matrix, dtype=complex))]


def decode_vector(entries: Any) -> np.ndarray:
    arr = np.asarray(entries, dtype=float)
    if arr.ndim != 2 or arr.shape[-1] != 2:
        raise ValueError("vector entries must be a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def decode_matrix(rows: Any) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError("matrix entries must be rectangular rows of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def canonical_digest(payload: Any) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ── Enums ───────────────────────────────────────────────────────────────────

class MapKind(str, Enum):
    CHANNEL = "channel"
    NONLINEAR = "nonlinear"
    BLACKBOX = "blackbox"


class Verdict(str, Enum):
    LINEAR_CONSISTENT = "linear-consistent"
    NONLINEAR = "nonlinear"


class ProbeKind(str, Enum):
    DECOMPOSITION = "decomposition_vs_decomposition"
    DIRECT = "componentwise_vs_direct"


class Scenario(str, Enum):
    PARTICLE3D = "particle3d"
    PROJECTION = "projection"


class BasisChoice(str, Enum):
    COMPUTATIONAL = "computational"
    FOURIER = "fourier"
    RANDOM = "random"


class InitialState(str, Enum):
    RANDOM = "random"
    BELL = "bell"
    PRODUCT = "product"


class ChannelPreset(str, Enum):
    IDENTITY = "identity"
    DEPOLARIZING = "depolarizing"
    AMPLITUDE_DAMPING = "amplitude_damping"
    RANDOM_UNITARY = "random_unitary"
    RANDOM = "random"


# ── State payloads ──────────────────────────────────────────────────────────

class _Payload(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False)


class StatePayload(_Payload):
    dim: int = Field(ge=1)
    amplitudes: VectorJSON

    @model_validator(mode="after")
    def _check_length(self) -> "StatePayload":
        if len(self.amplitudes) != self.dim:
            raise ValueError(f"expected {self.dim} amplitudes, got {len(self.amplitudes)}")
        return self

    @classmethod
    def from_array(cls, vector: np.ndarray) -> "StatePayload":
        entries = encode_vector(vector)
        return cls(dim=len(entries), amplitudes=entries)

    def to_array(self) -> np.ndarray:
        return decode_vector(self.amplitudes)


class DensityMatrixPayload(_Payload):
    dim: int = Field(ge=1)
    matrix: MatrixJSON

    @model_validator(mode="after")
    def _check_shape(self) -> "DensityMatrixPayload":
        if len(self.matrix) != self.dim or any(len(row) != self.dim for row in self.matrix):
            raise ValueError(f"matrix must be {self.dim}x{self.dim}")
        return self

    @classmethod
    def from_array(cls, matrix: np.ndarray) -> "DensityMatrixPayload":
        return cls(dim=int(np.shape(matrix)[0]), matrix=encode_matrix(matrix))

    def to_array(self) -> np.ndarray:
        return decode_matrix(self.matrix)


class StructurePayload(_Payload):
    factor_dims: list[int] = Field(min_length=1)


class EnsembleMember(_Payload):
    p: float = Field(gt=0.0, le=1.0 + 1e-9)
    state: VectorJSON


class EnsemblePayload(_Payload):
    members: list[EnsembleMember] = Field(min_length=1)

    @field_validator("members")
    @classmethod
    def _equal_dims(cls, members: list[EnsembleMember]) -> list[EnsembleMember]:
        dims = {len(m.state) for m in members}
        if len(dims) != 1:
            raise ValueError("all ensemble members must share one dimension")
        return members


SteeringBasisPayload = list[VectorJSON]


# ── Map specs ───────────────────────────────────────────────────────────────

class ChannelSpec(_Payload):
    kind: Literal["channel"] = "channel"
    kraus: Optional[list[MatrixJSON]] = None
    preset: Optional[ChannelPreset] = None
    dim: Optional[int] = Field(default=None, ge=2)
    p: float = Field(default=1.0, ge=0.0, le=1.0)
    gamma: float = Field(default=0.5, ge=0.0, le=1.0)
    n_kraus: int = Field(default=2, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    label: Optional[str] = None

    @model_validator(mode="after")
    def _kraus_or_preset(self) -> "ChannelSpec":
        if (self.kraus is None) == (self.preset is None):
            raise ValueError("channel spec needs exactly one of 'kraus' or 'preset'")
        return self


class WeinbergSpec(_Payload):
    kind: Literal["nonlinear"] = "nonlinear"
    family: Literal["weinberg"] = "weinberg"
    H: Optional[MatrixJSON] = None
    V: Optional[MatrixJSON] = None
    eps: float = 1.0
    t: float = 1.0
    steps: Optional[int] = Field(default=None, ge=1)
    dim: Optional[int] = Field(default=None, ge=2)
    seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _operators_or_dim(self) -> "WeinbergSpec":
        if (self.H is None or self.V is None) and self.dim is None:
            raise ValueError("weinberg spec without explicit H and V needs 'dim'")
        return self


class PurityPowerSpec(_Payload):
    kind: Literal["nonlinear"] = "nonlinear"
    family: Literal["purity_power"] = "purity_power"
    k: int = Field(default=2, ge=2)
    dim: int = Field(default=2, ge=2)


class BlackboxSpec(_Payload):
    kind: Literal["blackbox"] = "blackbox"
    preset: Literal["transpose"] = "transpose"
    dim: int = Field(default=2, ge=2)


NonlinearSpec = Annotated[Union[WeinbergSpec, PurityPowerSpec], Field(discriminator="family")]
MapSpec = Annotated[Union[ChannelSpec, NonlinearSpec, BlackboxSpec], Field(discriminator="kind")]
map_spec_adapter: TypeAdapter[MapSpec] = TypeAdapter(MapSpec)


# ── Reports ─────────────────────────────────────────────────────────────────

class WorstCase(BaseModel):
    probe: ProbeKind
    rho: DensityMatrixPayload
    ensemble_a: EnsemblePayload
    ensemble_b: Optional[EnsemblePayload] = None
    evolved_a: DensityMatrixPayload
    evolved_b: DensityMatrixPayload
    deviation: float


class LinearityCertificate(BaseModel):
    schema_version: int = SCHEMA_VERSION
    map_label: str
    dim: int
    trials: int
    comparisons: int
    threshold: float
    max_deviation: float
    verdict: Verdict
    worst_case: Optional[WorstCase] = None
    seed: int

    @model_validator(mode="after")
    def _verdict_matches_deviation(self) -> "LinearityCertificate":
        nonlinear = self.max_deviation > self.threshold
        if nonlinear != (self.verdict == Verdict.NONLINEAR):
            raise ValueError("verdict must be nonlinear iff max_deviation exceeds threshold")
        if nonlinear != (self.worst_case is not None):
            raise ValueError("worst_case must be present iff the verdict is nonlinear")
        return self


class CptpReport(BaseModel):
    cp: bool
    tp: bool
    min_eigenvalue: float
    tp_deviation: float
    tol: float


class ChoiReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    map_label: str
    dim: int
    matrix: MatrixJSON
    cptp: CptpReport


class WitnessReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    map_label: str
    deviation: float
    rho: DensityMatrixPayload
    ensemble_a: EnsemblePayload
    ensemble_b: EnsemblePayload
    evolved_a: DensityMatrixPayload
    evolved_b: DensityMatrixPayload
    ensemble_size: int
    iterations: int
    evaluations: int
    restarts: int
    best_restart: int
    seed: int


class SteeringReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    target: EnsemblePayload
    structure: StructurePayload
    purification: StatePayload
    basis: SteeringBasisPayload
    steered: EnsemblePayload
    marginal_deviation: float
    min_fidelity: float
    max_weight_error: float


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False)

    scenario: Scenario
    factor_dim: int = Field(default=4, ge=2)
    map: Optional[MapSpec] = None
    measurement_basis: Union[BasisChoice, list[VectorJSON], None] = None
    state: InitialState = InitialState.RANDOM
    seed: int = Field(default=0, ge=0)
    tolerance: float = Field(default=1e-8, gt=0.0)


class RunReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scenario: Scenario
    inputs: dict[str, Any]
    deviations: dict[str, float]
    verdicts: dict[str, bool]
    artifacts: dict[str, Any]
    artifact_digest: str
    wall_time: float


# ── Errors ──────────────────────────────────────────────────────────────────

class ErrorDetail(BaseModel):
    type: str
    code: str
    message: str
    param: Optional[str] = None


class ErrorResponse(BaseModel):
    error: ErrorDetail
    exit_code: int

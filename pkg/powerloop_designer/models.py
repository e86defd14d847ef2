"""Data models for the power-loop design toolkit.

All electrical quantities are per-unit on the converter base; ``omega_b`` alone
carries physical units (rad/s). Angles are radians and times are seconds.
"""

import math
from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationInfo,
    field_serializer,
    field_validator,
    model_validator,
)

SetpointName = Literal["p_set", "q_set", "omega_set", "v_set"]
OutputFormat = Literal["report", "json", "csv"]

TRAJECTORY_COLUMNS: Tuple[str, ...] = ("t", "delta", "omega", "v", "p", "q", "e1", "e2")


def _frozen_array(value: Any, shape: Tuple[int, ...], name: str, dtype: Any = float) -> np.ndarray:
    """Copy *value* into a read-only numpy array of the given shape."""
    try:
        array = np.array(value, dtype=dtype)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{name} is not numeric: {e}") from e
    if array.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must be finite")
    array.flags.writeable = False
    return array


class ArrayModel(BaseModel):
    """Immutable model carrying numpy array fields."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_serializer("*", mode="wrap", when_used="json")
    def _serialize_arrays(self, value: Any, handler: Any) -> Any:
        if isinstance(value, np.ndarray):
            if np.iscomplexobj(value):
                return [[float(z.real), float(z.imag)] for z in value.ravel()]
            return value.tolist()
        return handler(value)


class SystemParams(BaseModel):
    """Grid, line, droop and setpoint parameters of one converter."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    omega_b: float = Field(default=100 * math.pi, gt=0.0, description="Frequency base, rad/s")
    omega_g: float = Field(default=1.0, description="Grid frequency, p.u.")
    v_g: float = Field(default=1.0, gt=0.0, description="Grid voltage magnitude, p.u.")
    r_g: float = Field(default=0.0, description="Line resistance, p.u.")
    x_g: float = Field(default=0.087, description="Line reactance, p.u.")
    d_p: float = Field(default=0.01, ge=0.0, description="P-f droop coefficient, p.u.")
    d_q: float = Field(default=0.05, ge=0.0, description="Q-V droop coefficient, p.u.")
    omega_set: float = Field(default=1.0, description="Frequency setpoint, p.u.")
    p_set: float = Field(default=0.5, description="Active power setpoint, p.u.")
    q_set: float = Field(default=0.0, description="Reactive power setpoint, p.u.")
    v_set: float = Field(default=1.0, description="Voltage magnitude setpoint, p.u.")

    @model_validator(mode="after")
    def validate_impedance(self) -> "SystemParams":
        """Reject a zero line impedance."""
        if self.r_g**2 + self.x_g**2 <= 0.0:
            raise ValueError("line impedance must be nonzero (r_g^2 + x_g^2 > 0)")
        return self

    @property
    def impedance_sq(self) -> float:
        """Squared line impedance magnitude r_g^2 + x_g^2."""
        return self.r_g**2 + self.x_g**2

    def with_setpoint(self, target: SetpointName, value: float) -> "SystemParams":
        """Return a copy with one setpoint replaced."""
        return self.model_copy(update={target: float(value)})


class OperatingPoint(BaseModel):
    """Steady-state power angle and capacitor voltage."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    delta0: float = Field(..., gt=-math.pi / 2, lt=math.pi / 2, description="Power angle, rad")
    v0: float = Field(..., gt=0.0, description="Capacitor voltage magnitude, p.u.")


class LinearizedGains(BaseModel):
    """Small-signal sensitivities of p and q to the power angle and voltage."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    k_pdelta: float = Field(..., description="dp/d(delta)")
    k_pv: float = Field(..., description="dp/dV")
    k_qdelta: float = Field(..., description="dq/d(delta)")
    k_qv: float = Field(..., description="dq/dV")

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.k_pdelta, self.k_pv, self.k_qdelta, self.k_qv)


class PlantMatrices(ArrayModel):
    """Extended open-loop pair (A, B) over the states (e1, e2, z)."""

    a: np.ndarray = Field(..., description="3x3 state coupling")
    b: np.ndarray = Field(..., description="3x2 input coupling")

    @field_validator("a", mode="before")
    @classmethod
    def validate_a(cls, v: Any) -> np.ndarray:
        a = _frozen_array(v, (3, 3), "a")
        mask = np.ones((3, 3), dtype=bool)
        mask[0, 2] = mask[1, 2] = False
        if np.any(a[mask] != 0.0):
            raise ValueError("a may only be nonzero at rows 1-2 of column 3")
        return a

    @field_validator("b", mode="before")
    @classmethod
    def validate_b(cls, v: Any) -> np.ndarray:
        b = _frozen_array(v, (3, 2), "b")
        if b[1, 0] != 0.0 or b[2, 1] != 0.0:
            raise ValueError("b[2][1] and b[3][2] must be zero")
        return b

    def closed_loop(self, k: np.ndarray) -> np.ndarray:
        """Closed-loop state matrix A - B K."""
        return self.a - self.b @ np.asarray(k, dtype=float)


class ControllabilityReport(ArrayModel):
    """Controllability matrix [B, AB, A^2 B] and its numerical rank."""

    p_matrix: np.ndarray = Field(..., description="3x6 controllability matrix")
    singular_values: np.ndarray = Field(..., description="Singular values, descending")
    rank: int = Field(..., ge=0, le=3, description="Numerical rank")
    controllable: bool = Field(..., description="True iff rank == 3")
    rank_tol: float = Field(default=1e-9, gt=0.0, lt=1.0, description="Relative rank threshold")

    @field_validator("p_matrix", mode="before")
    @classmethod
    def validate_p(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, (3, 6), "p_matrix")

    @field_validator("singular_values", mode="before")
    @classmethod
    def validate_sv(cls, v: Any) -> np.ndarray:
        sv = _frozen_array(v, (3,), "singular_values")
        if np.any(sv < 0.0):
            raise ValueError("singular values must be nonnegative")
        return sv

    @model_validator(mode="after")
    def validate_verdict(self) -> "ControllabilityReport":
        if self.controllable != (self.rank == 3):
            raise ValueError("controllable must equal (rank == 3)")
        return self


class PerformanceSpec(BaseModel):
    """Time-domain targets for the dominant pair plus the third real pole."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    xi: float = Field(..., gt=0.0, lt=1.0, description="Damping ratio")
    ts: float = Field(..., gt=0.0, description="2% settling time, s")
    a: float = Field(default=20.0, gt=0.0, description="Third pole magnitude, 1/s")

    @property
    def omega_n(self) -> float:
        """Natural frequency implied by ts = 4 / (xi * omega_n)."""
        return 4.0 / (self.xi * self.ts)

    @property
    def percent_overshoot(self) -> float:
        from .pole_design import po_from_damping

        return po_from_damping(self.xi)

    @property
    def separation_ratio(self) -> float:
        """Third-pole magnitude over the dominant decay rate."""
        return self.a / (self.xi * self.omega_n)

    @property
    def is_well_separated(self) -> bool:
        return self.separation_ratio >= 5.0


class EigenvalueTargets(ArrayModel):
    """Three closed-loop eigenvalue targets, conjugate-closed and stable."""

    lambdas: np.ndarray = Field(..., description="Three complex targets, 1/s")

    @field_validator("lambdas", mode="before")
    @classmethod
    def validate_lambdas(cls, v: Any) -> np.ndarray:
        lam = _frozen_array(v, (3,), "lambdas", dtype=complex)
        if np.any(lam == 0):
            raise ValueError("targets must be nonzero")
        if np.any(lam.real >= 0.0):
            raise ValueError("targets must have strictly negative real parts")
        scale = float(np.max(np.abs(lam)))
        for z in lam:
            if np.min(np.abs(lam - np.conj(z))) > 1e-12 * scale:
                raise ValueError("targets must be closed under complex conjugation")
        return lam


class FeedbackGain(ArrayModel):
    """State-feedback gain K with the spectrum it achieves on its plant."""

    k: np.ndarray = Field(..., description="2x3 gain matrix")
    achieved_eigs: np.ndarray = Field(..., description="Eigenvalues of A - B K")
    max_rel_error: float = Field(..., ge=0.0, description="Worst relative eigenvalue error")
    parameter_matrix: Optional[np.ndarray] = Field(default=None, description="2x3 matrix G used")
    transform_condition: Optional[float] = Field(default=None, description="cond(X) of the transform")

    @field_validator("k", mode="before")
    @classmethod
    def validate_k(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, (2, 3), "k")

    @field_validator("achieved_eigs", mode="before")
    @classmethod
    def validate_eigs(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, (3,), "achieved_eigs", dtype=complex)

    @field_validator("parameter_matrix", mode="before")
    @classmethod
    def validate_g(cls, v: Any) -> Optional[np.ndarray]:
        return None if v is None else _frozen_array(v, (2, 3), "parameter_matrix")

    @property
    def is_stable(self) -> bool:
        return bool(np.all(self.achieved_eigs.real < 0.0))


class SimConfig(BaseModel):
    """Fixed-step integration settings."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    t_end: float = Field(..., gt=0.0, description="Simulated horizon, s")
    dt: float = Field(default=1e-4, gt=0.0, le=5e-3, description="Integration step, s")
    record_every: int = Field(default=1, ge=1, description="Record one sample every N steps")

    @model_validator(mode="after")
    def validate_step(self) -> "SimConfig":
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


class SetpointEvent(BaseModel):
    """A step change of one setpoint at a given time."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    time: float = Field(..., ge=0.0, description="Event time, s")
    target: SetpointName = Field(..., description="Setpoint to change")
    value: float = Field(..., description="New setpoint value, p.u.")


class Trajectory(ArrayModel):
    """Uniformly sampled simulation record.

    For ``kind == "linear"`` the columns hold deviation states: ``delta``
    carries z (the power-angle rate) and omega/v/p/q are zero.
    """

    kind: Literal["nonlinear", "linear"] = Field(default="nonlinear")
    t: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    d_p: float = Field(default=0.0, ge=0.0, description="Droop used to rebuild y1")
    d_q: float = Field(default=0.0, ge=0.0, description="Droop used to rebuild y2")

    @field_validator("t", "delta", "omega", "v", "p", "q", "e1", "e2", mode="before")
    @classmethod
    def validate_column(cls, v: Any, info: ValidationInfo) -> np.ndarray:
        column = np.asarray(v, dtype=float)
        if column.ndim != 1 or column.size == 0:
            raise ValueError(f"{info.field_name} must be a non-empty 1-D series")
        return _frozen_array(column, column.shape, info.field_name)

    @model_validator(mode="after")
    def validate_samples(self) -> "Trajectory":
        n = self.t.size
        if any(getattr(self, name).size != n for name in TRAJECTORY_COLUMNS):
            raise ValueError("all trajectory columns must have the same length")
        if n > 1 and not np.all(np.diff(self.t) > 0.0):
            raise ValueError("t must be strictly increasing")
        return self

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def y1(self) -> np.ndarray:
        """Frequency-droop output omega + d_p * p."""
        return self.omega + self.d_p * self.p

    @property
    def y2(self) -> np.ndarray:
        """Voltage-droop output v + d_q * q."""
        return self.v + self.d_q * self.q

    def column(self, name: str) -> np.ndarray:
        """Look up a recorded column or one of the droop outputs by name."""
        if name in TRAJECTORY_COLUMNS:
            return getattr(self, name)
        if name in ("y1", "y2"):
            return getattr(self, name)
        raise KeyError(f"unknown trajectory signal: {name}")

    def to_matrix(self) -> np.ndarray:
        """Samples as an (n, 8) array in TRAJECTORY_COLUMNS order."""
        return np.column_stack([getattr(self, name) for name in TRAJECTORY_COLUMNS])


class StepMetrics(BaseModel):
    """Overshoot and settling figures of one step response."""

    model_config = ConfigDict(frozen=True)

    signal: str = Field(..., description="Signal the metrics were read from")
    overshoot: float = Field(..., ge=0.0, description="Percent overshoot")
    settling_time: float = Field(..., ge=0.0, description="Settling time after the event, s")
    peak_time: float = Field(..., ge=0.0, description="Time of the peak after the event, s")
    final_value: float = Field(..., description="Mean of the trailing 5% of samples")
    initial_value: float = Field(..., description="Value just before the event")
    band: float = Field(default=0.02, gt=0.0, lt=1.0, description="Settling band fraction")


class CaseSpec(BaseModel):
    """One eigenvalue-placement case of a design configuration."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    name: str = Field(..., min_length=1, description="Unique case name")
    xi: Optional[float] = Field(default=None, description="Damping ratio")
    po: Optional[float] = Field(default=None, description="Percent overshoot, alternative to xi")
    ts: float = Field(..., gt=0.0, description="2% settling time, s")
    a: float = Field(default=20.0, gt=0.0, description="Third pole magnitude, 1/s")
    parameter_matrix: Optional[List[List[float]]] = Field(
        default=None, description="2x3 parameter matrix for the Sylvester placement"
    )

    @field_validator("name")
    @classmethod
    def validate_name(cls, v: str) -> str:
        if not v.strip() or any(ch in v for ch in '/\\:*?"<>|'):
            raise ValueError("name must be non-blank and usable as a file name")
        return v.strip()

    @field_validator("xi")
    @classmethod
    def validate_xi(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError("xi must be in (0,1)")
        return v

    @field_validator("po")
    @classmethod
    def validate_po(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not 0.0 < v < 100.0:
            raise ValueError("po must be in (0,100)")
        return v

    @field_validator("parameter_matrix")
    @classmethod
    def validate_parameter_matrix(cls, v: Optional[List[List[float]]]) -> Optional[List[List[float]]]:
        if v is not None and (len(v) != 2 or any(len(row) != 3 for row in v)):
            raise ValueError("parameter_matrix must be 2x3")
        return v

    @model_validator(mode="after")
    def validate_damping_source(self) -> "CaseSpec":
        if (self.xi is None) == (self.po is None):
            raise ValueError("exactly one of xi or po is required")
        return self

    @property
    def damping(self) -> float:
        if self.xi is not None:
            return self.xi
        from .pole_design import damping_from_po

        return damping_from_po(self.po)

    def to_performance_spec(self) -> PerformanceSpec:
        return PerformanceSpec(xi=self.damping, ts=self.ts, a=self.a)


class SimSettings(BaseModel):
    """Simulation section of a design configuration."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    t_end: float = Field(default=8.0, gt=0.0, description="Simulated horizon, s")
    dt: float = Field(default=1e-4, gt=0.0, le=5e-3, description="Integration step, s")
    record_every: int = Field(default=1, ge=1, description="Record one sample every N steps")
    events: List[SetpointEvent] = Field(default_factory=list, description="Setpoint steps")
    band: float = Field(default=0.02, gt=0.0, lt=1.0, description="Settling band fraction")
    metric_signal: str = Field(default="p", description="Signal summarised by step metrics")

    @field_validator("metric_signal")
    @classmethod
    def validate_metric_signal(cls, v: str) -> str:
        if v not in TRAJECTORY_COLUMNS[1:] + ("y1", "y2"):
            raise ValueError(f"metric_signal must be one of {', '.join(TRAJECTORY_COLUMNS[1:] + ('y1', 'y2'))}")
        return v

    @model_validator(mode="after")
    def validate_horizon(self) -> "SimSettings":
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        for event in self.events:
            if event.time > self.t_end:
                raise ValueError(f"event at t={event.time} lies beyond t_end={self.t_end}")
        return self

    def to_sim_config(self) -> SimConfig:
        return SimConfig(t_end=self.t_end, dt=self.dt, record_every=self.record_every)


class OutputSettings(BaseModel):
    """Where and in which formats results are written."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    directory: Path = Field(default=Path("output"), description="Output directory")
    formats: List[OutputFormat] = Field(
        default_factory=lambda: ["report", "csv"], description="Files to produce"
    )


class DesignConfig(BaseModel):
    """Complete input of the design and simulation pipeline."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    system: SystemParams = Field(default_factory=SystemParams, description="Plant parameters")
    cases: List[CaseSpec] = Field(..., description="Eigenvalue-placement cases")
    sim: SimSettings = Field(default_factory=SimSettings, description="Simulation settings")
    output: OutputSettings = Field(default_factory=OutputSettings, description="Output settings")
    rank_tol: float = Field(default=1e-9, gt=0.0, lt=1.0, description="Controllability rank threshold")

    @field_validator("cases")
    @classmethod
    def validate_cases(cls, v: List[CaseSpec]) -> List[CaseSpec]:
        if not v:
            raise ValueError("at least one required")
        names = [case.name for case in v]
        if len(set(names)) != len(names):
            raise ValueError("case names must be unique")
        return v


CaseStatus = Literal["ok", "uncontrollable", "unsolvable", "failed"]


class CaseReport(BaseModel):
    """Everything the pipeline derived for one case, step by step."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    spec: Optional[PerformanceSpec] = None
    status: CaseStatus = "ok"
    message: str = ""
    operating_point: Optional[OperatingPoint] = None
    gains: Optional[LinearizedGains] = None
    plant: Optional[PlantMatrices] = None
    controllability: Optional[ControllabilityReport] = None
    targets: Optional[EigenvalueTargets] = None
    gain: Optional[FeedbackGain] = None
    published_gain_eigs: Optional[List[Tuple[float, float]]] = None
    metrics: Optional[StepMetrics] = None
    settled: Optional[bool] = Field(
        default=None, description="False when the metric signal is still outside its band at t_end"
    )
    metrics_message: str = ""
    trajectory_file: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.status == "ok"


class DesignReport(BaseModel):
    """Per-case results of a design (and optionally simulation) run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    units: str = Field(
        default="angles in rad; power, voltage and frequency in p.u.; time in s",
        description="Unit convention",
    )
    cases: List[CaseReport] = Field(default_factory=list)

    @property
    def all_succeeded(self) -> bool:
        return all(case.succeeded for case in self.cases)

    @property
    def failed_cases(self) -> List[CaseReport]:
        return [case for case in self.cases if not case.succeeded]


class FixtureResult(BaseModel):
    """Outcome of one built-in regression fixture."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="Fixture name")
    passed: bool = Field(..., description="True if every check of the fixture held")
    worst_error: float = Field(..., description="Largest measured error against the tolerance")
    tolerance: float = Field(..., ge=0.0, description="Tolerance the error was compared with")
    detail: str = Field(default="", description="Human-readable summary or failure diagnostics")

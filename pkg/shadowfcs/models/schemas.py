import math
import re
from enum import Enum
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from shadowfcs.errors import InputError

MAX_QUBITS = 14

DATASET_SCHEMA = "rm-dataset/1"
STATE_SCHEMA = "rm-state/1"
TABLE_SCHEMA = "rm-table/1"

_ANGLE_PATTERN = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*$")


def parse_angle(value: Any) -> Any:
    """Accept plain radians or multiples of pi written as '0.5pi' / '0.5*pi'."""
    if isinstance(value, str):
        match = _ANGLE_PATTERN.match(value)
        if match:
            factor = match.group(1)
            if factor in ("", "+"):
                return math.pi
            if factor == "-":
                return -math.pi
            return float(factor) * math.pi
        return float(value)
    return value


class StrictModel(BaseModel):
    """Base model for configuration sections: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class Axis(str, Enum):
    """Spin axis mu of S_A^mu."""

    X = "x"
    Y = "y"
    Z = "z"


# Value objects
class SubsystemSpec(BaseModel):
    """Ordered set of 1-based site labels."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sites: tuple[int, ...]

    @field_validator("sites")
    @classmethod
    def validate_sites(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v:
            raise ValueError("Subsystem must contain at least one site")
        if any(site < 1 for site in v):
            raise ValueError(f"Site labels are 1-based, got {list(v)}")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"Sites must be strictly increasing, got {list(v)}")
        return v

    @classmethod
    def parse(cls, text: str) -> "SubsystemSpec":
        """Parse an inclusive range 'a:b' or an explicit list 'a,b,c'."""
        text = text.strip()
        try:
            if ":" in text:
                start, stop = (int(part) for part in text.split(":"))
                sites = tuple(range(start, stop + 1))
            else:
                sites = tuple(int(part) for part in text.split(",") if part.strip())
        except ValueError:
            raise ValueError(f"Cannot parse subsystem '{text}'; use 'a:b' or 'a,b,c'")
        return cls(sites=sites)

    @classmethod
    def window(cls, start: int, size: int) -> "SubsystemSpec":
        return cls(sites=tuple(range(start, start + size)))

    @property
    def size(self) -> int:
        return len(self.sites)

    def check_within(self, n_qubits: int) -> None:
        """Raise InputError unless every site lies in [1, n_qubits]."""
        if self.sites[-1] > n_qubits:
            raise InputError(
                f"Subsystem {list(self.sites)} exceeds system size {n_qubits}"
            )

    def __str__(self) -> str:
        if self.sites == tuple(range(self.sites[0], self.sites[-1] + 1)):
            return f"{self.sites[0]}:{self.sites[-1]}"
        return ",".join(str(site) for site in self.sites)


class PauliString(BaseModel):
    """Tensor product of Pauli matrices; identity on unlisted sites."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    terms: dict[int, Axis] = Field(default_factory=dict)

    @field_validator("terms")
    @classmethod
    def validate_terms(cls, v: dict[int, Axis]) -> dict[int, Axis]:
        if any(site < 1 for site in v):
            raise ValueError(f"Site labels are 1-based, got {sorted(v)}")
        return dict(sorted(v.items()))

    @classmethod
    def uniform(cls, sites: tuple[int, ...] | list[int], axis: Axis) -> "PauliString":
        return cls(terms={site: axis for site in sites})

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(self.terms)

    @property
    def weight(self) -> int:
        return len(self.terms)

    def label(self) -> str:
        if not self.terms:
            return "I"
        return " ".join(f"{axis.value}{site}" for site, axis in self.terms.items())


# Experiment configuration
class QuenchConfig(StrictModel):
    n_qubits: int = Field(10, ge=2)
    j0: float = Field(420.0, gt=0, description="Coupling J0 in rad/s")
    alpha_exp: float = Field(1.24, ge=0, description="Power-law exponent of the couplings")
    times_ms: list[float] = Field(default_factory=lambda: [0.0])

    @field_validator("times_ms")
    @classmethod
    def validate_times(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("At least one evolution time is required")
        if any(t < 0 for t in v):
            raise ValueError(f"Evolution times must be non-negative, got {v}")
        return v


class InitialStateSpec(StrictModel):
    kind: Literal["neel", "tilted_ferromagnet"] = "neel"
    theta: float = Field(0.0, ge=0, le=math.pi)
    bitflip_rates: list[float] | None = None

    @field_validator("theta", mode="before")
    @classmethod
    def validate_theta(cls, v: Any) -> Any:
        return parse_angle(v)

    @field_validator("bitflip_rates")
    @classmethod
    def validate_rates(cls, v: list[float] | None) -> list[float] | None:
        if v is not None and any(not 0.0 <= p <= 0.5 for p in v):
            raise ValueError(f"Bit-flip rates must lie in [0, 0.5], got {v}")
        return v

    def describe(self) -> str:
        if self.kind == "neel":
            text = "neel"
        else:
            text = f"tilted_ferromagnet(theta={self.theta!r})"
        if self.bitflip_rates:
            text += f"+bitflip{self.bitflip_rates}"
        return text


class AcquisitionConfig(StrictModel):
    n_u: int = Field(500, ge=1, description="Number of random unitaries")
    n_m: int = Field(150, ge=1, description="Shots per random unitary")
    seed: int = Field(0, ge=0)


class NoiseConfig(StrictModel):
    dephasing_rate: float = Field(0.0, ge=0, description="Per-site dephasing rate in 1/s")
    trotter_step_ms: float = Field(0.1, gt=0)


class AnalysisConfig(StrictModel):
    subsystem: str = "4:7"
    axes: list[Axis] = Field(default_factory=lambda: [Axis.X, Axis.Z])
    alpha_points: int = Field(65, ge=2)
    alpha_max: float | None = Field(None, gt=0)
    bulk_average: bool = False
    bulk_edge: int = Field(1, ge=0)
    error_method: Literal["stderr", "jackknife"] = "stderr"
    jackknife_blocks: int | None = Field(None, ge=2)
    targets: list[Literal["fcs", "pdf", "moments", "propagated"]] = Field(
        default_factory=lambda: ["fcs", "pdf", "moments"]
    )
    sweep_alphas: list[float] = Field(default_factory=lambda: [math.pi / 4])

    @field_validator("alpha_max", mode="before")
    @classmethod
    def validate_alpha_max(cls, v: Any) -> Any:
        return parse_angle(v) if v is not None else v

    @field_validator("sweep_alphas", mode="before")
    @classmethod
    def validate_sweep_alphas(cls, v: Any) -> Any:
        return [parse_angle(a) for a in v]

    @field_validator("subsystem")
    @classmethod
    def validate_subsystem(cls, v: str) -> str:
        SubsystemSpec.parse(v)
        return v

    @property
    def subsystem_spec(self) -> SubsystemSpec:
        return SubsystemSpec.parse(self.subsystem)


class RunConfig(StrictModel):
    """Complete parameter set of one simulate / acquire / estimate run."""

    quench: QuenchConfig = Field(default_factory=QuenchConfig)
    initial_state: InitialStateSpec = Field(default_factory=InitialStateSpec)
    acquisition: AcquisitionConfig = Field(default_factory=AcquisitionConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)

    @model_validator(mode="after")
    def validate_consistency(self) -> "RunConfig":
        rates = self.initial_state.bitflip_rates
        if rates is not None and len(rates) != self.quench.n_qubits:
            raise ValueError(
                f"Expected {self.quench.n_qubits} bit-flip rates, got {len(rates)}"
            )
        subsystem = self.analysis.subsystem_spec
        if subsystem.sites[-1] > self.quench.n_qubits:
            raise ValueError(
                f"Subsystem {self.analysis.subsystem} exceeds system size {self.quench.n_qubits}"
            )
        return self

    @classmethod
    def preset(cls, name: str) -> "RunConfig":
        """Parameter sets of the two experimental runs."""
        key = name.lower().removeprefix("case-").removeprefix("case")
        if key in ("i", "1"):
            return cls()
        if key in ("ii", "2"):
            return cls(
                quench=QuenchConfig(n_qubits=12, j0=560.0, alpha_exp=1.0),
                initial_state=InitialStateSpec(kind="tilted_ferromagnet", theta=0.5 * math.pi),
                acquisition=AcquisitionConfig(n_u=500, n_m=30),
                analysis=AnalysisConfig(subsystem="5:8"),
            )
        raise ValueError(f"Unknown preset '{name}'; available: case-I, case-II")


# File metadata
class DatasetMetadata(BaseModel):
    """First line of a dataset file."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_tag: str = Field(DATASET_SCHEMA, alias="schema")
    n_qubits: int = Field(ge=1)
    n_u: int = Field(ge=1)
    n_m: int = Field(ge=1)
    seed: int
    state_descriptor: str = ""
    time_ms: float = 0.0
    build: str = ""


class StateMetadata(BaseModel):
    """First line of a state file."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_tag: str = Field(STATE_SCHEMA, alias="schema")
    kind: Literal["pure", "density"]
    sites: list[int]
    time_ms: float = 0.0
    state_descriptor: str = ""
    config: dict[str, Any] | None = None
    build: str = ""


# Closed-form theory
ClosedFormFamily = Literal[
    "neel_fcs_x",
    "neel_pdf_x",
    "neel_bitflip_fcs_z",
    "neel_bitflip_pdf_z",
    "tilted_fcs_z",
    "tilted_fcs_x",
    "tilted_pdf_z_halfpi",
    "tilted_pdf_z",
    "tilted_pdf_x",
    "parity",
]


class ClosedFormSpec(StrictModel):
    family: ClosedFormFamily
    n_a: int = Field(ge=1)
    theta: float | None = None
    rates: list[float] | None = None
    first_site: int = Field(1, ge=1, description="Chain label of the first subsystem site")
    state: Literal["neel", "tilted"] | None = None
    axis: Axis | None = None

    @field_validator("theta", mode="before")
    @classmethod
    def validate_theta(cls, v: Any) -> Any:
        return parse_angle(v) if v is not None else v

    @model_validator(mode="after")
    def validate_parameters(self) -> "ClosedFormSpec":
        needs_theta = (
            self.family.startswith("tilted") and self.family != "tilted_pdf_z_halfpi"
        ) or (self.family == "parity" and self.state == "tilted")
        if needs_theta and self.theta is None:
            raise ValueError(f"Family '{self.family}' requires theta")
        if self.family.startswith("neel_bitflip"):
            if self.rates is None or len(self.rates) != self.n_a:
                raise ValueError(f"Family '{self.family}' requires {self.n_a} rates")
            if any(not 0.0 <= p <= 0.5 for p in self.rates):
                raise ValueError(f"Bit-flip rates must lie in [0, 0.5], got {self.rates}")
        if self.family == "parity" and (self.state is None or self.axis is None):
            raise ValueError("Family 'parity' requires state and axis")
        return self

    @property
    def kind(self) -> Literal["fcs", "pdf", "parity"]:
        if self.family == "parity":
            return "parity"
        return "fcs" if "_fcs_" in self.family else "pdf"

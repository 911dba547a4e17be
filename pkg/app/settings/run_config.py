"""
Per-run configuration.

A run is described by one TOML document with the sections `model`, `modes`,
`fock`, `grid`, `potential`, `mc`, `series`, `checks` and `output`. Every
section has defaults, and each command starts from its own defaults
(`default_config`) so that `python -m app.cli vanhove` runs without a file.

The whole document is validated before any compute. Validation errors carry
the field path (pydantic `loc`). The content hash is the sha256 of the
canonical JSON dump with sorted keys, so it does not depend on key order.
"""

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from app.db.datatypes import (ComplexVector, ExistingFile, FiniteVector, HorizonFractions, IncreasingVector,
                              PositiveVector, Seed)
from app.engine.fock import fock_dimension
from app.engine.potentials import Potential
from app.models.Command import Command
from app.models.EstimatorMode import EstimatorMode
from app.models.Flavor import Flavor
from app.models.GridKind import GridKind
from app.models.Preset import Preset
from app.models.Scheme import Scheme
from app.settings.config import settings

DEFAULT_SEED = 20240521


def as_complex(pairs: list[list[float]]) -> NDArray[np.complex128]:
    """`[re, im]` pairs to a complex array."""
    if not pairs:
        return np.zeros(0, dtype=np.complex128)
    array = np.asarray(pairs, dtype=np.float64)
    return array[:, 0] + 1j * array[:, 1]


# region sections
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)


class ModelSection(_Section):
    preset: Preset = Field(
        default=Preset.NELSON,
        title="Preset",
        description="Model family the couplings are taken from",
    )
    coupling_strength: float = Field(
        default=1.0,
        title="Coupling Strength",
        description="Real factor applied to F",
    )
    scalar_coupling: list[FiniteVector] | None = Field(
        default=None,
        title="Scalar Coupling",
        description="Real G_0 rows (one per space direction) for the Nelson, spin-toy and free presets",
        examples=[[[0.4, 0.2]]],
    )
    translation_covariant: bool = Field(
        default=True,
        title="Translation Covariant",
        description="Whether the couplings carry the plane-wave phase exp(-i m.x)",
    )
    xi: FiniteVector = Field(
        default=[0.0],
        title="Total Momentum",
        description="Fiber momentum, one entry per space direction",
    )


class ModesSection(_Section):
    mu: PositiveVector = Field(default=[1.0], title="Weights", description="Measure weight of each mode")
    omega: PositiveVector = Field(default=[1.0], title="Dispersion", description="Boson energy of each mode")
    momentum: list[FiniteVector] = Field(
        default=[[0.0]],
        title="Momentum",
        description="Boson momentum of each mode, one row per mode",
    )
    form_factor: ComplexVector = Field(
        default=[0.3],
        title="Form Factor",
        description="F_0 of the Nelson and spin-toy presets, real or [re, im] entries",
    )
    table: ExistingFile = Field(
        default=None,
        title="Mode Table",
        description="CSV mode table used by the table preset",
    )
    k_grid: list[FiniteVector] = Field(default=[], title="Photon Grid", description="Photon momenta of the NRQED preset")
    weights: list[float] = Field(default=[], title="Grid Weights", description="Quadrature weights of the photon grid")
    cutoff: PositiveFloat = Field(default=1.0, title="Cutoff", description="Ultraviolet cutoff of the NRQED preset")
    alpha: float = Field(default=1 / 137.036, title="Alpha", description="Fine-structure constant", ge=0)
    max_momentum_ratio: PositiveFloat = Field(
        default=1.0,
        title="Maximum Momentum Ratio",
        description="Largest |m_k| / omega_k allowed for fiber runs",
    )

    @property
    def inline_count(self) -> int:
        return len(self.mu)

    @model_validator(mode="after")
    def _check_lengths(self) -> Self:
        count = len(self.mu)
        if len(self.omega) != count or len(self.momentum) != count:
            raise ValueError("mu, omega and momentum need one entry per mode")
        if len({len(row) for row in self.momentum}) > 1:
            raise ValueError("every momentum row needs the same number of components")
        if len(self.k_grid) != len(self.weights):
            raise ValueError("the photon grid needs one weight per point")
        return self


class FockSection(_Section):
    max_bosons: int = Field(default=8, title="Boson Cutoff", description="Total occupation cutoff N", ge=0)


class GridSection(_Section):
    horizon: PositiveFloat = Field(default=0.5, title="Horizon", description="Time horizon t")
    steps: PositiveInt = Field(default=128, title="Steps", description="Number of time steps K")
    kind: GridKind = Field(default=GridKind.UNIFORM, title="Kind", description="Uniform or graded grid")
    ratio: float = Field(default=0.9, title="Grading Ratio", description="Geometric ratio of a graded grid", gt=0, lt=1)
    refine: bool = Field(
        default=True,
        title="Refinement",
        description="Measure the bias on nested grids with two and four times the steps",
    )
    refinements: list[PositiveInt] = Field(
        default=[32, 64, 128],
        title="Refinements",
        description="Step counts of refinement studies",
    )


class MonteCarloSection(_Section):
    n_paths: PositiveInt = Field(default=2000, title="Paths", description="Number of sampled paths")
    seed: Seed = Field(default=DEFAULT_SEED, title="Master Seed", description="Source of every random number of the run")
    workers: PositiveInt = Field(default=1, title="Workers", description="Worker processes of the path map")
    antithetic: bool = Field(default=False, title="Antithetic", description="Pair every path with its mirror image")
    mode: EstimatorMode = Field(default=EstimatorMode.SDE_ON_TRUNCATED, title="Mode", description="Fiber estimator mode")
    scheme: Scheme = Field(default=Scheme.SPLITTING, title="Scheme", description="Time stepping of the spin SDE")
    flavor: Flavor = Field(default=Flavor.ITO_LEFT, title="Flavor", description="Discretization of the basic processes")


class SeriesSection(_Section):
    max_order: int = Field(default=6, title="Maximum Order", description="Truncation order of the time-ordered series", ge=0)


class ChecksSection(_Section):
    g: ComplexVector = Field(default=[0.2], title="g", description="Left exponential-vector argument")
    h: ComplexVector = Field(default=[0.1], title="h", description="Right exponential-vector argument")
    x: FiniteVector = Field(default=[0.0], title="x", description="Kernel end point")
    y: FiniteVector = Field(default=[0.5], title="y", description="Kernel start point")
    s: PositiveFloat = Field(default=0.25, title="s", description="First horizon of the semigroup check")
    z_max: PositiveFloat = Field(default=3.0, title="z Threshold", description="Largest accepted z-score")
    semigroup_z_max: PositiveFloat = Field(default=4.0, title="Semigroup z Threshold", description="Largest z of the semigroup check")
    bias_envelope: float = Field(default=0.0, title="Bias Envelope", description="Known bias allowance subtracted before z-scores", ge=0)
    moment_orders: list[PositiveInt] = Field(default=[1, 2], title="Moment Orders", description="Orders p of the bridge moments")
    moment_dims: list[PositiveInt] = Field(default=[1, 3], title="Moment Dimensions", description="Space dimensions of the bridge moments")
    t_fractions: HorizonFractions = Field(default=[0.25, 0.5, 0.9], title="Time Fractions", description="t / T of the bridge moments")
    moment_z_max: PositiveFloat = Field(default=5.0, title="Moment z Threshold", description="Largest accepted moment z-score")
    cutoffs: list[int] = Field(default=[4, 6, 8, 10], title="Cutoffs", description="Boson cutoffs of truncation studies")
    path_counts: list[PositiveInt] = Field(default=[500, 2000], title="Path Counts", description="Path counts of the sweep")
    reversal_tolerance: PositiveFloat = Field(default=1e-9, title="Reversal Tolerance", description="Largest midpoint reversal residual")
    reversal_paths: PositiveInt = Field(default=20, title="Reversal Paths", description="Paths of the reversal checks")
    min_slope: float = Field(default=0.6, title="Minimum Slope", description="Smallest accepted refinement slope")
    symmetry_tolerance: PositiveFloat = Field(
        default=5e-3,
        title="Symmetry Tolerance",
        description="Largest mean kernel symmetry residual on the finest refinement",
    )
    bias_ratio_min: PositiveFloat = Field(default=1.8, title="Bias Ratio Minimum", description="Smallest accepted bias ratio under step halving")
    bias_ratio_max: PositiveFloat = Field(default=2.2, title="Bias Ratio Maximum", description="Largest accepted bias ratio under step halving")
    bias_resolution: PositiveFloat = Field(
        default=3.0,
        title="Bias Resolution",
        description="Bias differences below this many standard errors leave the bias ratio unchecked",
    )
    series_tolerance: PositiveFloat = Field(default=0.05, title="Series Tolerance", description="Largest accepted series vs SDE gap")
    tail_ratio_max: PositiveFloat = Field(default=1e-3, title="Tail Ratio", description="Largest accepted last-order ratio")
    energy_tolerance: PositiveFloat = Field(default=1e-8, title="Energy Tolerance", description="Ground energy tolerance")
    norm_constant: float | None = Field(
        default=None,
        title="Norm Constant",
        description="Frozen constant c of the norm bound; fitted and reported when absent",
        ge=0,
    )
    profile_center: float = Field(default=0.0, title="Profile Center", description="Center of the Gaussian test profile")
    profile_width: PositiveFloat = Field(default=1.0, title="Profile Width", description="Width of the Gaussian test profile")
    quadrature_nodes: PositiveInt = Field(default=9, title="Quadrature Nodes", description="Gauss-Hermite nodes")
    a_values: IncreasingVector = Field(default=[1.0, 2.0, 4.0], title="a Values", description="Weights a of the M_a comparison")
    epsilons: list[PositiveFloat] = Field(default=[0.5, 0.1], title="Epsilons", description="Relative bounds of the M_a comparison")

    @model_validator(mode="after")
    def _check_bias_ratio(self) -> Self:
        if self.bias_ratio_min >= self.bias_ratio_max:
            raise ValueError("bias_ratio_min must be smaller than bias_ratio_max")
        return self


class OutputSection(_Section):
    dir: Path | None = Field(default=None, title="Directory", description="Output directory, OUTPUT_DIR when absent")
    dump_paths: bool = Field(default=False, title="Dump Paths", description="Write sampled paths of the reversal check")
    dump_traces: bool = Field(default=False, title="Dump Traces", description="Write basic-process traces of the reversal check")
# endregion


# region config
class RunConfig(_Section):
    """Complete description of one run."""
    command: Command
    model: ModelSection = ModelSection()
    modes: ModesSection = ModesSection()
    fock: FockSection = FockSection()
    grid: GridSection = GridSection()
    potential: Potential = Potential()
    mc: MonteCarloSection = MonteCarloSection()
    series: SeriesSection = SeriesSection()
    checks: ChecksSection = ChecksSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _check_guards(self) -> Self:
        if self.model.preset is Preset.TABLE and self.modes.table is None:
            raise ValueError("the table preset needs modes.table")
        if self.model.preset in (Preset.NELSON, Preset.SPIN_TOY, Preset.FREE):
            count = self.modes.inline_count
            if self.model.preset is not Preset.FREE and len(self.modes.form_factor) != count:
                raise ValueError("modes.form_factor needs one entry per mode")
            spin_dim = 2 if self.model.preset is Preset.SPIN_TOY else 1
            dim = spin_dim * fock_dimension(count, self.fock.max_bosons)
            if dim > settings.MAX_FOCK_DIM:
                raise ValueError(f"the truncated space has dimension {dim} above the cap {settings.MAX_FOCK_DIM}")
            space_dim = len(self.modes.momentum[0])
            if len(self.model.xi) != space_dim:
                raise ValueError("model.xi needs one entry per space direction")
        if self.command.uses_series:
            if self.series.max_order > settings.SERIES_MAX_ORDER:
                raise ValueError(f"series.max_order is capped at {settings.SERIES_MAX_ORDER}")
            if self.grid.steps > settings.SERIES_MAX_STEPS:
                raise ValueError(f"grid.steps is capped at {settings.SERIES_MAX_STEPS} for series commands")
        return self

    @property
    def output_dir(self) -> Path:
        return self.output.dir or settings.OUTPUT_DIR

    def canonical(self) -> dict[str, Any]:
        """Content of the run; the worker count never changes a result and is left out."""
        return self.model_dump(mode="json", exclude={"mc": {"workers"}})

    def content_hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def with_overrides(self, **sections: dict[str, Any]) -> "RunConfig":
        """Merges per-section overrides and validates the result again."""
        data = self.model_dump(mode="json")
        for section, values in sections.items():
            if values:
                data.setdefault(section, {}).update(values)
        return RunConfig.model_validate(data)
# endregion


# region defaults
_SPIN_TOY_MODES: dict[str, Any] = {
    "mu": [1.0, 1.0],
    "omega": [1.0, 1.5],
    "momentum": [[0.0], [0.0]],
    "form_factor": [0.3, 0.2],
}

COMMAND_DEFAULTS: dict[Command, dict[str, Any]] = {
    Command.FIBER_MC: {
        "grid": {"horizon": 0.5, "steps": 128},
        "mc": {"n_paths": 20000},
    },
    Command.KERNEL_MC: {
        "model": {"scalar_coupling": [[0.2]]},
        "grid": {"horizon": 0.5, "steps": 64},
        "fock": {"max_bosons": 6},
        "mc": {"n_paths": 4000},
    },
    Command.BRIDGE_MOMENTS: {
        "grid": {"horizon": 1.0, "steps": 100},
        "mc": {"n_paths": 100000},
    },
    Command.SERIES_VS_SDE: {
        "grid": {"horizon": 0.5, "steps": 32},
        "mc": {"n_paths": 20},
    },
    Command.REVERSAL_CHECK: {
        "model": {"preset": "spin_toy", "scalar_coupling": [[0.4, 0.2]]},
        "modes": _SPIN_TOY_MODES,
        "checks": {"g": [0.2, 0.1], "h": [0.1, -0.1]},
        "fock": {"max_bosons": 4},
    },
    Command.VANHOVE: {
        "modes": {"omega": [2.0], "form_factor": [1.0]},
        "fock": {"max_bosons": 14},
        "checks": {"cutoffs": [4, 6, 8, 10, 12, 14]},
    },
    Command.SWEEP: {
        "mc": {"mode": "closed_form"},
        "grid": {"refinements": [32, 64, 128]},
    },
    Command.SELFTEST: {
        "grid": {"steps": 32},
    },
}


def default_config(command: Command) -> RunConfig:
    return RunConfig.model_validate({"command": command.value, **COMMAND_DEFAULTS.get(command, {})})


def load_run_config(command: Command, path: Path | None = None) -> RunConfig:
    """
    Reads a TOML run configuration on top of the command defaults.

    :param command: The command that will run.
    :type command: Command
    :param path: TOML file, the defaults alone when `None`.
    :type path: Path | None
    :return: The validated configuration.
    :rtype: RunConfig
    :raises pydantic.ValidationError: if some field is invalid
    :raises FileNotFoundError: if the file does not exist
    """
    data: dict[str, Any] = {"command": command.value}
    for section, values in COMMAND_DEFAULTS.get(command, {}).items():
        data[section] = dict(values)
    if path is not None:
        with path.open("rb") as file:
            document = tomllib.load(file)
        document.pop("command", None)
        for section, values in document.items():
            if isinstance(values, dict):
                data.setdefault(section, {}).update(values)
            else:
                data[section] = values
    return RunConfig.model_validate(data)
# endregion

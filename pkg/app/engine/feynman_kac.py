"""
Monte Carlo estimators for the Feynman-Kac formulas.

Fiber matrix elements average the integrand over Brownian motion; kernels
average it over Brownian bridges. Every path draws from its own Philox stream,
per-path values come back in index order and are reduced with the same
arithmetic for any number of workers, so a seed fixes every digit.
"""

from functools import partial
from typing import Any, Callable

import logfire
import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from app.engine.basic_processes import integrate, nelson_trace
from app.engine.drivers import TimeGrid, coarsen, reverse_path, sample_path
from app.engine.fock import TruncatedFock
from app.engine.hamiltonians import OracleSemigroup
from app.engine.modespace import CouplingFamily
from app.engine.potentials import Potential
from app.engine.scalar_kernel import matrix_element, sample_at
from app.engine.spin_sde import GeneratorProvider, integrate_sde, integrated_operator, lambda_bound, spin_fock_state
from app.engine.spin_series import nelson_resummed, series_matrix_element
from app.helpers.exceptions import InputError, IntegrabilityViolationError, PreconditionError
from app.helpers.parallel import map_paths
from app.helpers.rng import derived_seed
from app.helpers.statistics import SampleSummary, paired_z_scores, summarize, z_scores
from app.models.DriverKind import DriverKind
from app.models.EstimatorMode import EstimatorMode
from app.models.Flavor import Flavor
from app.models.Scheme import Scheme
from app.settings.config import settings

DIFFERENCE_FLOOR = 1e-12


# region results
class EstimatorResult(BaseModel):
    """
    Mean of i.i.d. per-path samples with per-component standard errors.

    `z` is filled when an oracle is attached and holds
    `max(|Re diff| / SE_re, |Im diff| / SE_im)` per entry.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    label: str
    estimate: np.ndarray
    se_real: np.ndarray
    se_imag: np.ndarray
    n_samples: int
    steps: int
    horizon: float
    seed: int
    mode: EstimatorMode | None = None
    oracle: np.ndarray | None = None
    z: np.ndarray | None = None

    @classmethod
    def from_samples(cls, samples: NDArray, **fields: Any) -> "EstimatorResult":
        summary = summarize(samples)
        return cls(
            estimate=np.asarray(summary.mean),
            se_real=np.asarray(summary.se_real),
            se_imag=np.asarray(summary.se_imag),
            n_samples=summary.count,
            **fields,
        )

    def with_oracle(self, oracle: NDArray, envelope: float = 0.0) -> "EstimatorResult":
        oracle = np.asarray(oracle, dtype=np.complex128)
        summary = SampleSummary(self.estimate, self.se_real, self.se_imag, self.n_samples)
        z = z_scores(summary, oracle, envelope)
        return self.model_copy(update={"oracle": oracle, "z": np.asarray(z)})

    @property
    def z_max(self) -> float | None:
        return None if self.z is None else float(np.max(self.z))

    @property
    def abs_error(self) -> float | None:
        return None if self.oracle is None else float(np.max(np.abs(self.estimate - self.oracle)))

    @property
    def se_max(self) -> float:
        return float(max(np.max(self.se_real), np.max(self.se_imag)))

    def passed(self, threshold: float) -> bool:
        return self.z is None or self.z_max <= threshold

    def to_json(self) -> dict[str, Any]:
        def pairs(array: NDArray | None) -> Any:
            if array is None:
                return None
            array = np.asarray(array, dtype=np.complex128)
            return {"re": array.real.tolist(), "im": array.imag.tolist()}

        return {
            "label": self.label,
            "estimate": pairs(self.estimate),
            "se_real": np.asarray(self.se_real).tolist(),
            "se_imag": np.asarray(self.se_imag).tolist(),
            "n_samples": self.n_samples,
            "steps": self.steps,
            "horizon": self.horizon,
            "seed": self.seed,
            "mode": None if self.mode is None else self.mode.value,
            "oracle": pairs(self.oracle),
            "z": None if self.z is None else np.asarray(self.z).tolist(),
            "z_max": self.z_max,
        }
# endregion


# region guards
def check_integrability(path_index: int, log_value: float, log_bound: float) -> None:
    """
    Aborts when a per-path integrand exceeds its a-priori norm bound.

    :raises IntegrabilityViolationError: if `log_value > log_bound` beyond the configured slack
    """
    slack = settings.NORM_GUARD_SLACK * max(1.0, abs(log_bound))
    if log_value > log_bound + slack:
        logfire.error(
            "integrability guard tripped on path {path_index}",
            path_index=path_index,
            log_value=log_value,
            log_bound=log_bound,
        )
        raise IntegrabilityViolationError(path_index, float(np.exp(log_value)), float(np.exp(log_bound)))


def _require_fiber(coupling: CouplingFamily) -> None:
    if not coupling.is_position_independent:
        raise PreconditionError("fiber estimates need position-independent couplings")


def _require_massless_momenta(coupling: CouplingFamily) -> None:
    if np.any(coupling.space.momentum):
        raise PreconditionError("kernels are only defined for m = 0")


def heat_kernel(t: float, x: NDArray, y: NDArray) -> float:
    """Gaussian density `p_t(x, y)`."""
    diff = np.atleast_1d(np.asarray(x, dtype=np.float64)) - np.atleast_1d(np.asarray(y, dtype=np.float64))
    nu = diff.shape[0]
    return float((2 * np.pi * t) ** (-nu / 2) * np.exp(-(diff @ diff) / (2 * t)))
# endregion


# region fiber
def is_nelson_coupling(coupling: CouplingFamily) -> bool:
    return (
        coupling.spin_dim == 1
        and coupling.field_count == 1
        and not np.any(coupling.G0)
        and bool(np.allclose(coupling.sigma, -1.0))
    )


def _coherent_block(fock: TruncatedFock, spin_dim: int, h: NDArray) -> NDArray[np.complex128]:
    """Columns `e_j (x) zeta_N(h)`, shape `(L * D, L)`."""
    zeta = fock.exp_vector(h).vector
    return np.stack([spin_fock_state(np.eye(spin_dim)[j], zeta) for j in range(spin_dim)], axis=1)


def _fiber_sample(
    path_index: int,
    coupling: CouplingFamily,
    xi: NDArray,
    grid: TimeGrid,
    g: NDArray,
    h: NDArray,
    mode: EstimatorMode,
    master_seed: int,
    provider: GeneratorProvider | None,
    scheme: Scheme,
    flavor: Flavor,
    max_order: int,
    antithetic: bool,
) -> NDArray[np.complex128]:
    path = sample_path(
        DriverKind.BROWNIAN_MOTION,
        np.zeros(coupling.space_dim),
        grid,
        master_seed,
        path_index - path_index % 2 if antithetic else path_index,
        antithetic=antithetic and path_index % 2 == 1,
    )
    space = coupling.space
    spin_dim = coupling.spin_dim
    if mode is EstimatorMode.SDE_ON_TRUNCATED:
        fock = provider.fock
        result = integrate_sde(path, provider, _coherent_block(fock, spin_dim, h), scheme)
        if scheme is Scheme.SPLITTING:
            check_integrability(path_index, result.log_growth, result.log_bound)
        left = _coherent_block(fock, spin_dim, g)
        return left.conj().T @ result.final

    if not np.any(coupling.F0):
        value = matrix_element(sample_at(integrate(path, coupling, xi, flavor=flavor)), g, h)
        bound = 0.5 * (space.norm(g) ** 2 + space.norm(h) ** 2)
        check_integrability(path_index, float(np.log(abs(value))) if value else -np.inf, bound)
        return value * np.eye(spin_dim, dtype=np.complex128)
    if is_nelson_coupling(coupling):
        value = nelson_resummed(nelson_trace(path, coupling, xi, flavor=flavor), g, h)
        return np.array([[value]], dtype=np.complex128)
    trace = integrate(path, coupling, xi, flavor=flavor)
    return series_matrix_element(g, h, trace, coupling, max_order=max_order).value


def fiber_samples(
    coupling: CouplingFamily,
    xi: NDArray,
    t: float,
    g: NDArray,
    h: NDArray,
    n_paths: int,
    steps: int,
    mode: EstimatorMode,
    master_seed: int,
    fock: TruncatedFock | None = None,
    workers: int = 1,
    scheme: Scheme = Scheme.SPLITTING,
    flavor: Flavor = Flavor.ITO_LEFT,
    max_order: int | None = None,
    antithetic: bool = False,
) -> NDArray[np.complex128]:
    """Per-path `L x L` matrix elements `<zeta(g) e_i, W_t zeta(h) e_j>`, shape `(n_paths, L, L)`."""
    _require_fiber(coupling)
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    uses_series = np.any(coupling.F0) and not is_nelson_coupling(coupling)
    if mode is EstimatorMode.CLOSED_FORM and uses_series and steps > settings.SERIES_MAX_STEPS:
        raise InputError(f"the series estimator is capped at {settings.SERIES_MAX_STEPS} steps")
    grid = TimeGrid.uniform(t, steps)
    provider = None
    if mode is EstimatorMode.SDE_ON_TRUNCATED:
        if fock is None:
            raise PreconditionError("the truncated estimator needs a Fock space")
        provider = GeneratorProvider(coupling, xi, fock)
    task = partial(
        _fiber_sample,
        coupling=coupling,
        xi=xi,
        grid=grid,
        g=np.asarray(g, dtype=np.complex128),
        h=np.asarray(h, dtype=np.complex128),
        mode=mode,
        master_seed=master_seed,
        provider=provider,
        scheme=scheme,
        flavor=flavor,
        max_order=settings.SERIES_MAX_ORDER if max_order is None else max_order,
        antithetic=antithetic,
    )
    return np.stack(map_paths(task, n_paths, workers))


def fiber_oracle(coupling: CouplingFamily, xi: NDArray, t: float, g: NDArray, h: NDArray, fock: TruncatedFock) -> NDArray[np.complex128]:
    """`<zeta_N(g) e_i, exp(-t H(xi)) zeta_N(h) e_j>` on the truncated space."""
    gens = GeneratorProvider(coupling, xi, fock)(np.zeros(coupling.space_dim))
    semigroup = OracleSemigroup(gens.H_full).at(t)
    left = _coherent_block(fock, coupling.spin_dim, g)
    right = _coherent_block(fock, coupling.spin_dim, h)
    return left.conj().T @ semigroup @ right


def estimate_fiber_matrix_element(
    coupling: CouplingFamily,
    xi: NDArray,
    t: float,
    g: NDArray,
    h: NDArray,
    n_paths: int,
    steps: int,
    mode: EstimatorMode,
    master_seed: int,
    fock: TruncatedFock | None = None,
    workers: int = 1,
    with_oracle: bool = True,
    scheme: Scheme = Scheme.SPLITTING,
    flavor: Flavor = Flavor.ITO_LEFT,
    max_order: int | None = None,
    antithetic: bool = False,
) -> EstimatorResult:
    """
    Monte Carlo estimate of `<zeta(g), exp(-t H(xi)) zeta(h)>` as an `L x L` block.

    :param coupling: Position-independent couplings.
    :type coupling: CouplingFamily
    :param xi: Total momentum.
    :type xi: NDArray
    :param t: Time horizon.
    :type t: float
    :param g: Left exponential-vector argument.
    :type g: NDArray
    :param h: Right exponential-vector argument.
    :type h: NDArray
    :param n_paths: Number of Brownian paths.
    :type n_paths: int
    :param steps: Number of uniform time steps.
    :type steps: int
    :param mode: Closed-form integrand or SDE on the truncated space.
    :type mode: EstimatorMode
    :param master_seed: Run seed.
    :type master_seed: int
    :param fock: Truncated space of the SDE and of the oracle.
    :type fock: TruncatedFock | None
    :param workers: Worker processes.
    :type workers: int
    :param with_oracle: Attach the matrix-exponential oracle (needs `fock`).
    :type with_oracle: bool
    :return: Estimate, standard errors and z-scores.
    :rtype: EstimatorResult
    :raises PreconditionError: if the couplings depend on the position
    """
    with logfire.span("fiber estimate {mode}", mode=mode.value, n_paths=n_paths, steps=steps):
        samples = fiber_samples(
            coupling, xi, t, g, h, n_paths, steps, mode, master_seed, fock,
            workers, scheme, flavor, max_order, antithetic,
        )
        if antithetic:
            samples = 0.5 * (samples[0:-1:2] + samples[1::2])
        result = EstimatorResult.from_samples(
            samples,
            label="fiber",
            steps=steps,
            horizon=t,
            seed=master_seed,
            mode=mode,
        )
        if with_oracle and fock is not None:
            result = result.with_oracle(fiber_oracle(coupling, xi, t, g, h, fock))
        return result


class BiasRefinement(BaseModel):
    """
    Oracle errors on the nested grids `K, 2K, ..., 2^(L-1) K`.

    All levels are driven by the same fine paths, so the differences between
    neighbouring levels carry little Monte Carlo noise. `ratio` is
    `|d_0| / |d_1|` for the differences `d_l = E[W_{K_l} - W_{K_{l+1}}]` at the
    entry where `|d_0|` is largest; a weak order one scheme gives 2.
    """
    model_config = ConfigDict(frozen=True)

    horizon: float
    steps: list[int]
    abs_error: list[float]
    se: list[float]
    difference: list[float]
    difference_se: list[float]
    ratio: float | None
    ratio_se: float | None

    def resolved(self, resolution: float) -> bool:
        """Whether every difference exceeds `resolution` standard errors and the rounding floor."""
        return all(d > max(resolution * se, DIFFERENCE_FLOOR) for d, se in zip(self.difference, self.difference_se))

    def table(self) -> pd.DataFrame:
        padding = [np.nan] * (len(self.steps) - len(self.difference))
        return pd.DataFrame({
            "steps": self.steps,
            "dt": [self.horizon / k for k in self.steps],
            "abs_error": self.abs_error,
            "se": self.se,
            "difference": self.difference + padding,
            "difference_se": self.difference_se + padding,
        })


def _refinement_sample(
    path_index: int,
    coupling: CouplingFamily,
    grid: TimeGrid,
    left: NDArray,
    right: NDArray,
    master_seed: int,
    provider: GeneratorProvider,
    scheme: Scheme,
    levels: int,
) -> NDArray[np.complex128]:
    path = sample_path(DriverKind.BROWNIAN_MOTION, np.zeros(coupling.space_dim), grid, master_seed, path_index)
    blocks = []
    for level in range(levels):
        result = integrate_sde(coarsen(path, 2 ** (levels - 1 - level)), provider, right, scheme)
        if scheme is Scheme.SPLITTING:
            check_integrability(path_index, result.log_growth, result.log_bound)
        blocks.append(left.conj().T @ result.final)
    return np.stack(blocks)


def bias_refinement(
    coupling: CouplingFamily,
    xi: NDArray,
    t: float,
    g: NDArray,
    h: NDArray,
    n_paths: int,
    steps: int,
    fock: TruncatedFock,
    master_seed: int,
    workers: int = 1,
    scheme: Scheme = Scheme.SPLITTING,
    levels: int = 3,
) -> BiasRefinement:
    """
    Weak-order study of the truncated SDE estimator with common random numbers.

    Every path is sampled on `2^(levels-1) K` steps and integrated on each
    coarser grid by summing its increments.

    :param steps: Coarsest number of steps `K`.
    :type steps: int
    :param levels: Number of nested grids, at least 3.
    :type levels: int
    :return: Errors against the truncated oracle and the step-halving ratio.
    :rtype: BiasRefinement
    :raises InputError: if fewer than three levels are asked for
    """
    _require_fiber(coupling)
    if levels < 3:
        raise InputError("a bias ratio needs at least three nested grids")
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    task = partial(
        _refinement_sample,
        coupling=coupling,
        grid=TimeGrid.uniform(t, steps * 2 ** (levels - 1)),
        left=_coherent_block(fock, coupling.spin_dim, np.asarray(g, dtype=np.complex128)),
        right=_coherent_block(fock, coupling.spin_dim, np.asarray(h, dtype=np.complex128)),
        master_seed=master_seed,
        provider=GeneratorProvider(coupling, xi, fock),
        scheme=scheme,
        levels=levels,
    )
    with logfire.span("bias refinement", n_paths=n_paths, steps=steps, levels=levels):
        samples = np.stack(map_paths(task, n_paths, workers))
    oracle = fiber_oracle(coupling, xi, t, g, h, fock)

    levels_summary = [summarize(samples[:, level]) for level in range(levels)]
    differences = [summarize(samples[:, level] - samples[:, level + 1]) for level in range(levels - 1)]
    entry = np.unravel_index(int(np.argmax(np.abs(differences[0].mean))), differences[0].mean.shape)
    size = [float(abs(d.mean[entry])) for d in differences]
    size_se = [float(max(d.se_real[entry], d.se_imag[entry])) for d in differences]

    ratio = ratio_se = None
    if size[1] > 0:
        ratio = size[0] / size[1]
        ratio_se = ratio * float(np.hypot(size_se[0] / max(size[0], 1e-300), size_se[1] / size[1]))
    return BiasRefinement(
        horizon=t,
        steps=[steps * 2 ** level for level in range(levels)],
        abs_error=[float(np.max(np.abs(s.mean - oracle))) for s in levels_summary],
        se=[float(max(np.max(s.se_real), np.max(s.se_imag))) for s in levels_summary],
        difference=size,
        difference_se=size_se,
        ratio=ratio,
        ratio_se=ratio_se,
    )


def hermiticity_check(
    coupling: CouplingFamily,
    xi: NDArray,
    t: float,
    g: NDArray,
    h: NDArray,
    n_paths: int,
    steps: int,
    mode: EstimatorMode,
    master_seed: int,
    fock: TruncatedFock | None = None,
    workers: int = 1,
) -> float:
    """Largest paired z-score of `estimate(g, h) - estimate(h, g)^dagger` on shared paths."""
    forward = fiber_samples(coupling, xi, t, g, h, n_paths, steps, mode, master_seed, fock, workers)
    backward = fiber_samples(coupling, xi, t, h, g, n_paths, steps, mode, master_seed, fock, workers)
    return float(np.max(paired_z_scores(forward, np.conj(np.swapaxes(backward, 1, 2)))))


def semigroup_property_check(
    coupling: CouplingFamily,
    xi: NDArray,
    s: float,
    t: float,
    g: NDArray,
    h: NDArray,
    n_paths: int,
    steps: int,
    master_seed: int,
    fock: TruncatedFock,
    workers: int = 1,
) -> EstimatorResult:
    """
    Estimate at horizon `s + t` on the truncated space, compared with the
    oracle product `exp(-s H) exp(-t H)`.
    """
    gens = GeneratorProvider(coupling, xi, fock)(np.zeros(coupling.space_dim))
    semigroup = OracleSemigroup(gens.H_full)
    left = _coherent_block(fock, coupling.spin_dim, g)
    right = _coherent_block(fock, coupling.spin_dim, h)
    composed = left.conj().T @ semigroup.at(s) @ semigroup.at(t) @ right
    if s + t == 0:
        estimate = left.conj().T @ right
        return EstimatorResult(
            label="semigroup",
            estimate=estimate,
            se_real=np.zeros(estimate.shape),
            se_imag=np.zeros(estimate.shape),
            n_samples=0,
            steps=0,
            horizon=0.0,
            seed=master_seed,
            mode=EstimatorMode.SDE_ON_TRUNCATED,
        ).with_oracle(composed)
    result = estimate_fiber_matrix_element(
        coupling, xi, s + t, g, h, n_paths, steps, EstimatorMode.SDE_ON_TRUNCATED,
        master_seed, fock, workers, with_oracle=False,
    )
    return result.model_copy(update={"label": "semigroup"}).with_oracle(composed)
# endregion


# region kernels
def _kernel_sample(
    path_index: int,
    provider: GeneratorProvider,
    grid: TimeGrid,
    start: NDArray,
    end: NDArray,
    master_seed: int,
    scheme: Scheme,
    paired: bool,
) -> NDArray[np.complex128]:
    path = sample_path(DriverKind.BRIDGE, start, grid, master_seed, path_index, y=end)
    forward = integrated_operator(path, provider, scheme)
    if not paired:
        return forward
    return np.stack([forward, integrated_operator(reverse_path(path), provider, scheme)])


def kernel_samples(
    coupling: CouplingFamily,
    t: float,
    x: NDArray,
    y: NDArray,
    n_paths: int,
    steps: int,
    fock: TruncatedFock,
    master_seed: int,
    potential: Potential | None = None,
    workers: int = 1,
    scheme: Scheme = Scheme.SPLITTING,
    paired: bool = False,
) -> NDArray[np.complex128]:
    """Per-path integrands along bridges from `y` to `x` (and their reversals when `paired`)."""
    _require_massless_momenta(coupling)
    provider = GeneratorProvider(coupling, np.zeros(coupling.space_dim), fock, potential)
    task = partial(
        _kernel_sample,
        provider=provider,
        grid=TimeGrid.uniform(t, steps),
        start=np.atleast_1d(np.asarray(y, dtype=np.float64)),
        end=np.atleast_1d(np.asarray(x, dtype=np.float64)),
        master_seed=master_seed,
        scheme=scheme,
        paired=paired,
    )
    return np.stack(map_paths(task, n_paths, workers))


def estimate_kernel(
    coupling: CouplingFamily,
    t: float,
    x: NDArray,
    y: NDArray,
    n_paths: int,
    steps: int,
    fock: TruncatedFock,
    master_seed: int,
    potential: Potential | None = None,
    workers: int = 1,
    scheme: Scheme = Scheme.SPLITTING,
) -> EstimatorResult:
    """
    `T_t(x, y) = p_t(x, y) E[W_t[bridge from y to x]]` as an operator estimate.

    :raises PreconditionError: if some mode has nonzero momentum
    """
    with logfire.span("kernel estimate", n_paths=n_paths, steps=steps):
        samples = kernel_samples(coupling, t, x, y, n_paths, steps, fock, master_seed, potential, workers, scheme)
        return EstimatorResult.from_samples(
            heat_kernel(t, x, y) * samples,
            label="kernel",
            steps=steps,
            horizon=t,
            seed=master_seed,
        )


class SymmetryReport(BaseModel):
    """Paired comparison of `T_t(x, y)` with `T_t(y, x)^dagger` on reversed bridges."""
    model_config = ConfigDict(frozen=True)

    max_residual: float
    mean_residual: float
    z_max: float
    n_paths: int
    steps: int


def kernel_symmetry_check(
    coupling: CouplingFamily,
    t: float,
    x: NDArray,
    y: NDArray,
    n_paths: int,
    steps: int,
    fock: TruncatedFock,
    master_seed: int,
    potential: Potential | None = None,
    workers: int = 1,
    scheme: Scheme = Scheme.SPLITTING,
) -> SymmetryReport:
    """Each bridge from `y` to `x` is paired with its reversal, a bridge from `x` to `y`."""
    samples = kernel_samples(coupling, t, x, y, n_paths, steps, fock, master_seed, potential, workers, scheme, paired=True)
    forward, backward = samples[:, 0], samples[:, 1]
    difference = backward - np.conj(np.swapaxes(forward, 1, 2))
    residuals = np.linalg.norm(difference, ord=2, axis=(1, 2))
    z = paired_z_scores(heat_kernel(t, x, y) * backward, heat_kernel(t, x, y) * np.conj(np.swapaxes(forward, 1, 2)))
    return SymmetryReport(
        max_residual=float(np.max(residuals)),
        mean_residual=float(np.mean(residuals)),
        z_max=float(np.max(z)),
        n_paths=n_paths,
        steps=steps,
    )


class ConsistencyReport(BaseModel):
    """Kernel quadrature against the direct Brownian estimate of the total semigroup."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    quadrature: np.ndarray
    direct: np.ndarray
    z_max: float
    nodes: int


def gaussian_profile(center: float, width: float) -> Callable[[float], float]:
    return lambda y: float(np.exp(-((y - center) ** 2) / (2 * width ** 2)))


def _direct_sample(
    path_index: int,
    provider: GeneratorProvider,
    grid: TimeGrid,
    x: NDArray,
    eta: NDArray,
    center: float,
    width: float,
    master_seed: int,
    scheme: Scheme,
) -> NDArray[np.complex128]:
    path = sample_path(DriverKind.BROWNIAN_MOTION, x, grid, master_seed, path_index)
    operator = integrated_operator(path, provider, scheme)
    return gaussian_profile(center, width)(path.positions[-1, 0]) * (operator.conj().T @ eta)


def total_semigroup_consistency(
    coupling: CouplingFamily,
    t: float,
    x: float,
    eta: NDArray,
    center: float,
    width: float,
    n_paths: int,
    steps: int,
    fock: TruncatedFock,
    master_seed: int,
    potential: Potential | None = None,
    workers: int = 1,
    nodes: int = 9,
    scheme: Scheme = Scheme.SPLITTING,
) -> ConsistencyReport:
    """
    Compares `int T_t(x, y) Psi(y) dy` with `E[W_t[B^x]^dagger Psi(B^x_t)]` for
    `Psi(y) = rho(y) eta`, `rho` a Gaussian profile, in one dimension.

    The `dy` integral uses Gauss-Hermite nodes `y = x + sqrt(2t) z_i` with
    weights `w_i / sqrt(pi)`, which absorb the heat kernel.

    :raises PreconditionError: unless `nu = 1` and `m = 0`
    """
    _require_massless_momenta(coupling)
    if coupling.space_dim != 1:
        raise PreconditionError("the quadrature check is one-dimensional")
    eta = np.asarray(eta, dtype=np.complex128)
    profile = gaussian_profile(center, width)
    roots, weights = np.polynomial.hermite.hermgauss(nodes)

    means, variances_re, variances_im = [], [], []
    for i, (root, weight) in enumerate(zip(roots, weights)):
        y = np.array([x + np.sqrt(2 * t) * root])
        seed = derived_seed(master_seed, f"quadrature-node-{i}")
        samples = kernel_samples(coupling, t, np.array([x]), y, n_paths, steps, fock, seed, potential, workers, scheme)
        factor = weight / np.sqrt(np.pi) * profile(float(y[0]))
        summary = summarize(samples @ eta)
        means.append(factor * summary.mean)
        variances_re.append((factor * summary.se_real) ** 2)
        variances_im.append((factor * summary.se_imag) ** 2)
    quadrature = np.sum(means, axis=0)

    provider = GeneratorProvider(coupling, np.zeros(1), fock, potential)
    task = partial(
        _direct_sample,
        provider=provider,
        grid=TimeGrid.uniform(t, steps),
        x=np.array([x], dtype=np.float64),
        eta=eta,
        center=center,
        width=width,
        master_seed=master_seed,
        scheme=scheme,
    )
    direct = summarize(np.stack(map_paths(task, n_paths, workers)))
    diff = quadrature - direct.mean
    se_re = np.sqrt(np.sum(variances_re, axis=0) + direct.se_real ** 2)
    se_im = np.sqrt(np.sum(variances_im, axis=0) + direct.se_imag ** 2)
    z = np.maximum(np.abs(diff.real) / np.maximum(se_re, 1e-12), np.abs(diff.imag) / np.maximum(se_im, 1e-12))
    return ConsistencyReport(quadrature=quadrature, direct=direct.mean, z_max=float(np.max(z)), nodes=nodes)
# endregion


# region sweeps
def convergence_sweep(
    coupling: CouplingFamily,
    xi: NDArray,
    t: float,
    g: NDArray,
    h: NDArray,
    steps_list: list[int],
    cutoffs: list[int],
    path_counts: list[int],
    mode: EstimatorMode,
    master_seed: int,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Bias and standard error over a grid of `(K, N, n_paths)`.

    Columns: `steps, dt, max_bosons, n_paths, mode, estimate_re, estimate_im,
    oracle_re, oracle_im, abs_error, se, z`. Entry `(0, 0)` of the block is reported.
    """
    rows = []
    for cutoff in cutoffs:
        fock = TruncatedFock(coupling.space, cutoff, coupling.spin_dim)
        for steps in steps_list:
            for n_paths in path_counts:
                result = estimate_fiber_matrix_element(
                    coupling, xi, t, g, h, n_paths, steps, mode, master_seed, fock, workers,
                )
                estimate = complex(np.asarray(result.estimate)[0, 0])
                oracle = complex(np.asarray(result.oracle)[0, 0])
                rows.append({
                    "steps": steps,
                    "dt": t / steps,
                    "max_bosons": cutoff,
                    "n_paths": n_paths,
                    "mode": mode.value,
                    "estimate_re": estimate.real,
                    "estimate_im": estimate.imag,
                    "oracle_re": oracle.real,
                    "oracle_im": oracle.imag,
                    "abs_error": abs(estimate - oracle),
                    "se": float(max(np.asarray(result.se_real)[0, 0], np.asarray(result.se_imag)[0, 0])),
                    "z": float(np.asarray(result.z)[0, 0]),
                })
                logfire.debug("sweep point {steps} {cutoff} {n_paths}", steps=steps, cutoff=cutoff, n_paths=n_paths)
    return pd.DataFrame(rows)


def spin_norm_growth(
    coupling: CouplingFamily,
    xi: NDArray,
    t: float,
    h: NDArray,
    n_paths: int,
    steps: int,
    fock: TruncatedFock,
    master_seed: int,
    potential: Potential | None = None,
    workers: int = 1,
) -> pd.DataFrame:
    """Per-path `ln(|Y_t| / |eta|)` and its bound `int (Lambda^2 - V)` for the splitting scheme."""
    provider = GeneratorProvider(coupling, xi, fock, potential)
    task = partial(_growth_sample, provider=provider, grid=TimeGrid.uniform(t, steps), h=h, master_seed=master_seed)
    rows = map_paths(task, n_paths, workers)
    frame = pd.DataFrame(rows, columns=["path_id", "log_growth", "log_bound"])
    frame["dt"] = t / steps
    frame["horizon"] = t
    return frame


def _growth_sample(
    path_index: int,
    provider: GeneratorProvider,
    grid: TimeGrid,
    h: NDArray,
    master_seed: int,
) -> tuple[int, float, float]:
    path = sample_path(DriverKind.BROWNIAN_MOTION, np.zeros(provider.coupling.space_dim), grid, master_seed, path_index)
    eta = _coherent_block(provider.fock, provider.coupling.spin_dim, h)[:, 0]
    result = integrate_sde(path, provider, eta, Scheme.SPLITTING)
    return path_index, result.log_growth, result.log_bound


def norm_bound_fit(growth: pd.DataFrame) -> float:
    """Smallest `c >= 0` with `log_growth <= log_bound + c dt t` on every path."""
    excess = (growth["log_growth"] - growth["log_bound"]) / (growth["dt"] * growth["horizon"])
    return float(max(0.0, excess.max()))


def norm_bound_violations(growth: pd.DataFrame, c: float) -> int:
    allowance = growth["log_bound"] + c * growth["dt"] * growth["horizon"] + settings.NORM_GUARD_SLACK
    return int((growth["log_growth"] > allowance).sum())


def lambda_profile(coupling: CouplingFamily, positions: NDArray) -> NDArray[np.float64]:
    """`Lambda(x)` at each row of `positions`."""
    return np.array([lambda_bound(coupling, x) for x in np.atleast_2d(positions)])
# endregion

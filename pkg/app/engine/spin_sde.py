"""
Matrix-valued Feynman-Kac integrand on `C^L (x)` a truncated Fock space.

The integrand solves the Ito equation

    dY = -H(xi, X) Y ds - i v(xi, X) Y . dX

and is integrated either by the splitting scheme

    Y_{j+1} = exp(-i sum_l v_l dX_l) exp(-Delta R) Y_j,

whose first factor is unitary, or by Euler-Maruyama as a reference. The
reduced generator `R = H - (1/2) sum_l v_l^2` is what remains once the Ito
mean of the unitary factor has produced the `v^2 / 2` part of `H`.
"""

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict
from scipy.linalg import eigh, expm

from app.engine.drivers import DriverPath, reverse_path, truncate
from app.engine.fock import FockOperator, TruncatedFock, lift
from app.engine.modespace import CouplingFamily
from app.engine.potentials import Potential
from app.helpers.exceptions import DimensionMismatchError, InputError, NumericalOverflowError
from app.models.Scheme import Scheme


# region generators
class GeneratorSet(BaseModel):
    """
    Generators at one position.

    `v` has shape `(nu, D, D)` with `D` the Fock dimension; `H_full` and `R`
    act on the spin-Fock space of dimension `L * D`, spin index outermost.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    H_sc: np.ndarray
    H_full: np.ndarray
    R: np.ndarray
    potential_value: float
    spin_dim: int

    @property
    def dim(self) -> int:
        return int(self.H_full.shape[0])

    @property
    def field_part(self) -> np.ndarray:
        """`R` without the potential."""
        return self.R - self.potential_value * np.eye(self.dim)

    def v_squared(self) -> np.ndarray:
        return sum(v @ v for v in self.v)

    def hermiticity_defect(self, fock: TruncatedFock, levels_removed: int = 2) -> float:
        """Largest entry of `H - H^dagger` compressed below the top sectors."""
        mask = np.tile(fock.sector_mask(levels_removed), self.spin_dim)
        block = self.H_full[np.ix_(mask, mask)]
        return float(np.max(np.abs(block - block.conj().T))) if block.size else 0.0


def build_generators(
    coupling: CouplingFamily,
    xi: NDArray,
    x: NDArray,
    fock: TruncatedFock,
    potential: Potential | None = None,
) -> GeneratorSet:
    """
    Assembles `v_l = xi_l - dGamma(m_l) - phi(G_l)`,
    `H_sc = (1/2) sum v_l^2 - (i/2) phi(q) + dGamma(omega) + V`,
    `H = 1 (x) H_sc - sum_j sigma_j (x) phi(F_j)` and `R`.

    :param coupling: Couplings of the model.
    :type coupling: CouplingFamily
    :param xi: Total momentum.
    :type xi: NDArray
    :param x: Position at which the couplings are evaluated.
    :type x: NDArray
    :param fock: Truncated Fock space of the field.
    :type fock: TruncatedFock
    :param potential: External potential, none when omitted.
    :type potential: Potential | None
    :return: The generators.
    :rtype: GeneratorSet
    :raises DimensionMismatchError: if `xi` or `x` have the wrong length
    """
    nu = coupling.space_dim
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if xi.shape != (nu,):
        raise DimensionMismatchError(nu, xi.shape[0], "xi")
    if x.shape != (nu,):
        raise DimensionMismatchError(nu, x.shape[0], "position")
    spin_dim = coupling.spin_dim
    identity = np.eye(fock.dim, dtype=np.complex128)
    G = coupling.G(x)
    F = coupling.F(x)
    momentum = coupling.space.momentum

    v = np.stack([
        xi[l] * identity - fock.d_gamma(momentum[:, l]) - fock.field(G[l])
        for l in range(nu)
    ])
    potential_value = 0.0 if potential is None else float(potential(x))
    v_squared = sum(block @ block for block in v)
    local = -0.5j * fock.field(coupling.q(x)) + fock.d_gamma(coupling.space.omega) + potential_value * identity
    H_sc = 0.5 * v_squared + local
    matter = sum(lift(sigma, fock.field(f)) for sigma, f in zip(coupling.sigma, F))
    spin_identity = np.eye(spin_dim)
    return GeneratorSet(
        x=x,
        xi=xi,
        v=v,
        H_sc=H_sc,
        H_full=lift(spin_identity, H_sc) - matter,
        R=lift(spin_identity, local) - matter,
        potential_value=potential_value,
        spin_dim=spin_dim,
    )


class GeneratorProvider:
    """
    Position-to-generators map of one model.

    Generators of position-independent couplings are built once; only the
    potential is re-evaluated.
    """

    def __init__(
        self,
        coupling: CouplingFamily,
        xi: NDArray,
        fock: TruncatedFock,
        potential: Potential | None = None,
    ):
        self.coupling = coupling
        self.xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        self.fock = fock
        self.potential = potential
        self.position_independent = coupling.is_position_independent
        self._fixed: GeneratorSet | None = None
        self._steps: "_StepCache | None" = None

    @property
    def dim(self) -> int:
        return self.coupling.spin_dim * self.fock.dim

    def potential_at(self, x: NDArray) -> float:
        return 0.0 if self.potential is None else float(self.potential(x))

    def __call__(self, x: NDArray) -> GeneratorSet:
        if not self.position_independent:
            return build_generators(self.coupling, self.xi, x, self.fock, self.potential)
        if self._fixed is None:
            origin = np.zeros(self.coupling.space_dim)
            self._fixed = build_generators(self.coupling, self.xi, origin, self.fock)
        value = self.potential_at(x)
        if value == 0.0:
            return self._fixed
        return self._fixed.model_copy(update={
            "x": np.atleast_1d(np.asarray(x, dtype=np.float64)),
            "H_sc": self._fixed.H_sc + value * np.eye(self.fock.dim),
            "H_full": self._fixed.H_full + value * np.eye(self.dim),
            "R": self._fixed.R + value * np.eye(self.dim),
            "potential_value": value,
        })

    def step_cache(self) -> "_StepCache":
        """Exponential cache shared by every path when the generators do not move."""
        if not self.position_independent:
            return _StepCache(self)
        if self._steps is None:
            self._steps = _StepCache(self)
        return self._steps
# endregion


# region integration
class SpinKernelResult(BaseModel):
    """
    Integrand applied to the initial data at the final node.

    `log_bound` is the left-point sum of `Delta (Lambda(X)^2 - V(X))`.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    final: np.ndarray
    initial_norm: float
    log_bound: float
    scheme: Scheme

    @property
    def log_growth(self) -> float:
        """`ln(|Y_t| / |eta|)` in the 2-norm (operator norm for matrix data)."""
        final_norm = np.linalg.norm(self.final, 2) if self.final.ndim == 2 else np.linalg.norm(self.final)
        if self.initial_norm == 0 or final_norm == 0:
            return float("-inf")
        return float(np.log(final_norm / self.initial_norm))


def lambda_bound(coupling: CouplingFamily, x: NDArray) -> float:
    """Operator norm of the `L x L` matrix of `|omega^{-1/2} (sigma . F_x)_{ij}|`."""
    blocks = coupling.spin_coupling(x)
    space = coupling.space
    entries = np.sqrt(np.sum(space.mu * np.abs(blocks) ** 2 / space.omega, axis=-1))
    return float(np.linalg.norm(entries, 2))


class _StepCache:
    """Exponentials reused along a path when the generators do not move."""

    def __init__(self, provider: GeneratorProvider):
        self.enabled = provider.position_independent
        self._drift: dict[float, NDArray] = {}
        self._spectrum: tuple[NDArray, NDArray] | None = None

    def drift(self, gens: GeneratorSet, delta: float) -> NDArray:
        if not self.enabled:
            return expm(-delta * gens.R)
        key = round(delta, 15)
        if key not in self._drift:
            self._drift[key] = expm(-delta * gens.field_part)
        return np.exp(-delta * gens.potential_value) * self._drift[key]

    def rotation(self, gens: GeneratorSet, increment: NDArray) -> NDArray:
        spin_identity = np.eye(gens.spin_dim)
        if self.enabled and gens.v.shape[0] == 1:
            if self._spectrum is None:
                self._spectrum = eigh(gens.v[0])
            values, vectors = self._spectrum
            unitary = (vectors * np.exp(-1j * values * increment[0])) @ vectors.conj().T
            return lift(spin_identity, unitary)
        generator = np.einsum("lij,l->ij", gens.v, increment)
        return lift(spin_identity, expm(-1j * generator))


def integrate_sde(
    path: DriverPath,
    provider: GeneratorProvider,
    eta0: NDArray,
    scheme: Scheme = Scheme.SPLITTING,
) -> SpinKernelResult:
    """
    Integrates the spin-Fock integrand along `path`, applied to `eta0`.

    :param path: Driver path.
    :type path: DriverPath
    :param provider: Generators as a function of position.
    :type provider: GeneratorProvider
    :param eta0: Initial vector of length `L * D`, or a matrix whose columns are such vectors.
    :type eta0: NDArray
    :param scheme: Time-stepping scheme.
    :type scheme: Scheme
    :return: The integrated data with its norm bound.
    :rtype: SpinKernelResult
    :raises NumericalOverflowError: if the state stops being finite
    """
    y = np.array(eta0, dtype=np.complex128)
    if y.shape[0] != provider.dim:
        raise DimensionMismatchError(provider.dim, y.shape[0], "spin-Fock data")
    initial_norm = float(np.linalg.norm(y, 2) if y.ndim == 2 else np.linalg.norm(y))
    cache = provider.step_cache()
    spin_identity = np.eye(provider.coupling.spin_dim)
    log_bound = 0.0

    for j, (delta, increment) in enumerate(zip(path.grid.steps, path.displacements)):
        x = path.positions[j]
        gens = provider(x)
        log_bound += delta * (lambda_bound(provider.coupling, x) ** 2 - gens.potential_value)
        match scheme:
            case Scheme.SPLITTING:
                y = cache.rotation(gens, increment) @ (cache.drift(gens, delta) @ y)
            case Scheme.EULER_MARUYAMA:
                noise = lift(spin_identity, np.einsum("lij,l->ij", gens.v, increment))
                y = y - delta * (gens.H_full @ y) - 1j * (noise @ y)
        if not np.all(np.isfinite(y)):
            raise NumericalOverflowError(j + 1, "spin kernel")
    return SpinKernelResult(final=y, initial_norm=initial_norm, log_bound=log_bound, scheme=scheme)


def integrated_operator(path: DriverPath, provider: GeneratorProvider, scheme: Scheme = Scheme.SPLITTING) -> FockOperator:
    """The integrand as a matrix, obtained by integrating the identity."""
    return integrate_sde(path, provider, np.eye(provider.dim, dtype=np.complex128), scheme).final


def pathwise_adjoint_check(
    path: DriverPath,
    provider: GeneratorProvider,
    t_idx: int | None = None,
    scheme: Scheme = Scheme.SPLITTING,
) -> float:
    """
    Spectral norm of `W_t[X'] - W_t[X]^dagger` with `X'` the reversed path.

    :raises InputError: if the path was already reversed
    """
    if t_idx is not None:
        path = truncate(path, t_idx)
    forward = integrated_operator(path, provider, scheme)
    backward = integrated_operator(reverse_path(path), provider, scheme)
    return float(np.linalg.norm(backward - forward.conj().T, 2))


def spin_fock_state(spin: NDArray, fock_vector: NDArray) -> NDArray[np.complex128]:
    """`spin (x) fock_vector` in the ordering used by `lift`."""
    return np.kron(np.asarray(spin, dtype=np.complex128), np.asarray(fock_vector, dtype=np.complex128))


def expected_splitting_step(gens: GeneratorSet, delta: float) -> FockOperator:
    """
    Gaussian mean of one splitting step for `nu = 1`:
    `E[exp(-i v dX)] exp(-Delta R) = exp(-Delta v^2 / 2) exp(-Delta R)`.

    :raises InputError: if the space has more than one dimension
    """
    if gens.v.shape[0] != 1:
        raise InputError("the closed-form step mean needs nu = 1")
    values, vectors = eigh(gens.v[0])
    damping = (vectors * np.exp(-0.5 * delta * values ** 2)) @ vectors.conj().T
    return lift(np.eye(gens.spin_dim), damping) @ expm(-delta * gens.R)
# endregion

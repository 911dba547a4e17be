"""
Discretized one-boson space and position-dependent couplings.

A `ModeSpace` is a finite set of boson modes carrying measure weights `mu`,
dispersion `omega`, momenta `momentum` and a conjugation `C` given by a mode
involution plus a unimodular phase, `(Cf)_k = phase_k * conj(f_{pi(k)})`.
One-boson vectors are plain complex arrays whose last axis runs over modes.

A `CouplingFamily` holds the couplings `G` (one vector per space direction)
and `F` (one vector per spin matrix) as plane-wave families
`G_x = exp(-i m.x) G_0`, which covers every preset shipped here.

This module contains the following things:

- ModeSpace / CouplingFamily: immutable, validated at construction.
- Presets: NRQED (Pauli-Fierz), Nelson, a two-level spin toy and the free field.
- load_mode_table: reads mode data (and optional couplings) from CSV.
"""

from pathlib import Path
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.helpers.exceptions import ConfigurationError, DimensionMismatchError

OneBosonVector = NDArray[np.complex128]

PAULI: NDArray[np.complex128] = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)

_EXACT = 1e-12


# region ModeSpace
class ModeSpace(BaseModel):
    """Finite weighted mode set with dispersion, momenta and a conjugation."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mu: np.ndarray
    omega: np.ndarray
    momentum: np.ndarray
    involution: np.ndarray
    phase: np.ndarray

    @field_validator("mu", "omega", mode="before")
    @classmethod
    def _as_real_vector(cls, value) -> NDArray[np.float64]:
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @field_validator("momentum", mode="before")
    @classmethod
    def _as_momentum(cls, value) -> NDArray[np.float64]:
        value = np.asarray(value, dtype=np.float64)
        return value.reshape(-1, 1) if value.ndim == 1 else value

    @field_validator("involution", mode="before")
    @classmethod
    def _as_index(cls, value) -> NDArray[np.int64]:
        return np.asarray(value, dtype=np.int64).reshape(-1)

    @field_validator("phase", mode="before")
    @classmethod
    def _as_phase(cls, value) -> NDArray[np.complex128]:
        return np.asarray(value, dtype=np.complex128).reshape(-1)

    @model_validator(mode="after")
    def _check_structure(self) -> Self:
        size = self.mu.shape[0]
        for name in ("omega", "involution", "phase"):
            if getattr(self, name).shape[0] != size:
                raise ValueError(f"{name} must have one entry per mode")
        if self.momentum.shape[0] != size:
            raise ValueError("momentum must have one row per mode")
        if size == 0:
            raise ValueError("a mode space needs at least one mode")
        if np.any(self.mu <= 0):
            raise ValueError("measure weights must be strictly positive")
        if np.any(self.omega <= 0):
            raise ValueError("omega must be strictly positive on every mode")
        pi = self.involution
        if np.any(pi < 0) or np.any(pi >= size) or not np.array_equal(pi[pi], np.arange(size)):
            raise ValueError("the mode map of the conjugation must be an involution")
        if not np.allclose(self.omega[pi], self.omega, rtol=0, atol=_EXACT):
            raise ValueError("omega must be invariant under the involution")
        if not np.allclose(self.momentum[pi], -self.momentum, rtol=0, atol=_EXACT):
            raise ValueError("the involution must flip momenta")
        if not np.allclose(self.mu[pi], self.mu, rtol=0, atol=_EXACT):
            raise ValueError("measure weights must be invariant under the involution")
        if not np.allclose(np.abs(self.phase), 1.0, rtol=0, atol=_EXACT):
            raise ValueError("conjugation phases must be unimodular")
        if not np.allclose(self.phase[pi], self.phase, rtol=0, atol=_EXACT):
            raise ValueError("conjugation phases must be invariant under the involution")
        return self

    @classmethod
    def from_modes(
        cls,
        mu,
        omega,
        momentum,
        phase=None,
    ) -> "ModeSpace":
        """Builds a mode space, deriving the involution by matching `(-m, omega, mu)`."""
        mu = np.asarray(mu, dtype=np.float64).reshape(-1)
        omega = np.asarray(omega, dtype=np.float64).reshape(-1)
        momentum = np.asarray(momentum, dtype=np.float64)
        if momentum.ndim == 1:
            momentum = momentum.reshape(-1, 1)
        involution = derive_involution(mu, omega, momentum)
        if phase is None:
            phase = np.ones(mu.shape[0], dtype=np.complex128)
        return cls(mu=mu, omega=omega, momentum=momentum, involution=involution, phase=phase)

    @property
    def mode_count(self) -> int:
        return int(self.mu.shape[0])

    @property
    def space_dim(self) -> int:
        return int(self.momentum.shape[1])

    def check(self, f: NDArray) -> NDArray[np.complex128]:
        f = np.asarray(f, dtype=np.complex128)
        if f.shape[-1] != self.mode_count:
            raise DimensionMismatchError(self.mode_count, f.shape[-1], "one-boson vector")
        return f

    def inner_product(self, f: NDArray, g: NDArray) -> complex | NDArray[np.complex128]:
        """
        Weighted L2 pairing `sum_k mu_k conj(f_k) g_k`, antilinear in `f`.

        Leading axes broadcast, so stacks of vectors pair elementwise.

        :raises DimensionMismatchError: if either argument has the wrong mode count
        """
        f = self.check(f)
        g = self.check(g)
        value = np.sum(self.mu * np.conj(f) * g, axis=-1)
        return complex(value) if np.ndim(value) == 0 else value

    def weighted_norm(self, f: NDArray, kappa: NDArray | float = 1.0) -> float:
        """Returns `sqrt(sum_k mu_k kappa_k |f_k|^2)`."""
        f = self.check(f)
        kappa = np.broadcast_to(np.asarray(kappa, dtype=np.float64), (self.mode_count,))
        return float(np.sqrt(np.sum(self.mu * kappa * np.abs(f) ** 2)))

    def norm(self, f: NDArray) -> float:
        return self.weighted_norm(f)

    def apply_conjugation(self, f: NDArray) -> NDArray[np.complex128]:
        f = self.check(f)
        return self.phase * np.conj(f[..., self.involution])

    def momentum_phase(self, x: NDArray) -> NDArray[np.complex128]:
        """`exp(-i m.x)` per mode; `x` may carry leading axes."""
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-1j * (x @ self.momentum.T))


def derive_involution(mu: NDArray, omega: NDArray, momentum: NDArray) -> NDArray[np.int64]:
    """
    Pairs every mode with the mode of opposite momentum and equal `omega`, `mu`.

    :raises ConfigurationError: if some mode has no partner
    """
    size = mu.shape[0]
    involution = np.full(size, -1, dtype=np.int64)
    for k in range(size):
        match = np.flatnonzero(
            np.all(np.abs(momentum + momentum[k]) <= _EXACT, axis=1)
            & (np.abs(omega - omega[k]) <= _EXACT)
            & (np.abs(mu - mu[k]) <= _EXACT)
        )
        if match.size == 0:
            raise ConfigurationError(
                f"mode {k} has no partner with opposite momentum; the mode set must be symmetric"
            )
        involution[k] = match[0]
    if not np.array_equal(involution[involution], np.arange(size)):
        raise ConfigurationError("ambiguous momentum pairing between modes")
    return involution
# endregion


# region CouplingFamily
class CouplingSnapshot(BaseModel):
    """Couplings evaluated at a stack of positions, leading axis is the node."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    G: np.ndarray
    F: np.ndarray
    q: np.ndarray
    q_breve: np.ndarray


class CouplingFamily(BaseModel):
    """
    Position-dependent coupling vectors and spin matrices.

    `G_0` has shape `(nu, M)`, `F_0` has shape `(S, M)` and `sigma` has shape
    `(S, L, L)`. With `covariant=True` the couplings at `x` are
    `exp(-i m.x)` times the stored vectors, otherwise they are constant.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    space: ModeSpace
    G0: np.ndarray
    F0: np.ndarray
    sigma: np.ndarray
    covariant: bool = True

    @field_validator("G0", "F0", mode="before")
    @classmethod
    def _as_matrix(cls, value) -> NDArray[np.complex128]:
        value = np.asarray(value, dtype=np.complex128)
        return value.reshape(1, -1) if value.ndim == 1 else value

    @field_validator("sigma", mode="before")
    @classmethod
    def _as_spin(cls, value) -> NDArray[np.complex128]:
        value = np.asarray(value, dtype=np.complex128)
        return value.reshape(1, *value.shape) if value.ndim == 2 else value

    @model_validator(mode="after")
    def _check_couplings(self) -> Self:
        space = self.space
        if self.G0.shape != (space.space_dim, space.mode_count):
            raise ValueError(f"G0 must have shape {(space.space_dim, space.mode_count)}")
        if self.F0.ndim != 2 or self.F0.shape[1] != space.mode_count:
            raise ValueError("F0 must hold one vector per spin matrix")
        if self.sigma.ndim != 3 or self.sigma.shape[1] != self.sigma.shape[2]:
            raise ValueError("sigma must be a stack of square matrices")
        if self.sigma.shape[0] != self.F0.shape[0]:
            raise ValueError("F0 and sigma must have the same number of components")
        for matrix in self.sigma:
            if not np.allclose(matrix, matrix.conj().T, atol=_EXACT):
                raise ValueError("spin matrices must be hermitian")
            if np.linalg.norm(matrix, 2) > 1 + _EXACT:
                raise ValueError("spin matrices must have operator norm at most one")
        for name, vectors in (("G", self.G0), ("F", self.F0)):
            if not np.allclose(space.apply_conjugation(vectors), vectors, atol=_EXACT):
                raise ValueError(f"{name} must be fixed by the conjugation")
        return self

    @property
    def spin_dim(self) -> int:
        return int(self.sigma.shape[1])

    @property
    def field_count(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def space_dim(self) -> int:
        return self.space.space_dim

    @property
    def is_position_independent(self) -> bool:
        return not self.covariant or not np.any(self.space.momentum)

    def _phase(self, x: NDArray) -> NDArray[np.complex128]:
        x = np.asarray(x, dtype=np.float64)
        if not self.covariant:
            return np.ones((*x.shape[:-1], self.space.mode_count), dtype=np.complex128)
        return self.space.momentum_phase(x)

    def G(self, x: NDArray) -> NDArray[np.complex128]:
        return self._phase(x)[..., None, :] * self.G0

    def F(self, x: NDArray) -> NDArray[np.complex128]:
        return self._phase(x)[..., None, :] * self.F0

    def dG(self, x: NDArray) -> NDArray[np.complex128]:
        """Partials `dG[..., j, l, :] = d/dx_j G_l`."""
        G = self.G(x)
        if not self.covariant:
            return np.zeros((*G.shape[:-2], self.space_dim, *G.shape[-2:]), dtype=np.complex128)
        m = self.space.momentum.T
        return -1j * m[:, None, :] * G[..., None, :, :]

    def m_dot_G(self, x: NDArray) -> NDArray[np.complex128]:
        return np.sum(self.space.momentum.T * self.G(x), axis=-2)

    def q(self, x: NDArray) -> NDArray[np.complex128]:
        dG = self.dG(x)
        return np.trace(dG, axis1=-3, axis2=-2)

    def q_breve(self, x: NDArray) -> NDArray[np.complex128]:
        return 0.5 * self.q(x) - 0.5j * self.m_dot_G(x)

    def snapshot(self, x: NDArray) -> CouplingSnapshot:
        """Evaluates every coupling at one position or a stack of positions."""
        return CouplingSnapshot(G=self.G(x), F=self.F(x), q=self.q(x), q_breve=self.q_breve(x))

    def spin_coupling(self, x: NDArray) -> NDArray[np.complex128]:
        """`(sigma . F_x)_{ij}` as an `(L, L, M)` array."""
        return np.einsum("sij,sk->ijk", self.sigma, self.F(x))

    def scaled(self, factor: float) -> "CouplingFamily":
        """Same family with `F` multiplied by a real coupling strength."""
        return self.model_copy(update={"F0": factor * self.F0})

    def without_matter_coupling(self) -> "CouplingFamily":
        return self.model_copy(update={"F0": np.zeros_like(self.F0)})
# endregion


# region presets
def polarization_frame(k: NDArray, axis: NDArray) -> tuple[NDArray, NDArray]:
    """
    Transverse frame `eps1 = e x k / |e x k|`, `eps2 = k x eps1 / |k|`.

    Satisfies `eps1(-k) = -eps1(k)` and `eps2(-k) = eps2(k)`.
    """
    cross = np.cross(axis, k)
    eps1 = cross / np.linalg.norm(cross, axis=-1, keepdims=True)
    eps2 = np.cross(k, eps1) / np.linalg.norm(k, axis=-1, keepdims=True)
    return eps1, eps2


def nrqed_preset(
    cutoff: float,
    k_grid: NDArray,
    weights: NDArray,
    alpha: float,
    axis: NDArray | None = None,
) -> tuple[ModeSpace, CouplingFamily]:
    """
    Pauli-Fierz couplings on a symmetric photon momentum grid.

    Mode `2p + (j - 1)` is grid point `p` with polarization `j`. The coupling is
    `G_x(k, j) = (alpha/2)^{1/2} (2 pi)^{-3/2} |k|^{-1/2} chi(|k| <= cutoff) e^{-ik.x} eps(k, j)`
    and `F = -(i/2) k x G`, with Pauli spin matrices.

    :param cutoff: Ultraviolet cutoff of the indicator `chi`.
    :type cutoff: float
    :param k_grid: Photon momenta, shape `(P, 3)`, closed under `k -> -k`.
    :type k_grid: NDArray
    :param weights: Quadrature weight of each grid point.
    :type weights: NDArray
    :param alpha: Fine-structure constant.
    :type alpha: float
    :return: The mode space and coupling family.
    :rtype: tuple[ModeSpace, CouplingFamily]
    :raises ConfigurationError: if the grid is not symmetric or meets the origin or the axis
    """
    k_grid = np.asarray(k_grid, dtype=np.float64).reshape(-1, 3)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    axis = np.array([0.0, 0.0, 1.0]) if axis is None else np.asarray(axis, dtype=np.float64)
    points = k_grid.shape[0]
    if weights.shape[0] != points:
        raise ConfigurationError("one quadrature weight per grid point is required")
    if alpha < 0 or cutoff <= 0:
        raise ConfigurationError("alpha must be nonnegative and the cutoff positive")
    norms = np.linalg.norm(k_grid, axis=1)
    if np.any(norms <= _EXACT):
        raise ConfigurationError("the photon grid must avoid k = 0")
    if np.any(np.linalg.norm(np.cross(axis, k_grid), axis=1) <= _EXACT):
        raise ConfigurationError("the photon grid must avoid the polarization axis")

    mirror = np.full(points, -1, dtype=np.int64)
    for p in range(points):
        match = np.flatnonzero(np.all(np.abs(k_grid + k_grid[p]) <= _EXACT, axis=1))
        if match.size == 0:
            raise ConfigurationError(f"grid point {p} has no mirror point -k")
        mirror[p] = match[0]
    if not np.allclose(weights[mirror], weights, rtol=0, atol=_EXACT):
        raise ConfigurationError("quadrature weights must be symmetric under k -> -k")

    eps1, eps2 = polarization_frame(k_grid, axis)
    modes = 2 * points
    momentum = np.repeat(k_grid, 2, axis=0)
    involution = (2 * np.repeat(mirror, 2) + np.tile([0, 1], points)).astype(np.int64)
    phase = np.tile([-1.0, 1.0], points).astype(np.complex128)
    space = ModeSpace(
        mu=np.repeat(weights, 2),
        omega=np.repeat(norms, 2),
        momentum=momentum,
        involution=involution,
        phase=phase,
    )

    amplitude = np.sqrt(alpha / 2) * (2 * np.pi) ** -1.5 * norms ** -0.5 * (norms <= cutoff)
    polarization = np.empty((modes, 3), dtype=np.float64)
    polarization[0::2] = eps1
    polarization[1::2] = eps2
    G0 = (np.repeat(amplitude, 2)[:, None] * polarization).T.astype(np.complex128)
    F0 = (-0.5j * np.cross(momentum, G0.T)).T
    return space, CouplingFamily(space=space, G0=G0, F0=F0, sigma=PAULI, covariant=True)


def nelson_preset(
    mu,
    omega,
    momentum,
    form_factor,
    translation_covariant: bool = True,
) -> tuple[ModeSpace, CouplingFamily]:
    """
    Nelson model: `L = S = 1`, `sigma_1 = -1`, `G = 0` and `F_x = exp(-i m.x) f`.

    :raises ConfigurationError: if the form factor is not fixed by the conjugation
    """
    space = ModeSpace.from_modes(mu, omega, momentum)
    f = space.check(form_factor).reshape(1, -1)
    if not np.allclose(space.apply_conjugation(f), f, atol=_EXACT):
        raise ConfigurationError("the Nelson form factor must be fixed by the conjugation")
    family = CouplingFamily(
        space=space,
        G0=np.zeros((space.space_dim, space.mode_count), dtype=np.complex128),
        F0=f,
        sigma=-np.ones((1, 1, 1)),
        covariant=translation_covariant,
    )
    return space, family


def spin_toy_preset(mu, omega, form_factor, momentum=None) -> tuple[ModeSpace, CouplingFamily]:
    """Two-level toy: `L = 2`, `S = 1`, Pauli-z spin matrix and constant `F`."""
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    momentum = np.zeros((mu.shape[0], 1)) if momentum is None else momentum
    space = ModeSpace.from_modes(mu, omega, momentum)
    family = CouplingFamily(
        space=space,
        G0=np.zeros((space.space_dim, space.mode_count), dtype=np.complex128),
        F0=space.check(form_factor).reshape(1, -1),
        sigma=PAULI[2:3],
        covariant=False,
    )
    return space, family


def free_preset(space: ModeSpace, spin_dim: int = 1) -> CouplingFamily:
    """Free field: every coupling vanishes."""
    return CouplingFamily(
        space=space,
        G0=np.zeros((space.space_dim, space.mode_count), dtype=np.complex128),
        F0=np.zeros((1, space.mode_count), dtype=np.complex128),
        sigma=np.eye(spin_dim, dtype=np.complex128).reshape(1, spin_dim, spin_dim),
        covariant=False,
    )


def load_mode_table(path: Path | str) -> tuple[ModeSpace, CouplingFamily | None]:
    """
    Reads a mode table with columns `mode_id, mu, omega, m_1..m_nu`.

    Optional coupling columns `G{l}_re, G{l}_im` (l = 1..nu) and
    `F{j}_re, F{j}_im` (j = 1..S) define a plane-wave family with scalar
    spin matrices `sigma_j = -1` when `S = 1`. Returns `None` as family when
    the table carries no coupling columns.

    :raises ConfigurationError: if required columns are missing
    """
    table = pd.read_csv(path).sort_values("mode_id")
    missing = {"mode_id", "mu", "omega", "m_1"} - set(table.columns)
    if missing:
        raise ConfigurationError(f"mode table {path} lacks columns {sorted(missing)}")
    nu = 1
    while f"m_{nu + 1}" in table.columns:
        nu += 1
    momentum = table[[f"m_{l}" for l in range(1, nu + 1)]].to_numpy(dtype=np.float64)
    space = ModeSpace.from_modes(table["mu"].to_numpy(), table["omega"].to_numpy(), momentum)

    def complex_columns(prefix: str, count: int) -> NDArray[np.complex128]:
        rows = []
        for i in range(1, count + 1):
            real = table[f"{prefix}{i}_re"].to_numpy(dtype=np.float64)
            imag_column = f"{prefix}{i}_im"
            imag = table[imag_column].to_numpy(dtype=np.float64) if imag_column in table else 0.0
            rows.append(real + 1j * imag)
        return np.stack(rows)

    f_count = 0
    while f"F{f_count + 1}_re" in table.columns:
        f_count += 1
    has_G = "G1_re" in table.columns
    if not f_count and not has_G:
        return space, None
    G0 = complex_columns("G", nu) if has_G else np.zeros((nu, space.mode_count), dtype=np.complex128)
    F0 = complex_columns("F", f_count) if f_count else np.zeros((1, space.mode_count), dtype=np.complex128)
    if F0.shape[0] == 1:
        sigma = -np.ones((1, 1, 1))
    elif F0.shape[0] == 3:
        sigma = PAULI
    else:
        raise ConfigurationError("mode tables support one or three F components")
    try:
        family = CouplingFamily(space=space, G0=G0, F0=F0, sigma=sigma, covariant=True)
    except ValueError as error:
        raise ConfigurationError(f"invalid couplings in {path}: {error}") from error
    return space, family
# endregion

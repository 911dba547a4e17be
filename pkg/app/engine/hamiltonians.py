"""
Exact finite-dimensional oracles on the truncated spin-Fock space.
"""

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.linalg import eigh, eigvals, eigvalsh, expm

from app.engine.fock import FockOperator, TruncatedFock, lift
from app.engine.modespace import ModeSpace
from app.engine.spin_sde import GeneratorSet
from app.helpers.exceptions import InputError, NumericalError
from app.models.WeightFlavor import WeightFlavor

HERMITIAN_TOLERANCE = 1e-12


def is_hermitian(op: NDArray, atol: float = HERMITIAN_TOLERANCE) -> bool:
    return bool(np.allclose(op, op.conj().T, rtol=0, atol=atol))


# region semigroup
class OracleSemigroup:
    """
    `t -> exp(-t H)` for one dense generator.

    Hermitian generators are diagonalized once and every time reuses the
    eigenbasis; other generators go through scipy's scaling and squaring.
    Results are cached per `t`.
    """

    def __init__(self, H: FockOperator, hermitian: bool | None = None):
        self.H = np.asarray(H, dtype=np.complex128)
        self.hermitian = is_hermitian(self.H) if hermitian is None else hermitian
        self._spectrum: tuple[NDArray, NDArray] | None = None
        self._cache: dict[tuple[float, str], FockOperator] = {}

    @property
    def dim(self) -> int:
        return int(self.H.shape[0])

    def spectrum(self) -> tuple[NDArray[np.float64], NDArray[np.complex128]]:
        if not self.hermitian:
            raise InputError("the eigenbasis is only used for hermitian generators")
        if self._spectrum is None:
            self._spectrum = eigh(0.5 * (self.H + self.H.conj().T))
        return self._spectrum

    def at(self, t: float, method: str | None = None) -> FockOperator:
        """
        `exp(-t H)`; `method` forces `"eigh"` or `"expm"`.

        :raises NumericalError: if the exponential is not finite
        """
        if t < 0:
            raise InputError("the semigroup is only defined for t >= 0")
        method = method or ("eigh" if self.hermitian else "expm")
        key = (round(float(t), 15), method)
        if key in self._cache:
            return self._cache[key]
        if t == 0:
            value = np.eye(self.dim, dtype=np.complex128)
        elif method == "eigh":
            values, vectors = self.spectrum()
            value = (vectors * np.exp(-t * values)) @ vectors.conj().T
        else:
            value = expm(-t * self.H)
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"exp(-t H) is not finite at t = {t}")
        self._cache[key] = value
        return value


def exact_semigroup(gens: GeneratorSet, t: float) -> FockOperator:
    """`exp(-t H)` of the full spin-Fock generator."""
    return OracleSemigroup(gens.H_full).at(t)
# endregion


# region van hove
def van_hove_energy(omega: NDArray, f: NDArray, mu: NDArray | None = None) -> float:
    """Infimum `-|omega^{-1/2} f|^2` of `dGamma(omega) + phi(f)`."""
    omega = np.asarray(omega, dtype=np.float64).reshape(-1)
    f = np.asarray(f, dtype=np.complex128).reshape(-1)
    mu = np.ones_like(omega) if mu is None else np.asarray(mu, dtype=np.float64).reshape(-1)
    if np.any(omega <= 0):
        raise InputError("omega must be strictly positive")
    return -float(np.sum(mu * np.abs(f) ** 2 / omega))


def _van_hove_space(omega: NDArray, mu: NDArray | None) -> ModeSpace:
    omega = np.asarray(omega, dtype=np.float64).reshape(-1)
    mu = np.ones_like(omega) if mu is None else mu
    return ModeSpace(
        mu=mu,
        omega=omega,
        momentum=np.zeros((omega.shape[0], 1)),
        involution=np.arange(omega.shape[0]),
        phase=np.ones(omega.shape[0]),
    )


def truncated_ground_energy(omega: NDArray, f: NDArray, max_bosons: int, mu: NDArray | None = None) -> float:
    """Lowest eigenvalue of `dGamma(omega) + phi(f)` on `N <= max_bosons`; decreases in `N`."""
    fock = TruncatedFock(_van_hove_space(omega, mu), max_bosons)
    H = fock.d_gamma(fock.space.omega) + fock.field(f)
    return float(eigvalsh(H, subset_by_index=[0, 0])[0])


def energy_vs_truncation(omega: NDArray, f: NDArray, cutoffs: list[int], mu: NDArray | None = None) -> pd.DataFrame:
    """Columns `N, ground_energy, closed_form, gap`."""
    exact = van_hove_energy(omega, f, mu)
    rows = []
    for cutoff in cutoffs:
        energy = truncated_ground_energy(omega, f, cutoff, mu)
        rows.append({"N": cutoff, "ground_energy": energy, "closed_form": exact, "gap": energy - exact})
    return pd.DataFrame(rows)
# endregion


# region weights
def domain_weight(
    fock: TruncatedFock,
    flavor: WeightFlavor,
    xi: NDArray | None = None,
    a: float = 1.0,
    spin_dim: int = 1,
) -> FockOperator:
    """
    Diagonal weights on `C^L (x) F`:

    - M: `(1/2) sum_l dGamma(m_l)^2 + dGamma(omega)`.
    - M_A: `(1/2) sum_l (xi_l - dGamma(m_l))^2 + a dGamma(omega)` with `a >= 1`.
    """
    momentum = fock.basis @ fock.space.momentum
    omega = fock.d_gamma_diagonal(fock.space.omega).real
    match flavor:
        case WeightFlavor.M:
            diagonal = 0.5 * np.sum(momentum ** 2, axis=1) + omega
        case WeightFlavor.M_A:
            if a < 1:
                raise InputError("M_a needs a >= 1")
            xi = np.zeros(fock.space.space_dim) if xi is None else np.atleast_1d(np.asarray(xi, dtype=np.float64))
            diagonal = 0.5 * np.sum((xi - momentum) ** 2, axis=1) + a * omega
    return lift(np.eye(spin_dim), np.diag(diagonal.astype(np.complex128)))


def relative_bound_sweep(
    gens: GeneratorSet,
    fock: TruncatedFock,
    rng: np.random.Generator,
    a_values: list[float],
    epsilons: list[float],
    samples: int = 100,
) -> pd.DataFrame:
    """
    Observed constants `c` in `|(H0 - M_1) psi| <= eps |M_a psi| + c |psi|`.

    Vectors are normalized and drawn below the two top sectors. Each row gives
    the smallest `c` that works for all samples at one `(a, eps)`.
    """
    mask = np.tile(fock.sector_mask(2), gens.spin_dim)
    base = domain_weight(fock, WeightFlavor.M_A, gens.xi, 1.0, gens.spin_dim)
    difference = gens.H_full - gens.potential_value * np.eye(gens.dim) - base
    vectors = []
    for _ in range(samples):
        psi = np.where(mask, rng.standard_normal(gens.dim) + 1j * rng.standard_normal(gens.dim), 0)
        vectors.append(psi / np.linalg.norm(psi))
    lhs = np.array([np.linalg.norm(difference @ psi) for psi in vectors])

    rows = []
    for a in a_values:
        weight = np.diag(domain_weight(fock, WeightFlavor.M_A, gens.xi, a, gens.spin_dim)).real
        rhs = np.array([np.linalg.norm(weight * psi) for psi in vectors])
        for eps in epsilons:
            rows.append({"a": a, "epsilon": eps, "constant": float(np.max(lhs - eps * rhs))})
    return pd.DataFrame(rows)
# endregion


def spectrum_table(H: FockOperator) -> pd.DataFrame:
    """Eigenvalues sorted by real part; imaginary parts vanish for hermitian input."""
    if is_hermitian(H):
        values = eigvalsh(0.5 * (H + H.conj().T)).astype(np.complex128)
    else:
        values = eigvals(H)
        values = values[np.argsort(values.real)]
    return pd.DataFrame({"index": np.arange(values.shape[0]), "eigenvalue_re": values.real, "eigenvalue_im": values.imag})

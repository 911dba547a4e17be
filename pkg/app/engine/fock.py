"""
Truncated bosonic Fock space over a `ModeSpace`.

The basis is the set of occupation multi-indices `n` with `sum(n) <= N`,
ordered by total occupation and then lexicographically in descending order,
so that the one-boson states `1 + k` follow the mode order. Operators are
dense complex matrices, vectors are dense complex arrays.

Matrix elements of `a^dagger(f)` carry `sqrt(mu_k)` so that
`a(f) = a^dagger(f)^H` and `[a(f), a^dagger(g)] = <f, g>_mu` hold exactly below
the top sector. States on the top sector are mapped to zero by creation.
"""

from math import comb
from typing import Any, Iterator, NamedTuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.linalg import expm
from scipy.special import gammainc, gammaln

from app.engine.modespace import ModeSpace
from app.helpers.exceptions import DimensionCapError, DimensionMismatchError, InputError
from app.settings.config import settings

FockVector = NDArray[np.complex128]
FockOperator = NDArray[np.complex128]

BASIS_ORDER = "graded-lexicographic-descending"


class ExpVector(NamedTuple):
    """Truncated exponential vector and the norm of the discarded sectors."""
    vector: FockVector
    tail: float


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Occupations of `parts` modes summing to `total`, descending lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first, *rest)


def fock_dimension(mode_count: int, max_bosons: int) -> int:
    return comb(mode_count + max_bosons, max_bosons)


class TruncatedFock:
    """
    Occupation-number basis with a total-boson cutoff `N`.

    :param space: One-boson mode space.
    :type space: ModeSpace
    :param max_bosons: Total occupation cutoff `N >= 0`.
    :type max_bosons: int
    :param spin_dim: Size `L` of the spin factor that will be tensored on; only
        used for the dimension cap.
    :type spin_dim: int
    :raises DimensionCapError: if `L * binomial(M + N, N)` exceeds the cap
    """

    def __init__(self, space: ModeSpace, max_bosons: int, spin_dim: int = 1, cap: int | None = None):
        if max_bosons < 0:
            raise InputError("the boson cutoff must be nonnegative")
        cap = settings.MAX_FOCK_DIM if cap is None else cap
        dim = fock_dimension(space.mode_count, max_bosons)
        if dim * spin_dim > cap:
            raise DimensionCapError(dim * spin_dim, cap)

        self.space = space
        self.max_bosons = max_bosons
        self.basis: NDArray[np.int64] = np.array(
            [state for total in range(max_bosons + 1) for state in compositions(total, space.mode_count)],
            dtype=np.int64,
        ).reshape(dim, space.mode_count)
        self.sectors: NDArray[np.int64] = self.basis.sum(axis=1)
        self.index: dict[tuple[int, ...], int] = {tuple(state): i for i, state in enumerate(self.basis.tolist())}

        rows, cols, modes = [], [], []
        for k in range(space.mode_count):
            occupied = np.flatnonzero(self.basis[:, k] > 0)
            lowered = self.basis[occupied].copy()
            lowered[:, k] -= 1
            rows.append(occupied)
            cols.append(np.array([self.index[tuple(state)] for state in lowered.tolist()], dtype=np.int64))
            modes.append(np.full(occupied.size, k, dtype=np.int64))
        self._rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        self._cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        self._modes = np.concatenate(modes) if modes else np.zeros(0, dtype=np.int64)
        self._amplitudes = np.sqrt(self.basis[self._rows, self._modes] * space.mu[self._modes])
        self._log_factorials = gammaln(np.arange(max_bosons + 1) + 1.0)

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    def __repr__(self) -> str:
        return f"TruncatedFock(modes={self.space.mode_count}, max_bosons={self.max_bosons}, dim={self.dim})"

    # region vectors
    def vacuum(self) -> FockVector:
        psi = np.zeros(self.dim, dtype=np.complex128)
        psi[0] = 1.0
        return psi

    def sector_mask(self, levels_removed: int = 0) -> NDArray[np.bool_]:
        return self.sectors <= self.max_bosons - levels_removed

    def projector(self, levels_removed: int = 0) -> FockOperator:
        """Orthogonal projection `P_{<= N - j}` onto the sectors below the top `j`."""
        return np.diag(self.sector_mask(levels_removed).astype(np.complex128))

    def exp_vector(self, h: NDArray) -> ExpVector:
        """
        Exponential vector `zeta(h)` truncated at `N`.

        The coefficient on `|n>` is `prod_k (i sqrt(mu_k) h_k)^{n_k} / sqrt(n_k!)`;
        `tail**2 = sum_{n > N} ||h||^{2n} / n!`.
        """
        h = self.space.check(h)
        z = 1j * np.sqrt(self.space.mu) * h
        coefficients = np.prod(np.power(z, self.basis), axis=1) * np.exp(
            -0.5 * self._log_factorials[self.basis].sum(axis=1)
        )
        x = float(np.real(self.space.inner_product(h, h)))
        tail = float(np.sqrt(np.exp(x) * gammainc(self.max_bosons + 1, x))) if x > 0 else 0.0
        return ExpVector(coefficients.astype(np.complex128), tail)
    # endregion

    # region operators
    def creation(self, f: NDArray) -> FockOperator:
        f = self.space.check(f)
        op = np.zeros((self.dim, self.dim), dtype=np.complex128)
        op[self._rows, self._cols] = self._amplitudes * f[self._modes]
        return op

    def annihilation(self, f: NDArray) -> FockOperator:
        return self.creation(f).conj().T

    def field(self, f: NDArray) -> FockOperator:
        """Segal field `a^dagger(f) + a(f)`; hermitian as a matrix."""
        create = self.creation(f)
        return create + create.conj().T

    def d_gamma_diagonal(self, kappa: NDArray | float) -> NDArray[np.complex128]:
        kappa = np.broadcast_to(np.asarray(kappa, dtype=np.complex128), (self.space.mode_count,))
        return self.basis @ kappa

    def d_gamma(self, kappa: NDArray | float) -> FockOperator:
        """Second quantization of a multiplication operator: eigenvalue `sum_k n_k kappa_k`."""
        return np.diag(self.d_gamma_diagonal(kappa))

    def number_operator(self) -> FockOperator:
        return self.d_gamma(1.0)

    def gamma_diagonal(self, contraction: NDArray | complex) -> NDArray[np.complex128]:
        contraction = np.broadcast_to(np.asarray(contraction, dtype=np.complex128), (self.space.mode_count,))
        if np.any(np.abs(contraction) > 1 + 1e-12):
            raise InputError("second quantization needs a contraction, |j_k| <= 1")
        return np.prod(np.power(contraction, self.basis), axis=1)

    def gamma_contraction(self, contraction: NDArray | complex) -> FockOperator:
        """`Gamma(j)` multiplies `|n>` by `prod_k j_k^{n_k}`.

        :raises InputError: if some `|j_k| > 1`
        """
        return np.diag(self.gamma_diagonal(contraction))

    def weyl(self, f: NDArray) -> FockOperator:
        return expm(1j * self.field(f))

    def nilpotent_exp(self, op: FockOperator, scale: complex = 1.0) -> FockOperator:
        """`sum_{l <= N} (scale * op)^l / l!` for an operator that shifts the sector by one."""
        result = np.eye(self.dim, dtype=np.complex128)
        term = np.eye(self.dim, dtype=np.complex128)
        for order in range(1, self.max_bosons + 1):
            term = (term @ op) * (scale / order)
            if not np.any(term):
                break
            result += term
        return result

    def normal_ordered_dressing(
        self,
        u: complex,
        a_plus: NDArray,
        contraction: NDArray,
        a_minus: NDArray,
    ) -> FockOperator:
        """
        `exp(-u) exp(i a^dagger(a_plus)) Gamma(contraction) exp(i a(a_minus))`.

        On the truncated space this is the exact compression of the untruncated
        operator, so it maps `zeta(h)` to
        `exp(-u - <a_minus, h>) zeta(contraction * h + a_plus)` up to tails.

        :raises InputError: if the contraction exceeds one in modulus
        """
        gamma = self.gamma_diagonal(contraction)
        creation = self.nilpotent_exp(self.creation(a_plus), 1j)
        annihilation = self.nilpotent_exp(self.annihilation(a_minus), 1j)
        return np.exp(-u) * (creation * gamma) @ annihilation

    def apc_factorization(self, z: complex, g: NDArray, a: NDArray, b: NDArray) -> FockOperator:
        """Normal-ordered form of `Gamma(b^*) exp(z phi(g)) Gamma(a)` for diagonal contractions."""
        g = self.space.check(g)
        a = np.broadcast_to(np.asarray(a, dtype=np.complex128), g.shape)
        b = np.broadcast_to(np.asarray(b, dtype=np.complex128), g.shape)
        norm_sq = float(np.real(self.space.inner_product(g, g)))
        creation = self.nilpotent_exp(self.creation(np.conj(b) * g), z)
        annihilation = self.nilpotent_exp(self.annihilation(np.conj(a) * g), z)
        return np.exp(z ** 2 * norm_sq / 2) * (creation * self.gamma_diagonal(np.conj(b) * a)) @ annihilation
    # endregion

    # region bounds
    def taylor_error_bound(self, h: NDArray, f: NDArray, order: int, terms: int = 200) -> float:
        """Bound on `||zeta(h + f) - sum_{l <= n} (i^l / l!) a^dagger(f)^l zeta(h)||`."""
        h_sq = float(np.real(self.space.inner_product(h, h)))
        f_norm = self.space.norm(f)
        if f_norm == 0:
            return 0.0
        ell = np.arange(order + 1, order + 1 + terms)
        log_terms = ell * (0.5 * np.log(2.0) + np.log(f_norm)) - 0.5 * gammaln(ell + 1.0)
        return float(np.exp(h_sq) * np.sum(np.exp(log_terms)))

    def relative_bound_report(self, f: NDArray, rng: np.random.Generator, samples: int = 100) -> pd.DataFrame:
        """
        Observed ratios `lhs / rhs` of the standard relative bounds with `kappa = omega`.

        Vectors are drawn on sectors `<= N - 2`, where every operator below acts
        exactly as its untruncated counterpart. Ratios at most one confirm the bound.
        """
        omega = self.space.omega
        kappa_f = self.space.weighted_norm(f, 1.0 / omega)
        shifted_f = self.space.weighted_norm(f, 1.0 + 1.0 / omega)
        number = self.d_gamma_diagonal(omega).real
        create, annihilate, phi = self.creation(f), self.annihilation(f), self.field(f)
        mask = self.sector_mask(2)

        ratios: dict[str, list[float]] = {"rb-a": [], "rb-ad": [], "rb-vp1": [], "rb-vp2": [], "qfb-vp": []}
        for _ in range(samples):
            psi = np.where(mask, rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim), 0)
            psi /= np.linalg.norm(psi)
            shifted = np.linalg.norm(np.sqrt(1 + number) * psi)
            ratios["rb-a"].append(_ratio(np.linalg.norm(annihilate @ psi), kappa_f * np.linalg.norm(np.sqrt(number) * psi)))
            ratios["rb-ad"].append(_ratio(np.linalg.norm(create @ psi), shifted_f * shifted))
            ratios["rb-vp1"].append(_ratio(np.linalg.norm(phi @ psi), np.sqrt(2) * shifted_f * shifted))
            ratios["rb-vp2"].append(_ratio(np.linalg.norm(phi @ (phi @ psi)), 6 * shifted_f ** 2 * np.linalg.norm((1 + number) * psi)))
            energy = np.real(np.vdot(psi, number * psi + phi @ psi))
            ratios["qfb-vp"].append(_ratio(-energy, kappa_f ** 2))
        return pd.DataFrame(
            [{"bound": name, "max_ratio": float(np.max(values)), "samples": samples} for name, values in ratios.items()]
        )
    # endregion

    # region serialization
    def descriptor(self) -> dict[str, Any]:
        return {
            "modes": self.space.mode_count,
            "max_bosons": self.max_bosons,
            "order": BASIS_ORDER,
            "states": self.basis.tolist(),
        }

    def to_json(self, array: NDArray) -> dict[str, Any]:
        """Vector or operator as basis descriptor plus row-major `[re, im]` pairs."""
        array = np.asarray(array, dtype=np.complex128)
        if array.shape[0] != self.dim:
            raise DimensionMismatchError(self.dim, array.shape[0], "fock array")
        flat = array.reshape(-1)
        return {
            "basis": self.descriptor(),
            "shape": list(array.shape),
            "entries": np.stack([flat.real, flat.imag], axis=1).tolist(),
        }

    def from_json(self, payload: dict[str, Any]) -> NDArray[np.complex128]:
        basis = payload["basis"]
        if basis["order"] != BASIS_ORDER or basis["states"] != self.basis.tolist():
            raise InputError("serialized array uses a different basis")
        entries = np.asarray(payload["entries"], dtype=np.float64)
        return (entries[:, 0] + 1j * entries[:, 1]).reshape(payload["shape"])
    # endregion


def _ratio(lhs: float, rhs: float) -> float:
    if rhs <= 0:
        return 0.0 if lhs <= 1e-14 else float("inf")
    return float(lhs / rhs)


def spin_identity(spin_dim: int, fock: TruncatedFock) -> FockOperator:
    return np.eye(spin_dim * fock.dim, dtype=np.complex128)


def lift(spin: NDArray, op: FockOperator) -> FockOperator:
    """`spin (x) op` with the spin index outermost."""
    return np.kron(spin, op)

"""
Basic processes along one driver path, all in the one-boson mode space.

Both discretizations share one representation. Step `l` (from `t_l` to
`t_{l+1}`) contributes a vector `b_l` attached to its left node and a vector
`a_l` attached to its right node:

- ITO_LEFT: `b_l = G(X_l).dX_l + q_breve(X_l) Delta_l`, `a_l = 0`.
- MIDPOINT: `b_l = G(X_l).dX_l / 2`, `a_l = G(X_{l+1}).dX_l / 2`.

The embedded object `K_t` is the sum of these contributions placed at their
time stamps. It is never stored; every pairing of two placed vectors is
reduced with the kernel `exp(-|s - r| omega - i m.(X_r - X_s))`, which gives
the recursions

    U+_n = w_{n-1,n} (U+_{n-1} + b) + a
    |K_n|^2 = |K_{n-1}|^2 + 2 Re <U+_{n-1}, b> + 2 Re <w_{n-1,n} U+_{n-1}, a>
              + |b|^2 + |a|^2 + 2 Re <b, w_bar_{n-1,n} a>

and the backward row `R_{j-1} = w_bar_{j-1,j} (R_j + a_{j-1}) + b_{j-1}` for
`U-(t_j, t)`.
"""

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import logfire
import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.engine.drivers import DriverPath
from app.engine.fock import FockOperator, TruncatedFock
from app.engine.modespace import CouplingFamily, CouplingSnapshot, ModeSpace
from app.engine.potentials import Potential, integrate_potential
from app.helpers.exceptions import InputError, NumericalOverflowError
from app.models.Flavor import Flavor
from app.models.Quadrature import Quadrature


# region weights
def contraction_weight(
    path: DriverPath,
    space: ModeSpace,
    tau_idx: int,
    t_idx: int,
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """
    Returns `(w_bar, w)` for the pair of grid nodes `(tau, t)`.

    `w_bar = exp(-(t - tau) omega - i m.(X_t - X_tau))` for `t > tau` and `1`
    otherwise; `w` is its complex conjugate.

    :param path: The driver path.
    :type path: DriverPath
    :param space: Mode space supplying `omega` and `m`.
    :type space: ModeSpace
    :param tau_idx: Index of the earlier node.
    :type tau_idx: int
    :param t_idx: Index of the later node.
    :type t_idx: int
    :return: The weight and its conjugate.
    :rtype: tuple[NDArray[np.complex128], NDArray[np.complex128]]
    :raises InputError: if an index is off the grid
    """
    last = path.grid.size
    if not (0 <= tau_idx <= last and 0 <= t_idx <= last):
        raise InputError(f"grid indices must lie in [0, {last}]")
    if t_idx <= tau_idx:
        ones = np.ones(space.mode_count, dtype=np.complex128)
        return ones, ones.copy()
    elapsed = path.grid.nodes[t_idx] - path.grid.nodes[tau_idx]
    shift = path.positions[t_idx] - path.positions[tau_idx]
    w_bar = np.exp(-elapsed * space.omega - 1j * (space.momentum @ shift))
    return w_bar, np.conj(w_bar)


def step_weights(path: DriverPath, space: ModeSpace) -> NDArray[np.complex128]:
    """`w_bar_{l, l+1}` for every step, shape `(K, M)`."""
    return np.exp(
        -path.grid.steps[:, None] * space.omega
        - 1j * (path.displacements @ space.momentum.T)
    )
# endregion


# region trace
class BasicProcessTrace(BaseModel):
    """
    Basic processes of one path on every grid node.

    `u_plus` has shape `(K + 1, M)`; `u`, `k_squared` and `potential_integral`
    have shape `(K + 1,)`. `before` and `after` hold the step contributions
    `b_l` and `a_l` so that `U-` rows can be rebuilt on demand. For Nelson
    traces the field part of `u` enters with a negative sign.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    path: DriverPath
    space: ModeSpace
    xi: np.ndarray
    flavor: Flavor
    u_plus: np.ndarray
    u: np.ndarray
    k_squared: np.ndarray
    potential_integral: np.ndarray
    couplings: CouplingSnapshot
    before: np.ndarray
    after: np.ndarray
    nelson: bool = False

    @model_validator(mode="after")
    def _check_lengths(self) -> Self:
        nodes = self.path.grid.size + 1
        for name in ("u_plus", "u", "k_squared", "potential_integral"):
            if getattr(self, name).shape[0] != nodes:
                raise ValueError(f"{name} must have one entry per grid node")
        return self

    @property
    def steps(self) -> int:
        return self.path.grid.size

    @property
    def field_sign(self) -> float:
        return -0.5 if self.nelson else 0.5

    def phase_term(self, t_idx: int) -> float:
        """`xi.(X_t - X_0)`."""
        return float(self.xi @ (self.path.positions[t_idx] - self.path.positions[0]))

    def u_reflected(self, t_idx: int) -> complex:
        """`u_{-xi, t}`, the exponent used by the Feynman-Kac integrand."""
        return complex(
            self.field_sign * self.k_squared[t_idx]
            + self.potential_integral[t_idx]
            + 1j * self.phase_term(t_idx)
        )

    def weight(self, tau_idx: int, t_idx: int) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
        return contraction_weight(self.path, self.space, tau_idx, t_idx)
# endregion


# region integration
def _step_contributions(
    path: DriverPath,
    vectors: NDArray[np.complex128],
    drift_term: NDArray[np.complex128] | None,
    flavor: Flavor,
    stochastic: bool,
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """
    Left and right contributions of every step.

    `vectors` has shape `(K + 1, d, M)`. With `stochastic=True` they are paired
    with the path increments `dX` (so `d = nu`), otherwise with the time steps
    (so `d = 1`).
    """
    if stochastic:
        left = np.einsum("kdm,kd->km", vectors[:-1], path.displacements)
        right = np.einsum("kdm,kd->km", vectors[1:], path.displacements)
    else:
        left = vectors[:-1, 0] * path.grid.steps[:, None]
        right = vectors[1:, 0] * path.grid.steps[:, None]
    if flavor is Flavor.ITO_LEFT:
        if drift_term is not None:
            left = left + drift_term[:-1] * path.grid.steps[:, None]
        return left, np.zeros_like(left)
    return 0.5 * left, 0.5 * right


def _accumulate(
    path: DriverPath,
    space: ModeSpace,
    before: NDArray[np.complex128],
    after: NDArray[np.complex128],
) -> tuple[NDArray[np.complex128], NDArray[np.float64]]:
    steps = path.grid.size
    weights = step_weights(path, space)
    u_plus = np.zeros((steps + 1, space.mode_count), dtype=np.complex128)
    k_squared = np.zeros(steps + 1, dtype=np.float64)
    for n in range(1, steps + 1):
        w_bar = weights[n - 1]
        b, a = before[n - 1], after[n - 1]
        previous = u_plus[n - 1]
        u_plus[n] = np.conj(w_bar) * (previous + b) + a
        increment = (
            2 * np.real(space.inner_product(previous, b))
            + 2 * np.real(space.inner_product(np.conj(w_bar) * previous, a))
            + np.real(space.inner_product(b, b))
            + np.real(space.inner_product(a, a))
            + 2 * np.real(space.inner_product(b, w_bar * a))
        )
        k_squared[n] = max(k_squared[n - 1] + increment, 0.0)
        if not (np.all(np.isfinite(u_plus[n])) and np.isfinite(k_squared[n])):
            raise NumericalOverflowError(n, "basic process")
    return u_plus, k_squared


def _potential_integral(path: DriverPath, potential: Potential | None, flavor: Flavor) -> NDArray[np.float64]:
    if potential is None or potential.is_zero:
        return np.zeros(path.grid.size + 1)
    values = potential(path.positions)
    if not np.all(np.isfinite(values)):
        raise NumericalOverflowError(int(np.argmin(np.isfinite(values))), "potential")
    return integrate_potential(values, path.grid.steps, flavor.quadrature is Quadrature.TRAPEZOID)


def _assemble(
    path: DriverPath,
    coupling: CouplingFamily,
    xi: NDArray | None,
    potential: Potential | None,
    flavor: Flavor,
    before: NDArray[np.complex128],
    after: NDArray[np.complex128],
    snapshot: CouplingSnapshot,
    nelson: bool,
) -> BasicProcessTrace:
    space = coupling.space
    xi = np.zeros(path.space_dim) if xi is None else np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if xi.shape != (path.space_dim,):
        raise InputError(f"xi must have {path.space_dim} components")
    u_plus, k_squared = _accumulate(path, space, before, after)
    integral = _potential_integral(path, potential, flavor)
    sign = -0.5 if nelson else 0.5
    u = sign * k_squared + integral - 1j * ((path.positions - path.positions[0]) @ xi)
    return BasicProcessTrace(
        path=path,
        space=space,
        xi=xi,
        flavor=flavor,
        u_plus=u_plus,
        u=u.astype(np.complex128),
        k_squared=k_squared,
        potential_integral=integral,
        couplings=snapshot,
        before=before,
        after=after,
        nelson=nelson,
    )


def integrate(
    path: DriverPath,
    coupling: CouplingFamily,
    xi: NDArray | None = None,
    potential: Potential | None = None,
    flavor: Flavor = Flavor.ITO_LEFT,
) -> BasicProcessTrace:
    """
    Integrates `U+`, `|K|^2` and `u_xi` along `path`.

    :param path: The driver path.
    :type path: DriverPath
    :param coupling: Couplings `G`, `F` and their derived vectors.
    :type coupling: CouplingFamily
    :param xi: Total momentum, `nu` components; zero when omitted.
    :type xi: NDArray | None
    :param potential: External potential; none when omitted.
    :type potential: Potential | None
    :param flavor: Discretization of the stochastic integrals.
    :type flavor: Flavor
    :return: The trace on every grid node.
    :rtype: BasicProcessTrace
    :raises NumericalOverflowError: if a value stops being finite
    """
    if coupling.space_dim != path.space_dim:
        raise InputError("the path and the couplings live in different dimensions")
    snapshot = coupling.snapshot(path.positions)
    before, after = _step_contributions(path, snapshot.G, snapshot.q_breve, flavor, stochastic=True)
    return _assemble(path, coupling, xi, potential, flavor, before, after, snapshot, nelson=False)


def u_minus_row(trace: BasicProcessTrace, t_idx: int) -> NDArray[np.complex128]:
    """
    Rows `U-(t_j, t)` for `j = 0..t_idx`, shape `(t_idx + 1, M)`.

    Built backwards from `U-(t, t) = 0`; every step multiplies by a weight of
    modulus at most one.
    """
    if not 0 <= t_idx <= trace.steps:
        raise InputError(f"t_idx must lie in [0, {trace.steps}]")
    weights = step_weights(trace.path, trace.space)
    rows = np.zeros((t_idx + 1, trace.space.mode_count), dtype=np.complex128)
    for j in range(t_idx, 0, -1):
        rows[j - 1] = weights[j - 1] * (rows[j] + trace.after[j - 1]) + trace.before[j - 1]
    return rows
# endregion


# region midpoint sums
class MidpointSumRecord(BaseModel):
    """
    Midpoint Riemann sum of `G dX` kept as vectors placed at grid nodes.

    Node `j` carries `G(X_j).(dX_{j-1} + dX_j) / 2`, restricted to the steps
    inside `[tau, t]`.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    space: ModeSpace
    times: np.ndarray
    positions: np.ndarray
    vectors: np.ndarray

    @field_validator("vectors", mode="before")
    @classmethod
    def _as_vectors(cls, value) -> NDArray[np.complex128]:
        return np.asarray(value, dtype=np.complex128)

    @property
    def is_empty(self) -> bool:
        return self.vectors.shape[0] == 0 or not np.any(self.vectors)

    def kernel(self, other: "MidpointSumRecord") -> NDArray[np.complex128]:
        """`exp(-|s - r| omega - i m.(X_r - X_s))`, shape `(n, n', M)`."""
        gap = np.abs(self.times[:, None] - other.times[None, :])
        shift = other.positions[None, :, :] - self.positions[:, None, :]
        return np.exp(-gap[..., None] * self.space.omega - 1j * (shift @ self.space.momentum.T))

    def pair(self, other: "MidpointSumRecord") -> complex:
        """Pairing of the two embedded sums."""
        if self.vectors.shape[0] == 0 or other.vectors.shape[0] == 0:
            return 0j
        kernel = self.kernel(other)
        value = np.einsum("k,ik,ijk,jk->", self.space.mu, np.conj(self.vectors), kernel, other.vectors)
        return complex(value)

    def norm_squared(self) -> float:
        return float(np.real(self.pair(self)))


def stratonovich_ksum(
    path: DriverPath,
    coupling: CouplingFamily,
    tau_idx: int,
    t_idx: int,
) -> MidpointSumRecord:
    """
    Midpoint sum of `K_{tau, t}` on the steps between the two nodes.

    :raises InputError: if `tau_idx > t_idx` or an index is off the grid
    """
    if not 0 <= tau_idx <= t_idx <= path.grid.size:
        raise InputError("stratonovich_ksum needs 0 <= tau_idx <= t_idx <= K")
    nodes = np.arange(tau_idx, t_idx + 1)
    if t_idx == tau_idx:
        return MidpointSumRecord(
            space=coupling.space,
            times=np.zeros(0),
            positions=np.zeros((0, path.space_dim)),
            vectors=np.zeros((0, coupling.space.mode_count)),
        )
    G = coupling.G(path.positions[nodes])
    increments = path.displacements[tau_idx:t_idx]
    weights = np.zeros((nodes.size, path.space_dim))
    weights[:-1] += 0.5 * increments
    weights[1:] += 0.5 * increments
    return MidpointSumRecord(
        space=coupling.space,
        times=path.grid.nodes[nodes],
        positions=path.positions[nodes],
        vectors=np.einsum("ndm,nd->nm", G, weights),
    )
# endregion


# region nelson
def _check_nelson(coupling: CouplingFamily) -> None:
    if (
        coupling.spin_dim != 1
        or coupling.field_count != 1
        or np.any(coupling.G0)
        or not np.allclose(coupling.sigma, -1.0)
    ):
        raise InputError("the Nelson processes need G = 0, L = S = 1 and sigma = -1")


def nelson_trace(
    path: DriverPath,
    coupling: CouplingFamily,
    xi: NDArray | None = None,
    potential: Potential | None = None,
    flavor: Flavor = Flavor.ITO_LEFT,
) -> BasicProcessTrace:
    """
    Deterministic analogues of the basic processes for the Nelson model.

    The step contributions are `F(X_l) Delta_l` (left points) or the trapezoid
    split of it, so `U+` becomes `U^{N,+}`, the row `U-(0, t)` becomes
    `U^{N,-}_t`, and `u = -|K^N|^2 / 2 + int V - i xi.(X - X_0)`.

    :raises InputError: if the couplings are not of Nelson type
    """
    _check_nelson(coupling)
    snapshot = coupling.snapshot(path.positions)
    before, after = _step_contributions(path, snapshot.F, None, flavor, stochastic=False)
    trace = _assemble(path, coupling, xi, potential, flavor, before, after, snapshot, nelson=True)
    logfire.debug("nelson trace on {steps} steps", steps=path.grid.size)
    return trace


def nelson_as_operator(trace: BasicProcessTrace, fock: TruncatedFock, t_idx: int | None = None) -> FockOperator:
    """
    Resummed Nelson integrand
    `exp(-u^N_{-xi}) exp(-a^dagger(U^{N,+})) Gamma(w_{0,t}) exp(-a(U^{N,-}))`.
    """
    if not trace.nelson:
        raise InputError("nelson_as_operator needs a Nelson trace")
    t_idx = trace.steps if t_idx is None else t_idx
    _, w = trace.weight(0, t_idx)
    u_minus = u_minus_row(trace, t_idx)[0]
    return fock.normal_ordered_dressing(trace.u_reflected(t_idx), 1j * trace.u_plus[t_idx], w, -1j * u_minus)
# endregion


# region dumps
def dump_trace(trace: BasicProcessTrace) -> pd.DataFrame:
    """Columns `t_j, u_re, u_im, Ksq, Uplus_norm, V_integral`."""
    norms = np.sqrt(np.real(trace.space.inner_product(trace.u_plus, trace.u_plus)))
    return pd.DataFrame({
        "t_j": trace.path.grid.nodes,
        "u_re": trace.u.real,
        "u_im": trace.u.imag,
        "Ksq": trace.k_squared,
        "Uplus_norm": np.atleast_1d(norms),
        "V_integral": trace.potential_integral,
    })
# endregion

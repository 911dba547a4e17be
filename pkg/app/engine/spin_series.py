"""
Time-ordered Wick series of the spin-coupled integrand.

Between exponential vectors the integrand factorizes as

    <zeta(g), W zeta(h)> * (1 + sum_n int_{t_1 <= ... <= t_n} Q_n(g, h; t_[n])),

where `Q_n` sums, over all splittings of the time slots into creation slots
`A`, annihilation slots `B` and pairs `C`, the time-ordered product of spin
matrices weighted by `ADg`, `Ah` and the pair contractions.

The simplex integrals run over the path's own grid nodes. A node may carry
several time slots; a node with weight `c` used `m` times contributes
`c^m / m!`. With this convention the Nelson series is the exact expansion of
its resummed exponential on every grid.

The series is evaluated by one forward sweep over the nodes. The state holds
one `L x L` matrix per (order, number of open pairs), tensored with one mode
vector per open pair; open pairs are carried forward with the step weights
`w_{j, j+1}` and closed against `mu * conj(F)`.
"""

from itertools import combinations, product
from math import factorial

import logfire
import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from app.engine.basic_processes import BasicProcessTrace, integrate, step_weights, u_minus_row
from app.engine.drivers import DriverPath, reverse_path
from app.engine.modespace import CouplingFamily
from app.engine.potentials import Potential
from app.engine.scalar_kernel import matrix_element, sample_at
from app.helpers.exceptions import InputError, PreconditionError
from app.models.Flavor import Flavor
from app.settings.config import settings


# region partitions
class PartitionTerm(BaseModel):
    """One splitting of the slots `0..n-1` into `A`, `B` and ordered pairs."""
    model_config = ConfigDict(frozen=True)

    n: int
    creations: tuple[int, ...]
    annihilations: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]

    def role(self, slot: int) -> str:
        if slot in self.creations:
            return "A"
        if slot in self.annihilations:
            return "B"
        return "C"


def _pairings(slots: tuple[int, ...]):
    if not slots:
        yield ()
        return
    first, rest = slots[0], slots[1:]
    for index, partner in enumerate(rest):
        remaining = rest[:index] + rest[index + 1:]
        for tail in _pairings(remaining):
            yield ((first, partner), *tail)


def partition_terms(n: int) -> list[PartitionTerm]:
    """
    Every term of the order-`n` partition sum.

    There are `sum_{k even} C(n, k) (k - 1)!! 2^{n - k}` of them.
    """
    if n < 0:
        raise InputError("the order must be nonnegative")
    slots = tuple(range(n))
    terms = []
    for size in range(0, n + 1, 2):
        for paired in combinations(slots, size):
            singles = tuple(slot for slot in slots if slot not in paired)
            for pairs in _pairings(paired):
                for roles in product("AB", repeat=len(singles)):
                    terms.append(PartitionTerm(
                        n=n,
                        creations=tuple(s for s, r in zip(singles, roles) if r == "A"),
                        annihilations=tuple(s for s, r in zip(singles, roles) if r == "B"),
                        pairs=pairs,
                    ))
    return terms


def partition_count(n: int) -> int:
    return sum(
        factorial(n) // (factorial(k) * factorial(n - k))
        * int(np.prod(np.arange(k - 1, 0, -2))) * 2 ** (n - k)
        for k in range(0, n + 1, 2)
    )
# endregion


# region integrand
class _SlotFactors:
    """`ADg`, `Ah` and the couplings at every node up to `t_idx`, for every spin component."""

    def __init__(self, trace: BasicProcessTrace, coupling: CouplingFamily, g: NDArray, h: NDArray, t_idx: int):
        space = trace.space
        g, h = space.check(g), space.check(h)
        self.t_idx = t_idx
        self.F = trace.couplings.F[: t_idx + 1]
        self.sigma = coupling.sigma
        u_minus = u_minus_row(trace, t_idx)
        nodes = range(t_idx + 1)
        w_bar_to_t = np.stack([trace.weight(j, t_idx)[0] for j in nodes])
        w_from_0 = np.stack([trace.weight(0, j)[1] for j in nodes])
        left = 1j * w_bar_to_t * g - 1j * u_minus
        right = 1j * w_from_0 * h + 1j * trace.u_plus[: t_idx + 1]
        self.creation = space.inner_product(left[:, None, :], self.F)
        self.annihilation = space.inner_product(self.F, right[:, None, :])
        self.closer = space.mu * np.conj(self.F)
        self.step_weights = np.conj(step_weights(trace.path, space))[:t_idx]

    def pair(self, c: int, alpha: int, c_next: int, alpha_next: int) -> complex:
        w = np.prod(self.step_weights[c:c_next], axis=0) if c_next > c else 1.0
        return complex(np.sum(self.closer[c_next, alpha_next] * w * self.F[c, alpha]))

    def singleton(self, node: int) -> NDArray[np.complex128]:
        return np.einsum("s,sab->ab", self.creation[node] + self.annihilation[node], self.sigma)


def q_n(
    g: NDArray,
    h: NDArray,
    nodes: list[int] | tuple[int, ...],
    trace: BasicProcessTrace,
    coupling: CouplingFamily,
    t_idx: int | None = None,
    alpha: tuple[int, ...] | None = None,
) -> NDArray[np.complex128]:
    """
    `Q_n(g, h; t_[n])` at grid nodes `nodes`, summed over spin components
    unless `alpha` fixes them.

    :raises InputError: if the nodes are not ordered or exceed `t_idx`
    """
    t_idx = trace.steps if t_idx is None else t_idx
    nodes = tuple(int(node) for node in nodes)
    n = len(nodes)
    if any(b < a for a, b in zip(nodes, nodes[1:])):
        raise InputError("the time slots must be ordered")
    if nodes and not 0 <= nodes[0] <= nodes[-1] <= t_idx:
        raise InputError("the time slots must lie in [0, t]")
    spin_dim = coupling.spin_dim
    if n == 0:
        return np.eye(spin_dim, dtype=np.complex128)
    factors = _SlotFactors(trace, coupling, g, h, t_idx)
    terms = partition_terms(n)
    alphas = [alpha] if alpha is not None else product(range(coupling.field_count), repeat=n)

    total = np.zeros((spin_dim, spin_dim), dtype=np.complex128)
    for multi in alphas:
        spin = np.eye(spin_dim, dtype=np.complex128)
        for slot in range(n):
            spin = coupling.sigma[multi[slot]] @ spin
        weight = 0j
        for term in terms:
            value = 1 + 0j
            for a in term.creations:
                value *= factors.creation[nodes[a], multi[a]]
            for b in term.annihilations:
                value *= factors.annihilation[nodes[b], multi[b]]
            for c, c_next in term.pairs:
                value *= factors.pair(nodes[c], multi[c], nodes[c_next], multi[c_next])
            weight += value
        total += weight * spin
    return total
# endregion


# region series
def node_weights(trace: BasicProcessTrace, t_idx: int) -> NDArray[np.float64]:
    """Left-point or trapezoid weights of the nodes `0..t_idx`, matching the trace flavor."""
    steps = trace.path.grid.steps[:t_idx]
    weights = np.zeros(t_idx + 1)
    if trace.flavor is Flavor.ITO_LEFT:
        weights[:-1] = steps
    else:
        weights[:-1] += 0.5 * steps
        weights[1:] += 0.5 * steps
    return weights


class SeriesValue(BaseModel):
    """
    Per-order simplex integrals of `Q_n` and the scalar prefactor.

    `orders[n]` is the `L x L` integral of `Q_n`, `orders[0]` the identity.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    orders: np.ndarray
    scalar: complex
    max_order: int

    @property
    def terms(self) -> NDArray[np.complex128]:
        """`scalar * orders[n]`, the order-`n` contribution to the matrix element."""
        return self.scalar * self.orders

    @property
    def partial_sums(self) -> NDArray[np.complex128]:
        return np.cumsum(self.terms, axis=0)

    @property
    def value(self) -> NDArray[np.complex128]:
        return self.partial_sums[-1]

    @property
    def order_norms(self) -> NDArray[np.float64]:
        return np.linalg.norm(self.terms, axis=(1, 2))

    @property
    def tail_ratio(self) -> float:
        """Norm of the last order over the norm of the partial sum."""
        total = np.linalg.norm(self.value)
        return float(self.order_norms[-1] / total) if total > 0 else 0.0

    def order_table(self) -> pd.DataFrame:
        """Columns `order, frobenius_norm, cumulative_re_ij, cumulative_im_ij`."""
        rows = []
        for order, (norm, cumulative) in enumerate(zip(self.order_norms, self.partial_sums)):
            row = {"order": order, "frobenius_norm": float(norm)}
            for (i, j), value in np.ndenumerate(cumulative):
                row[f"cumulative_re_{i + 1}{j + 1}"] = float(value.real)
                row[f"cumulative_im_{i + 1}{j + 1}"] = float(value.imag)
            rows.append(row)
        return pd.DataFrame(rows)


def _propagate(state: NDArray, w: NDArray) -> NDArray:
    for axis in range(2, state.ndim):
        shape = [1] * state.ndim
        shape[axis] = w.shape[0]
        state = state * w.reshape(shape)
    return state


def _apply_slot(
    states: dict[tuple[int, int], NDArray],
    factors: _SlotFactors,
    node: int,
    max_order: int,
) -> dict[tuple[int, int], NDArray]:
    """Adds one time slot at `node` in every possible role."""
    singleton = factors.singleton(node)
    sigma = factors.sigma
    opener = factors.F[node]
    closer = factors.closer[node]
    result: dict[tuple[int, int], NDArray] = {}

    def add(key: tuple[int, int], value: NDArray) -> None:
        result[key] = result[key] + value if key in result else value

    for (order, open_pairs), state in states.items():
        if order >= max_order:
            continue
        remaining = max_order - order - 1
        if open_pairs <= remaining:
            add((order + 1, open_pairs), np.einsum("ab,bc...->ac...", singleton, state))
        if open_pairs + 1 <= remaining:
            add((order + 1, open_pairs + 1), np.einsum("sab,bc...,sm->ac...m", sigma, state, opener))
        for axis in range(open_pairs):
            moved = np.moveaxis(state, 2 + axis, -1)
            add((order + 1, open_pairs - 1), np.einsum("sab,bc...m,sm->ac...", sigma, moved, closer))
    return result


def series_orders(
    trace: BasicProcessTrace,
    coupling: CouplingFamily,
    g: NDArray,
    h: NDArray,
    t_idx: int,
    max_order: int,
) -> NDArray[np.complex128]:
    """Simplex integrals of `Q_0 .. Q_max_order`, shape `(max_order + 1, L, L)`."""
    factors = _SlotFactors(trace, coupling, g, h, t_idx)
    weights = node_weights(trace, t_idx)
    spin_dim = coupling.spin_dim
    states: dict[tuple[int, int], NDArray] = {(0, 0): np.eye(spin_dim, dtype=np.complex128)}

    for node in range(t_idx + 1):
        if node > 0:
            w = factors.step_weights[node - 1]
            states = {key: _propagate(state, w) for key, state in states.items()}
        if weights[node] == 0:
            continue
        accumulated = dict(states)
        term = states
        for multiplicity in range(1, max_order + 1):
            term = _apply_slot(term, factors, node, max_order)
            if not term:
                break
            scale = weights[node] / multiplicity
            term = {key: scale * value for key, value in term.items()}
            for key, value in term.items():
                accumulated[key] = accumulated[key] + value if key in accumulated else value
        states = accumulated

    orders = np.zeros((max_order + 1, spin_dim, spin_dim), dtype=np.complex128)
    for (order, open_pairs), state in states.items():
        if open_pairs == 0:
            orders[order] += state
    return orders


def series_matrix_element(
    g: NDArray,
    h: NDArray,
    trace: BasicProcessTrace,
    coupling: CouplingFamily,
    t_idx: int | None = None,
    max_order: int | None = None,
) -> SeriesValue:
    """
    `<zeta(g), W zeta(h)>` as an `L x L` matrix, expanded to order `max_order`.

    :param g: Left exponential-vector argument.
    :type g: NDArray
    :param h: Right exponential-vector argument.
    :type h: NDArray
    :param trace: Basic processes of the path (the scalar part of the model).
    :type trace: BasicProcessTrace
    :param coupling: Couplings supplying `F` and the spin matrices.
    :type coupling: CouplingFamily
    :param t_idx: Final grid node, the last one when omitted.
    :type t_idx: int | None
    :param max_order: Truncation order, `SERIES_MAX_ORDER` when omitted.
    :type max_order: int | None
    :return: Orders, prefactor and partial sums.
    :rtype: SeriesValue
    :raises InputError: if the order is negative or above the configured guard
    """
    t_idx = trace.steps if t_idx is None else t_idx
    max_order = settings.SERIES_MAX_ORDER if max_order is None else max_order
    if not 0 <= max_order <= settings.SERIES_MAX_ORDER:
        raise InputError(f"the series order must lie in [0, {settings.SERIES_MAX_ORDER}]")
    if trace.nelson:
        raise InputError("the series is built on the scalar basic processes, not on a Nelson trace")
    orders = series_orders(trace, coupling, g, h, t_idx, max_order)
    scalar = matrix_element(sample_at(trace, t_idx), g, h)
    return SeriesValue(orders=orders, scalar=scalar, max_order=max_order)
# endregion


# region nelson
def _nelson_parts(trace: BasicProcessTrace, g: NDArray, h: NDArray, t_idx: int) -> tuple[complex, complex, complex]:
    """`(c0, a, b)` with the resummed value `exp(c0 + b + a)`."""
    if not trace.nelson:
        raise PreconditionError("the resummed expansion needs a Nelson trace")
    space = trace.space
    _, w = trace.weight(0, t_idx)
    u_minus = u_minus_row(trace, t_idx)[0]
    c0 = -trace.potential_integral[t_idx] - 1j * trace.phase_term(t_idx) + space.inner_product(g, w * space.check(h))
    a = 0.5 * trace.k_squared[t_idx]
    b = 1j * space.inner_product(g, trace.u_plus[t_idx]) - 1j * space.inner_product(u_minus, h)
    return complex(c0), complex(a), complex(b)


def nelson_resummed(trace: BasicProcessTrace, g: NDArray, h: NDArray, t_idx: int | None = None) -> complex:
    """`exp(-u^N_{-xi} + <g, w_{0,t} h> + i <g, U^{N,+}> - i <U^{N,-}, h>)`."""
    t_idx = trace.steps if t_idx is None else t_idx
    c0, a, b = _nelson_parts(trace, g, h, t_idx)
    return complex(np.exp(c0 + a + b))


def nelson_taylor_coefficients(
    g: NDArray,
    h: NDArray,
    trace: BasicProcessTrace,
    max_order: int,
    t_idx: int | None = None,
) -> NDArray[np.complex128]:
    """
    Coefficients of `lambda^n` of the resummed exponential after `F -> lambda F`.

    With `b` linear and `a` quadratic in `lambda`, the coefficient of order `n`
    is `exp(c0) sum_P a^P b^(n - 2P) / (P! (n - 2P)!)`.
    """
    t_idx = trace.steps if t_idx is None else t_idx
    c0, a, b = _nelson_parts(trace, g, h, t_idx)
    coefficients = np.zeros(max_order + 1, dtype=np.complex128)
    for n in range(max_order + 1):
        coefficients[n] = sum(
            a ** pairs * b ** (n - 2 * pairs) / (factorial(pairs) * factorial(n - 2 * pairs))
            for pairs in range(n // 2 + 1)
        )
    return np.exp(c0) * coefficients
# endregion


# region reversal
def series_reversal_residual(
    path: DriverPath,
    coupling: CouplingFamily,
    g: NDArray,
    h: NDArray,
    max_order: int,
    xi: NDArray | None = None,
    potential: Potential | None = None,
    flavor: Flavor = Flavor.MIDPOINT,
) -> NDArray[np.float64]:
    """Per-order `|int Q_n(g, h)[X'] - (int Q_n(h, g)[X])^dagger|` with `X'` the reversed path."""
    forward = integrate(path, coupling, xi, potential, flavor)
    backward = integrate(reverse_path(path), coupling, xi, potential, flavor)
    forward_orders = series_orders(forward, coupling, h, g, forward.steps, max_order)
    backward_orders = series_orders(backward, coupling, g, h, backward.steps, max_order)
    residual = backward_orders - np.conj(np.swapaxes(forward_orders, 1, 2))
    values = np.max(np.abs(residual), axis=(1, 2))
    logfire.debug("series reversal residuals {values}", values=values.tolist())
    return values
# endregion

"""
Scalar Feynman-Kac integrand: closed-form matrix elements between exponential
vectors and its normal-ordered realization on a truncated Fock space.
"""

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from app.engine.basic_processes import BasicProcessTrace, integrate, u_minus_row
from app.engine.drivers import DriverPath, reverse_path, truncate
from app.engine.fock import FockOperator, TruncatedFock
from app.engine.modespace import CouplingFamily
from app.engine.potentials import Potential
from app.helpers.exceptions import InputError
from app.models.Flavor import Flavor


class ScalarKernelSample(BaseModel):
    """The integrand of one path at grid node `t_idx`, with its ingredients cached."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    trace: BasicProcessTrace
    t_idx: int
    u_reflected: complex
    u_plus: np.ndarray
    u_minus: np.ndarray
    weight: np.ndarray

    @property
    def log_norm_bound(self) -> float:
        """`-int_0^t V`, the logarithm of the operator norm bound."""
        return -float(self.trace.potential_integral[self.t_idx])


def sample_at(trace: BasicProcessTrace, t_idx: int | None = None) -> ScalarKernelSample:
    t_idx = trace.steps if t_idx is None else t_idx
    _, w = trace.weight(0, t_idx)
    return ScalarKernelSample(
        trace=trace,
        t_idx=t_idx,
        u_reflected=trace.u_reflected(t_idx),
        u_plus=trace.u_plus[t_idx],
        u_minus=u_minus_row(trace, t_idx)[0],
        weight=w,
    )


def matrix_element(sample: ScalarKernelSample, g: NDArray, h: NDArray) -> complex:
    """
    `<zeta(g), W zeta(h)> = exp(-u_{-xi} - <U-, h> + <g, U+> + <g, w_{0,t} h>)`.

    Independent of any Fock truncation.
    """
    space = sample.trace.space
    exponent = (
        -sample.u_reflected
        - space.inner_product(sample.u_minus, h)
        + space.inner_product(g, sample.u_plus)
        + space.inner_product(g, sample.weight * space.check(h))
    )
    return complex(np.exp(exponent))


def as_operator(sample: ScalarKernelSample, fock: TruncatedFock) -> FockOperator:
    """Normal-ordered dressing `exp(-u) exp(i a^dagger(U+)) Gamma(w_{0,t}) exp(i a(U-))`."""
    return fock.normal_ordered_dressing(sample.u_reflected, sample.u_plus, sample.weight, sample.u_minus)


def truncation_tolerance(sample: ScalarKernelSample, fock: TruncatedFock, g: NDArray, h: NDArray) -> float:
    """Bound on `|<zeta_N(g), W_N zeta_N(h)> - <zeta(g), W zeta(h)>|` from the exponential-vector tails."""
    zeta_g, zeta_h = fock.exp_vector(g), fock.exp_vector(h)
    norm_g = np.exp(0.5 * fock.space.norm(g) ** 2)
    norm_h = np.exp(0.5 * fock.space.norm(h) ** 2)
    return float(np.exp(sample.log_norm_bound) * (zeta_g.tail * norm_h + norm_g * zeta_h.tail))


def reversal_check(
    path: DriverPath,
    coupling: CouplingFamily,
    g: NDArray,
    h: NDArray,
    t_idx: int | None = None,
    xi: NDArray | None = None,
    potential: Potential | None = None,
    flavor: Flavor = Flavor.MIDPOINT,
) -> float:
    """
    Returns `|<zeta(g), W_t[X'] zeta(h)> - conj(<zeta(h), W_t[X] zeta(g)>)|`
    where `X'` is `X` run backwards on `[0, t]`.

    The midpoint flavor makes the two sides agree up to rounding; left points
    leave a residual that shrinks with the step size.

    :raises InputError: if the path was already reversed
    """
    if t_idx is not None:
        path = truncate(path, t_idx)
    forward = sample_at(integrate(path, coupling, xi, potential, flavor))
    backward = sample_at(integrate(reverse_path(path), coupling, xi, potential, flavor))
    return float(abs(matrix_element(backward, g, h) - np.conj(matrix_element(forward, h, g))))


def free_field_operator(fock: TruncatedFock, path: DriverPath, xi: NDArray | None = None) -> FockOperator:
    """`exp(-i xi.(X_t - X_0)) Gamma(w_{0,t})`, the integrand when every coupling vanishes."""
    if path.space_dim != fock.space.space_dim:
        raise InputError("the path and the mode space live in different dimensions")
    xi = np.zeros(path.space_dim) if xi is None else np.atleast_1d(np.asarray(xi, dtype=np.float64))
    shift = path.positions[-1] - path.positions[0]
    w = np.exp(-path.grid.horizon * fock.space.omega + 1j * (fock.space.momentum @ shift))
    return np.exp(-1j * float(xi @ shift)) * fock.gamma_contraction(w)

"""
Bounded external potentials V evaluated at path nodes.
"""

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.PotentialKind import PotentialKind


class Potential(BaseModel):
    """
    Radial potential `V(x) = v(|x|)`.

    - NONE: `V = 0`.
    - POLYNOMIAL: `v(r) = sum_i coefficients[i] r^i`, clipped to `[-cap, cap]`
      so that `V` stays bounded.
    - TABULATED: linear interpolation of `(radii, values)`, constant outside.
    """
    model_config = ConfigDict(frozen=True)

    kind: PotentialKind = Field(
        default=PotentialKind.NONE,
        title="Kind",
        description="Shape of the potential",
    )
    coefficients: list[float] = Field(
        default_factory=list,
        title="Coefficients",
        description="Polynomial coefficients in |x|, lowest order first",
        examples=[[0.0, 0.0, 0.5]],
    )
    cap: float = Field(
        default=1e3,
        title="Cap",
        description="Bound on |V| applied to polynomial potentials",

        gt=0,
    )
    radii: list[float] = Field(
        default_factory=list,
        title="Radii",
        description="Increasing radii of a tabulated potential",
    )
    values: list[float] = Field(
        default_factory=list,
        title="Values",
        description="Potential values at the tabulated radii",
    )

    @model_validator(mode="after")
    def _check_table(self) -> Self:
        if self.kind is PotentialKind.TABULATED:
            if len(self.radii) < 2 or len(self.radii) != len(self.values):
                raise ValueError("a tabulated potential needs matching radii and values")
            if np.any(np.diff(self.radii) <= 0):
                raise ValueError("tabulated radii must be strictly increasing")
        return self

    @property
    def is_zero(self) -> bool:
        return self.kind is PotentialKind.NONE or (
            self.kind is PotentialKind.POLYNOMIAL and not any(self.coefficients)
        )

    def __call__(self, x: NDArray) -> NDArray[np.float64]:
        """Evaluates `V` on positions with the space axis last."""
        r = np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=np.float64)), axis=-1)
        match self.kind:
            case PotentialKind.NONE:
                return np.zeros_like(r)
            case PotentialKind.POLYNOMIAL:
                value = np.polynomial.polynomial.polyval(r, self.coefficients or [0.0])
                return np.clip(value, -self.cap, self.cap)
            case PotentialKind.TABULATED:
                return np.interp(r, self.radii, self.values)


def integrate_potential(values: NDArray, steps: NDArray, trapezoid: bool) -> NDArray[np.float64]:
    """
    Running integral of node values, zero at the first node.

    :param values: `V` at the grid nodes, shape `(K + 1,)`.
    :param steps: Step sizes, shape `(K,)`.
    :param trapezoid: Use the trapezoid rule instead of left points.
    """
    increments = 0.5 * (values[:-1] + values[1:]) * steps if trapezoid else values[:-1] * steps
    return np.concatenate([[0.0], np.cumsum(increments)])

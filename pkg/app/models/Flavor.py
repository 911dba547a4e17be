from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class Flavor(StrEnum):
    """Discretization of stochastic sums along a path."""
    ITO_LEFT = auto()
    MIDPOINT = auto()

    @property
    def quadrature(self) -> "Quadrature":
        """Time quadrature paired with the stochastic sums."""
        from app.models.Quadrature import Quadrature

        return Quadrature.LEFT if self is Flavor.ITO_LEFT else Quadrature.TRAPEZOID

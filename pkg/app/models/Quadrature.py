from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class Quadrature(StrEnum):
    LEFT = auto()
    TRAPEZOID = auto()

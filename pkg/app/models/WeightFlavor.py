from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class WeightFlavor(StrEnum):
    """Diagonal weights M and M_a(xi) used to measure domains."""
    M = auto()
    M_A = auto()

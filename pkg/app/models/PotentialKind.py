from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class PotentialKind(StrEnum):
    """Shapes of the external potential V."""
    NONE = auto()
    POLYNOMIAL = auto()
    TABULATED = auto()

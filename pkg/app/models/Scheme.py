from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class Scheme(StrEnum):
    """Time steppers for the spin SDE."""
    SPLITTING = auto()
    EULER_MARUYAMA = auto()

from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class EstimatorMode(StrEnum):
    """
    Integrands of the fiber estimator.

    CLOSED_FORM evaluates truncation-free matrix elements, SDE_ON_TRUNCATED
    integrates the SDE on the same truncated space as the oracle.
    """
    CLOSED_FORM = auto()
    SDE_ON_TRUNCATED = auto()

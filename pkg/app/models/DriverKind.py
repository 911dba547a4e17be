"""
Defines the kinds of driving processes.
"""

from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class DriverKind(StrEnum):
    """
    Enum for driver paths.

    A reversed Brownian motion is pinned at both ends like a bridge but keeps
    the tag so that reversing it twice restores the original kind.
    """
    BROWNIAN_MOTION = auto()
    BRIDGE = auto()
    REVERSED = auto()

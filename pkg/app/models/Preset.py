"""
Defines the model presets that a run configuration can select.
"""

from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class Preset(StrEnum):
    NELSON = auto()
    NRQED = auto()
    SPIN_TOY = auto()
    FREE = auto()
    TABLE = auto()

"""
Defines the experiment commands of the command line.
"""

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum


class Command(StrEnum):
    """
    Enum for the experiment commands.

    The values are the command names typed on the command line.
    """
    FIBER_MC = "fiber-mc"
    KERNEL_MC = "kernel-mc"
    BRIDGE_MOMENTS = "bridge-moments"
    SERIES_VS_SDE = "series-vs-sde"
    REVERSAL_CHECK = "reversal-check"
    VANHOVE = "vanhove"
    SWEEP = "sweep"
    SELFTEST = "selftest"

    @property
    def uses_series(self) -> bool:
        return self in (Command.SERIES_VS_SDE, Command.SELFTEST)

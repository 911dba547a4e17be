"""
Exception hierarchy of the engine.

Every error raised on purpose by the engine derives from `EngineError`, so the
command line can map whole families to exit codes:

- `InputError` and its subclasses: bad arguments to an operation.
- `ConfigurationError`: a model or run configuration that cannot be built.
- `PreconditionError`: an operation called on a model it does not support.
- `NumericalError`: non-finite values or violated integrability guards.
"""


class EngineError(Exception):
    pass


# region input
class InputError(EngineError, ValueError):
    """Thrown if the arguments of an operation fail a basic sanity check."""
    pass


class DimensionMismatchError(InputError):
    """Thrown if two objects that must share a space do not."""

    def __init__(self, expected: int, got: int, what: str = "vector"):
        self.expected = expected
        self.got = got
        super().__init__(f"{what} has length {got}, expected {expected}")
# endregion


# region configuration
class ConfigurationError(EngineError):
    """Thrown if a model preset, mode table or run configuration is invalid."""
    pass


class DimensionCapError(ConfigurationError):
    """Thrown if a dense operator would exceed the configured dimension cap."""

    def __init__(self, dim: int, cap: int):
        self.dim = dim
        self.cap = cap
        super().__init__(f"dimension {dim} exceeds the cap {cap}")


class PreconditionError(EngineError):
    """Thrown if an operation is called on a model it is not defined for."""
    pass
# endregion


# region numerical
class NumericalError(EngineError):
    pass


class NumericalOverflowError(NumericalError):
    """Thrown if a non-finite value shows up while integrating along a path."""

    def __init__(self, node_index: int, quantity: str = "value"):
        self.node_index = node_index
        self.quantity = quantity
        super().__init__(f"non-finite {quantity} at grid node {node_index}")


class IntegrabilityViolationError(NumericalError):
    """Thrown if a per-path integrand exceeds its a-priori norm bound."""

    def __init__(self, path_index: int, value: float, bound: float):
        self.path_index = path_index
        self.value = value
        self.bound = bound
        super().__init__(
            f"path {path_index}: |integrand| = {value:.6g} exceeds bound {bound:.6g}"
        )
# endregion

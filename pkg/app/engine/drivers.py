"""
Driving processes: Brownian motion and Brownian bridges on a time grid.

Bridges are sampled exactly in law. With `Z_t = int_0^t (T - s)^{-1} dB_s`,
whose increments are independent centered Gaussians of variance
`Delta_j / ((T - t_j)(T - t_{j+1}))`, the bridge from `x0` to `y` is

    X_t = (t/T) y + ((T - t)/T) x0 + (T - t) Z_t,
    Y_t = (y - x0)/T - Z_t = (y - X_t)/(T - t),

and the endpoint is `y` exactly. Brownian increments are then defined by
`dB_j = X_{j+1} - X_j - Y_j Delta_j`, so the discrete Ito equation holds to
rounding.
"""

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import comb

from app.helpers.exceptions import InputError
from app.helpers.rng import path_stream
from app.models.DriverKind import DriverKind


# region TimeGrid
class TimeGrid(BaseModel):
    """Strictly increasing nodes `0 = t_0 < ... < t_K = T`."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    nodes: np.ndarray

    @field_validator("nodes", mode="before")
    @classmethod
    def _as_nodes(cls, value) -> NDArray[np.float64]:
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def _check_nodes(self) -> Self:
        if self.nodes.shape[0] < 2:
            raise ValueError("a time grid needs at least one step")
        if self.nodes[0] != 0.0:
            raise ValueError("a time grid starts at 0")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        return self

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "TimeGrid":
        nodes = horizon * np.arange(steps + 1) / steps
        nodes[-1] = horizon
        return cls(nodes=nodes)

    @classmethod
    def graded(cls, horizon: float, steps: int, ratio: float = 0.9) -> "TimeGrid":
        """Geometric refinement toward `T`: each step is `ratio` times the previous one."""
        if not 0 < ratio <= 1:
            raise InputError("the grading ratio must lie in (0, 1]")
        widths = ratio ** np.arange(steps)
        nodes = np.concatenate([[0.0], np.cumsum(widths)]) * (horizon / widths.sum())
        nodes[-1] = horizon
        return cls(nodes=nodes)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> NDArray[np.float64]:
        return np.diff(self.nodes)

    @property
    def size(self) -> int:
        """Number of steps `K`."""
        return int(self.nodes.shape[0] - 1)

    def reversed(self) -> "TimeGrid":
        return TimeGrid(nodes=self.horizon - self.nodes[::-1])
# endregion


# region DriverPath
class DriverPath(BaseModel):
    """
    Sampled driver on a grid.

    `positions` has shape `(K + 1, nu)`; `increments` and `drift` have shape
    `(K, nu)` and refer to the left node of each step.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: TimeGrid
    positions: np.ndarray
    increments: np.ndarray
    drift: np.ndarray
    kind: DriverKind
    start: np.ndarray
    end: np.ndarray | None = None
    seed_tag: tuple[int, int] | None = None

    @model_validator(mode="after")
    def _check_shapes(self) -> Self:
        steps = self.grid.size
        if self.positions.shape[0] != steps + 1:
            raise ValueError("positions must have one row per grid node")
        if self.increments.shape != (steps, self.positions.shape[1]):
            raise ValueError("increments must have one row per step")
        if self.drift.shape != self.increments.shape:
            raise ValueError("drift samples must have one row per step")
        return self

    @property
    def space_dim(self) -> int:
        return int(self.positions.shape[1])

    @property
    def displacements(self) -> NDArray[np.float64]:
        return np.diff(self.positions, axis=0)

    def sde_residual(self) -> float:
        """`max_j |X_{j+1} - X_j - dB_j - Y_j Delta_j|`."""
        residual = self.displacements - self.increments - self.drift * self.grid.steps[:, None]
        return float(np.max(np.abs(residual))) if residual.size else 0.0


def _bridge_fields(grid: TimeGrid, positions: NDArray, end: NDArray) -> tuple[NDArray, NDArray]:
    remaining = grid.horizon - grid.nodes[:-1]
    drift = (end - positions[:-1]) / remaining[:, None]
    increments = np.diff(positions, axis=0) - drift * grid.steps[:, None]
    return increments, drift


def sample_bm(
    x0: NDArray,
    grid: TimeGrid,
    rng: np.random.Generator,
    antithetic: bool = False,
    seed_tag: tuple[int, int] | None = None,
) -> DriverPath:
    """Brownian motion from `x0`: i.i.d. increments with covariance `Delta_j I`."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    normals = rng.standard_normal((grid.size, x0.shape[0]))
    if antithetic:
        normals = -normals
    increments = normals * np.sqrt(grid.steps)[:, None]
    positions = np.vstack([x0, x0 + np.cumsum(increments, axis=0)])
    return DriverPath(
        grid=grid,
        positions=positions,
        increments=increments,
        drift=np.zeros_like(increments),
        kind=DriverKind.BROWNIAN_MOTION,
        start=x0,
        seed_tag=seed_tag,
    )


def sample_bridge(
    x0: NDArray,
    y: NDArray,
    grid: TimeGrid,
    rng: np.random.Generator,
    antithetic: bool = False,
    seed_tag: tuple[int, int] | None = None,
) -> DriverPath:
    """
    Brownian bridge from `x0` at time 0 to `y` at the grid horizon.

    Only `K - 1` Gaussian vectors are drawn; the last node is pinned to `y`.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    horizon = grid.horizon
    interior = grid.nodes[1:-1]
    normals = rng.standard_normal((grid.size - 1, x0.shape[0]))
    if antithetic:
        normals = -normals
    before = horizon - grid.nodes[:-2]
    variances = grid.steps[:-1] / (before * (horizon - interior))
    z = np.cumsum(normals * np.sqrt(variances)[:, None], axis=0)

    positions = np.empty((grid.size + 1, x0.shape[0]))
    positions[0] = x0
    positions[1:-1] = (
        (interior / horizon)[:, None] * y
        + ((horizon - interior) / horizon)[:, None] * x0
        + (horizon - interior)[:, None] * z
    )
    positions[-1] = y
    drift = (y - x0) / horizon - np.vstack([np.zeros_like(x0), z])
    increments = np.diff(positions, axis=0) - drift * grid.steps[:, None]
    return DriverPath(
        grid=grid,
        positions=positions,
        increments=increments,
        drift=drift,
        kind=DriverKind.BRIDGE,
        start=x0,
        end=y,
        seed_tag=seed_tag,
    )


def sample_path(
    kind: DriverKind,
    x0: NDArray,
    grid: TimeGrid,
    master_seed: int,
    path_index: int,
    y: NDArray | None = None,
    antithetic: bool = False,
) -> DriverPath:
    """Draws path `path_index` of a run from its own counter-based stream."""
    rng = path_stream(master_seed, path_index)
    tag = (master_seed, path_index)
    if kind is DriverKind.BROWNIAN_MOTION:
        return sample_bm(x0, grid, rng, antithetic, tag)
    if y is None:
        raise InputError("a bridge needs an endpoint")
    return sample_bridge(x0, y, grid, rng, antithetic, tag)


def reverse_path(path: DriverPath) -> DriverPath:
    """
    Time reversal `X'_s = X_{T - s}`.

    A bridge from `x` to `y` becomes a bridge from `y` to `x`; a Brownian path is
    tagged REVERSED (it ends at its former start) and reversing it again gives
    back a Brownian path.
    """
    grid = path.grid.reversed()
    positions = path.positions[::-1].copy()
    start = positions[0].copy()
    end = positions[-1].copy()
    if path.kind is DriverKind.REVERSED:
        increments = np.diff(positions, axis=0)
        return path.model_copy(update={
            "grid": grid,
            "positions": positions,
            "increments": increments,
            "drift": np.zeros_like(increments),
            "kind": DriverKind.BROWNIAN_MOTION,
            "start": start,
            "end": None,
        })
    increments, drift = _bridge_fields(grid, positions, end)
    kind = DriverKind.BRIDGE if path.kind is DriverKind.BRIDGE else DriverKind.REVERSED
    return path.model_copy(update={
        "grid": grid,
        "positions": positions,
        "increments": increments,
        "drift": drift,
        "kind": kind,
        "start": start,
        "end": end,
    })


def coarsen(path: DriverPath, factor: int) -> DriverPath:
    """The same path observed on every `factor`-th node."""
    if factor < 1 or path.grid.size % factor:
        raise InputError("the coarsening factor must divide the number of steps")
    grid = TimeGrid(nodes=path.grid.nodes[::factor])
    positions = path.positions[::factor].copy()
    if path.kind is DriverKind.BROWNIAN_MOTION:
        increments = np.diff(positions, axis=0)
        drift = np.zeros_like(increments)
    else:
        increments, drift = _bridge_fields(grid, positions, positions[-1])
    return path.model_copy(update={
        "grid": grid,
        "positions": positions,
        "increments": increments,
        "drift": drift,
    })


def truncate(path: DriverPath, t_idx: int) -> DriverPath:
    """The same path stopped at node `t_idx`."""
    if not 1 <= t_idx <= path.grid.size:
        raise InputError("a truncated path needs at least one step")
    if t_idx == path.grid.size:
        return path
    positions = path.positions[: t_idx + 1].copy()
    return path.model_copy(update={
        "grid": TimeGrid(nodes=path.grid.nodes[: t_idx + 1]),
        "positions": positions,
        "increments": path.increments[:t_idx].copy(),
        "drift": path.drift[:t_idx].copy(),
        "end": None if path.end is None else positions[-1].copy(),
    })


def antithetic(path: DriverPath) -> DriverPath:
    """Mirror image `B -> -B` of a sampled path; bridges keep both endpoints."""
    if path.kind is DriverKind.BRIDGE:
        nodes = path.grid.nodes
        straight = path.start + np.outer(nodes / path.grid.horizon, path.end - path.start)
        positions = 2 * straight - path.positions
        increments, drift = _bridge_fields(path.grid, positions, path.end)
        return path.model_copy(update={"positions": positions, "increments": increments, "drift": drift})
    if path.kind is DriverKind.REVERSED:
        raise InputError("mirror a path before reversing it")
    positions = 2 * path.start - path.positions
    return path.model_copy(update={"positions": positions, "increments": -path.increments})
# endregion


# region moments
def bridge_drift_moment(p: int, t: float, horizon: float, dist: float, nu: int) -> float:
    """
    Exact `E[|Y_t|^{2p}]` for the drift of a Brownian bridge.

    Sum over `l = 0..p` of
    `[(2p-2+nu)!! / (2(p-l)-2+nu)!!] C(p, l) (dist/T)^{2(p-l)} (t / (T (T - t)))^l`,
    where the double-factorial ratio is `prod_{i = p-l+1}^{p} (2i - 2 + nu)`.

    :param p: Moment order, positive.
    :type p: int
    :param t: Time in `[0, T)`.
    :type t: float
    :param horizon: Bridge horizon `T`.
    :type horizon: float
    :param dist: Distance `|x0 - y|` of the endpoints.
    :type dist: float
    :param nu: Space dimension.
    :type nu: int
    :return: The moment.
    :rtype: float
    :raises InputError: if `t` is outside `[0, T)` or `p < 1`
    """
    if p < 1:
        raise InputError("the moment order must be positive")
    if not 0 <= t < horizon:
        raise InputError("the drift moment needs 0 <= t < T")
    variance_rate = t / (horizon * (horizon - t))
    total = 0.0
    for ell in range(p + 1):
        ratio = float(np.prod([2 * i - 2 + nu for i in range(p - ell + 1, p + 1)]))
        total += ratio * comb(p, ell, exact=True) * (dist / horizon) ** (2 * (p - ell)) * variance_rate ** ell
    return total
# endregion


# region dumps
def dump_paths(paths: list[DriverPath]) -> pd.DataFrame:
    """Long table with columns `path_id, j, t_j, X_1..X_nu, dB_1..dB_nu`."""
    frames = []
    for path_id, path in enumerate(paths):
        frame = pd.DataFrame({"path_id": path_id, "j": np.arange(path.grid.size + 1), "t_j": path.grid.nodes})
        for axis in range(path.space_dim):
            frame[f"X_{axis + 1}"] = path.positions[:, axis]
        for axis in range(path.space_dim):
            frame[f"dB_{axis + 1}"] = np.append(path.increments[:, axis], np.nan)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)
# endregion

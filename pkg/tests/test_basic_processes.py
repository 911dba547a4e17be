import numpy as np
import pytest

from app.engine.basic_processes import (
    contraction_weight,
    dump_trace,
    integrate,
    nelson_as_operator,
    nelson_trace,
    stratonovich_ksum,
    u_minus_row,
)
from app.engine.drivers import TimeGrid, sample_bm, sample_bridge
from app.engine.fock import TruncatedFock
from app.engine.modespace import CouplingFamily, ModeSpace, free_preset
from app.engine.potentials import Potential, integrate_potential
from app.helpers.exceptions import InputError
from app.models.Flavor import Flavor
from app.models.PotentialKind import PotentialKind


def _plane_wave_family() -> CouplingFamily:
    """Two mirrored modes in one dimension with a real, position-dependent `G`."""
    space = ModeSpace.from_modes([1.0, 1.0], [1.0, 1.0], [[0.7], [-0.7]])
    return CouplingFamily(
        space=space,
        G0=np.array([[0.4, 0.4]]),
        F0=np.zeros((1, 2)),
        sigma=-np.ones((1, 1, 1)),
        covariant=True,
    )


def test_free_field_has_no_basic_processes(rng, two_modes: ModeSpace):
    """`G = 0` leaves only the phase `-i xi.(X_t - X_0)` in `u`."""
    path = sample_bm(np.array([0.2]), TimeGrid.uniform(1.0, 20), rng)

    trace = integrate(path, free_preset(two_modes), xi=np.array([1.5]))

    assert not np.any(trace.u_plus)
    assert not np.any(trace.k_squared)
    assert np.allclose(trace.u, -1.5j * (path.positions[:, 0] - 0.2))
    assert trace.u_reflected(20) == pytest.approx(1.5j * (path.positions[-1, 0] - 0.2))


def test_xi_must_match_the_dimension(rng, two_modes: ModeSpace):
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 4), rng)

    with pytest.raises(InputError):
        integrate(path, free_preset(two_modes), xi=np.zeros(2))


def test_u_plus_matches_the_weighted_sum(rng):
    """`U+_n = sum_l w_{l, n} b_l` and `U-(t_j, t) = sum_{l >= j} w_bar_{j, l} b_l`."""
    family = _plane_wave_family()
    path = sample_bridge(np.zeros(1), np.array([0.6]), TimeGrid.uniform(1.5, 12), rng)
    trace = integrate(path, family)
    last = path.grid.size

    expected_plus = sum(contraction_weight(path, family.space, l, last)[1] * trace.before[l] for l in range(last))
    rows = u_minus_row(trace, 9)
    expected_minus = sum(contraction_weight(path, family.space, 3, l)[0] * trace.before[l] for l in range(3, 9))

    assert np.allclose(trace.u_plus[last], expected_plus)
    assert np.allclose(rows[3], expected_minus)
    assert not np.any(rows[9])


def test_k_squared_matches_the_double_sum(rng):
    family = _plane_wave_family()
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 10), rng)
    trace = integrate(path, family)
    space = family.space
    b = trace.before

    expected = sum(float(np.real(space.inner_product(b[l], b[l]))) for l in range(10))
    for l in range(10):
        for r in range(l + 1, 10):
            _, w = contraction_weight(path, space, l, r)
            expected += 2 * float(np.real(space.inner_product(w * b[l], b[r])))

    assert trace.k_squared[-1] == pytest.approx(expected)
    assert np.all(trace.k_squared >= 0)


def test_midpoint_flavor_splits_each_step(rng):
    family = _plane_wave_family()
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 6), rng)

    trace = integrate(path, family, flavor=Flavor.MIDPOINT)

    G = family.G(path.positions)[:, 0]
    assert np.allclose(trace.before, 0.5 * G[:-1] * path.displacements)
    assert np.allclose(trace.after, 0.5 * G[1:] * path.displacements)


def test_potential_enters_u(rng, two_modes: ModeSpace):
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 8), rng)
    potential = Potential(kind=PotentialKind.POLYNOMIAL, coefficients=[0.0, 0.0, 0.5])

    trace = integrate(path, free_preset(two_modes), potential=potential, flavor=Flavor.MIDPOINT)

    values = 0.5 * path.positions[:, 0] ** 2
    assert np.allclose(trace.potential_integral, integrate_potential(values, path.grid.steps, trapezoid=True))
    assert np.allclose(trace.u.real, trace.potential_integral)


def test_nelson_processes_on_a_resting_mode(rng, nelson_toy):
    """Zero momentum makes `U^{N,+}` a geometric sum of `f exp(-(t - s)) Delta`."""
    _, family = nelson_toy
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 50), rng)

    trace = nelson_trace(path, family)

    delta = 0.02
    expected = 0.3 * delta * np.exp(-delta) * (1 - np.exp(-1.0)) / (1 - np.exp(-delta))
    assert trace.u_plus[-1, 0] == pytest.approx(expected)
    assert trace.nelson
    assert np.allclose(trace.u.real, -0.5 * trace.k_squared)


def test_nelson_trace_rejects_spin_couplings(rng, spin_toy):
    _, family = spin_toy
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 4), rng)

    with pytest.raises(InputError):
        nelson_trace(path, family)


def test_nelson_operator_on_the_vacuum(rng, nelson_toy):
    space, family = nelson_toy
    fock = TruncatedFock(space, 10)
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 16), rng)
    trace = nelson_trace(path, family)

    psi = nelson_as_operator(trace, fock) @ fock.vacuum()

    # exp(-a(U-)) fixes the vacuum, exp(-a^dagger(U+)) adds bosons above it
    assert psi[0] == pytest.approx(np.exp(-trace.u_reflected(16)))
    assert psi[1] == pytest.approx(-np.exp(-trace.u_reflected(16)) * trace.u_plus[16, 0])


def test_nelson_operator_needs_a_nelson_trace(rng, nelson_toy):
    space, _ = nelson_toy
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 4), rng)
    trace = integrate(path, free_preset(space))

    with pytest.raises(InputError):
        nelson_as_operator(trace, TruncatedFock(space, 3))


def test_midpoint_sum_is_empty_without_g(rng, two_modes: ModeSpace):
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 8), rng)

    assert stratonovich_ksum(path, free_preset(two_modes), 2, 6).is_empty
    assert stratonovich_ksum(path, _plane_wave_family(), 4, 4).is_empty
    assert stratonovich_ksum(path, _plane_wave_family(), 3, 3).pair(stratonovich_ksum(path, _plane_wave_family(), 0, 8)) == 0


def test_midpoint_sum_collects_the_displacement(rng):
    family = _plane_wave_family()
    family = family.model_copy(update={"covariant": False})
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 8), rng)

    record = stratonovich_ksum(path, family, 2, 7)

    assert record.vectors.shape == (6, 2)
    assert np.allclose(record.vectors.sum(axis=0), 0.4 * (path.positions[7, 0] - path.positions[2, 0]))
    assert record.norm_squared() >= 0


def test_midpoint_sum_rejects_reversed_indices(rng):
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 8), rng)

    with pytest.raises(InputError):
        stratonovich_ksum(path, _plane_wave_family(), 5, 2)


def test_dump_trace_columns(rng, nelson_toy):
    _, family = nelson_toy
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 5), rng)

    table = dump_trace(nelson_trace(path, family))

    assert list(table.columns) == ["t_j", "u_re", "u_im", "Ksq", "Uplus_norm", "V_integral"]
    assert len(table) == 6

import numpy as np
import pytest

from app.engine.basic_processes import integrate
from app.engine.drivers import TimeGrid, sample_bm, sample_bridge
from app.engine.fock import TruncatedFock
from app.engine.modespace import CouplingFamily, ModeSpace, free_preset
from app.engine.potentials import Potential
from app.engine.scalar_kernel import (
    as_operator,
    free_field_operator,
    matrix_element,
    reversal_check,
    sample_at,
    truncation_tolerance,
)
from app.helpers.exceptions import InputError
from app.models.Flavor import Flavor
from app.models.PotentialKind import PotentialKind


@pytest.fixture(name="plane_wave")
def plane_wave_fixture() -> CouplingFamily:
    space = ModeSpace.from_modes([1.0, 1.0, 0.5], [1.0, 1.0, 2.0], [[0.7], [-0.7], [0.0]])
    return CouplingFamily(
        space=space,
        G0=np.array([[0.3, 0.3, 0.2]]),
        F0=np.zeros((1, 3)),
        sigma=-np.ones((1, 1, 1)),
        covariant=True,
    )


def test_free_field_matrix_element(rng):
    """With `t = ln 2`, `omega = 1` and `g = h = 1` the element is `exp(1/2)`."""
    space = ModeSpace.from_modes([1.0], [1.0], [[0.0]])
    path = sample_bm(np.zeros(1), TimeGrid.uniform(np.log(2.0), 10), rng)
    sample = sample_at(integrate(path, free_preset(space)))

    value = matrix_element(sample, np.ones(1), np.ones(1))

    assert value == pytest.approx(np.exp(0.5))


def test_truncated_operator_matches_closed_form(rng, plane_wave: CouplingFamily):
    fock = TruncatedFock(plane_wave.space, 8)
    path = sample_bridge(np.zeros(1), np.array([0.4]), TimeGrid.uniform(1.0, 16), rng)
    sample = sample_at(integrate(path, plane_wave, xi=np.array([0.5])))
    g = np.array([0.2, 0.1j, 0.15])
    h = np.array([0.1, -0.2, 0.05j])

    truncated = np.vdot(fock.exp_vector(g).vector, as_operator(sample, fock) @ fock.exp_vector(h).vector)
    exact = matrix_element(sample, g, h)

    assert abs(truncated - exact) <= truncation_tolerance(sample, fock, g, h) + 1e-10


def test_kernel_is_bounded_without_potential(rng, plane_wave: CouplingFamily):
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 12), rng)
    sample = sample_at(integrate(path, plane_wave), 7)

    assert sample.t_idx == 7
    assert sample.log_norm_bound == 0.0


def test_potential_lowers_the_norm_bound(rng, plane_wave: CouplingFamily):
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 12), rng)
    potential = Potential(kind=PotentialKind.POLYNOMIAL, coefficients=[1.0])

    sample = sample_at(integrate(path, plane_wave, potential=potential))

    assert sample.log_norm_bound == pytest.approx(-1.0)


def test_midpoint_reversal_is_exact(rng, plane_wave: CouplingFamily):
    """Running the path backwards conjugates the matrix element up to rounding."""
    path = sample_bridge(np.zeros(1), np.array([0.9]), TimeGrid.graded(1.0, 24), rng)
    g = np.array([0.3, -0.1, 0.2j])
    h = np.array([0.1j, 0.25, -0.1])
    potential = Potential(kind=PotentialKind.POLYNOMIAL, coefficients=[0.0, 0.0, 0.5])

    residual = reversal_check(path, plane_wave, g, h, xi=np.array([0.4]), potential=potential)

    assert residual < 1e-9


def test_left_point_reversal_leaves_a_residual(rng, plane_wave: CouplingFamily):
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 8), rng)
    g = np.array([0.3, -0.1, 0.2])

    residual = reversal_check(path, plane_wave, g, g, t_idx=6, flavor=Flavor.ITO_LEFT)

    assert np.isfinite(residual)
    assert residual > 1e-12


def test_free_field_operator_matches_the_dressing(rng, plane_wave: CouplingFamily):
    space = plane_wave.space
    fock = TruncatedFock(space, 4)
    path = sample_bm(np.zeros(1), TimeGrid.uniform(0.8, 6), rng)
    xi = np.array([1.2])

    dressed = as_operator(sample_at(integrate(path, free_preset(space), xi=xi)), fock)

    assert np.allclose(free_field_operator(fock, path, xi), dressed)


def test_free_field_operator_checks_dimensions(rng, plane_wave: CouplingFamily):
    path = sample_bm(np.zeros(2), TimeGrid.uniform(1.0, 4), rng)

    with pytest.raises(InputError):
        free_field_operator(TruncatedFock(plane_wave.space, 2), path)

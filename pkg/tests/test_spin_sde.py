import numpy as np
import pytest

from app.engine.drivers import TimeGrid, sample_bm, sample_bridge
from app.engine.fock import TruncatedFock
from app.engine.modespace import free_preset
from app.engine.potentials import Potential
from app.engine.scalar_kernel import free_field_operator
from app.engine.spin_sde import (
    GeneratorProvider,
    build_generators,
    expected_splitting_step,
    integrate_sde,
    integrated_operator,
    lambda_bound,
    pathwise_adjoint_check,
    spin_fock_state,
)
from app.helpers.exceptions import DimensionMismatchError
from app.models.PotentialKind import PotentialKind
from app.models.Scheme import Scheme


def test_free_splitting_is_exact(rng, two_modes):
    """Without couplings the splitting product is `exp(-i xi.(X_t - X_0)) Gamma(exp(-t omega))`."""
    fock = TruncatedFock(two_modes, 4)
    provider = GeneratorProvider(free_preset(two_modes), np.array([0.8]), fock)
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 10), rng)

    operator = integrated_operator(path, provider)

    assert np.allclose(operator, free_field_operator(fock, path, np.array([0.8])))


def test_generators_are_hermitian_below_the_top(spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 4, spin_dim=2)

    gens = build_generators(family, np.array([0.3]), np.zeros(1), fock)

    assert gens.dim == 2 * fock.dim
    assert gens.hermiticity_defect(fock) < 1e-12
    assert np.allclose(gens.H_full - gens.R, np.kron(np.eye(2), 0.5 * gens.v_squared()))


def test_generators_check_dimensions(spin_toy):
    space, family = spin_toy

    with pytest.raises(DimensionMismatchError):
        build_generators(family, np.zeros(2), np.zeros(1), TruncatedFock(space, 2, spin_dim=2))


def test_lambda_bound_for_nelson(nelson_toy):
    """`Lambda = |omega^{-1/2} f|` for a scalar model."""
    _, family = nelson_toy

    assert lambda_bound(family, np.zeros(1)) == pytest.approx(0.3)


def test_provider_reuses_fixed_generators(spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 3, spin_dim=2)
    provider = GeneratorProvider(family, np.zeros(1), fock)

    assert provider(np.array([0.1])) is provider(np.array([2.0]))
    assert provider.step_cache() is provider.step_cache()


def test_provider_adds_the_potential(spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 3, spin_dim=2)
    potential = Potential(kind=PotentialKind.POLYNOMIAL, coefficients=[0.5])
    provider = GeneratorProvider(family, np.zeros(1), fock, potential)

    gens = provider(np.array([1.0]))

    assert gens.potential_value == 0.5
    assert np.allclose(gens.field_part, provider(np.array([1.0])).R - 0.5 * np.eye(provider.dim))


def test_splitting_respects_the_norm_bound(rng, spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 5, spin_dim=2)
    provider = GeneratorProvider(family, np.array([0.4]), fock)
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 20), rng)
    eta = spin_fock_state([1.0, 0.0], fock.vacuum())

    result = integrate_sde(path, provider, eta)

    assert result.log_growth <= result.log_bound + 1e-9
    assert result.scheme is Scheme.SPLITTING


def test_euler_maruyama_tracks_the_splitting(rng, spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 3, spin_dim=2)
    provider = GeneratorProvider(family, np.array([0.2]), fock)
    path = sample_bm(np.zeros(1), TimeGrid.uniform(0.5, 2000), rng)
    eta = spin_fock_state([0.6, 0.8], fock.vacuum())

    splitting = integrate_sde(path, provider, eta).final
    euler = integrate_sde(path, provider, eta, Scheme.EULER_MARUYAMA).final

    assert np.linalg.norm(splitting - euler) < 0.05


def test_initial_data_must_fit(spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 2, spin_dim=2)
    provider = GeneratorProvider(family, np.zeros(1), fock)
    path = sample_bm(np.zeros(1), TimeGrid.uniform(1.0, 4), np.random.default_rng(0))

    with pytest.raises(DimensionMismatchError):
        integrate_sde(path, provider, fock.vacuum())


def test_reversed_path_gives_the_adjoint(rng, spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 3, spin_dim=2)
    provider = GeneratorProvider(family, np.array([0.5]), fock)
    path = sample_bridge(np.zeros(1), np.array([0.3]), TimeGrid.uniform(1.0, 12), rng)

    assert pathwise_adjoint_check(path, provider) < 1e-10
    assert pathwise_adjoint_check(path, provider, t_idx=5) < 1e-10


def test_expected_step_damps_the_free_field(two_modes):
    fock = TruncatedFock(two_modes, 3)
    gens = build_generators(free_preset(two_modes), np.array([1.0]), np.zeros(1), fock)

    step = expected_splitting_step(gens, 0.1)

    expected = np.exp(-0.05) * fock.gamma_contraction(np.exp(-0.1 * two_modes.omega))
    assert np.allclose(step, expected)

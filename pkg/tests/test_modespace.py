from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from app.engine.modespace import (
    ModeSpace,
    free_preset,
    load_mode_table,
    nelson_preset,
    nrqed_preset,
    polarization_frame,
)
from app.helpers.exceptions import ConfigurationError, DimensionMismatchError

K_GRID = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0.5, 0.5, 0.5], [-0.5, -0.5, -0.5]])


def test_inner_product_is_weighted(two_modes: ModeSpace):
    """`<f, g> = sum_k mu_k conj(f_k) g_k` with weights `(1, 0.5)`."""
    assert two_modes.inner_product([1, 0], [0, 1]) == 0
    assert two_modes.inner_product([1, 1], [1, 2]) == 2
    assert two_modes.inner_product([1j, 0], [1, 0]) == -1j


def test_weighted_norm(two_modes: ModeSpace):
    assert two_modes.norm([0, 1]) == pytest.approx(1 / np.sqrt(2))
    assert two_modes.weighted_norm([0, 1], kappa=[1.0, 4.0]) == pytest.approx(np.sqrt(2))


def test_inner_product_broadcasts(two_modes: ModeSpace, faker):
    stack = np.stack([faker.mode_vector() for _ in range(4)])
    g = faker.mode_vector()

    values = two_modes.inner_product(stack, g)

    assert values.shape == (4,)
    assert values[2] == pytest.approx(two_modes.inner_product(stack[2], g))


def test_wrong_length_is_rejected(two_modes: ModeSpace):
    with pytest.raises(DimensionMismatchError) as error:
        two_modes.inner_product([1, 0, 0], [1, 0])

    assert error.value.expected == 2
    assert error.value.got == 3


def test_conjugation_is_an_involution(faker):
    """Applying the conjugation twice gives back the vector on a mirrored grid."""
    space = ModeSpace.from_modes([1.0, 1.0, 2.0], [1.0, 1.0, 3.0], [[1.0], [-1.0], [0.0]])
    f = faker.mode_vector(count=3)

    assert np.array_equal(space.involution, [1, 0, 2])
    assert np.allclose(space.apply_conjugation(space.apply_conjugation(f)), f)


def test_asymmetric_modes_are_rejected():
    with pytest.raises(ConfigurationError):
        ModeSpace.from_modes([1.0, 1.0], [1.0, 1.0], [[1.0], [2.0]])


def test_nonpositive_weight_is_rejected():
    with pytest.raises(ValidationError):
        ModeSpace.from_modes([1.0, 0.0], [1.0, 1.0], [[0.0], [0.0]])


def test_polarization_frame_is_orthonormal_and_transverse():
    eps1, eps2 = polarization_frame(K_GRID, np.array([0.0, 0.0, 1.0]))

    assert np.allclose(np.sum(eps1 * K_GRID, axis=1), 0)
    assert np.allclose(np.sum(eps2 * K_GRID, axis=1), 0)
    assert np.allclose(np.sum(eps1 * eps2, axis=1), 0)
    assert np.allclose(np.linalg.norm(eps1, axis=1), 1)
    assert np.allclose(eps1[1], -eps1[0])
    assert np.allclose(eps2[1], eps2[0])


def test_nrqed_preset_is_divergence_free():
    """Transverse polarizations give `q = 0` and `F = -(i/2) k x G` at every point."""
    space, family = nrqed_preset(cutoff=2.0, k_grid=K_GRID, weights=np.ones(6), alpha=1 / 137, axis=None)
    x = np.array([0.3, -0.2, 1.1])

    assert space.mode_count == 12
    assert family.spin_dim == 2
    assert family.field_count == 3
    assert np.allclose(family.q(x), 0)
    expected_F = (-0.5j * np.cross(space.momentum, family.G(x).T)).T
    assert np.allclose(family.F(x), expected_F)


def test_nrqed_cutoff_removes_modes():
    _, family = nrqed_preset(cutoff=0.9, k_grid=K_GRID, weights=np.ones(6), alpha=1 / 137)

    # only |k| = sqrt(0.75) lies below the cutoff
    assert not np.any(family.G0[:, :8])
    assert np.any(family.G0[:, 8:])


def test_nrqed_grid_must_be_symmetric():
    with pytest.raises(ConfigurationError):
        nrqed_preset(cutoff=2.0, k_grid=K_GRID[:3], weights=np.ones(3), alpha=0.01)


def test_nelson_preset_keeps_form_factor():
    f = np.array([0.2, 0.2, 0.4], dtype=np.complex128)
    space, family = nelson_preset([1.0, 1.0, 0.5], [1.0, 1.0, 2.0], [[1.0], [-1.0], [0.0]], f)

    assert np.allclose(family.F(np.zeros(1))[0], f)
    assert np.allclose(family.G(np.array([0.7])), 0)
    assert np.allclose(family.F(np.array([0.5]))[0], np.exp(-1j * 0.5 * space.momentum[:, 0]) * f)
    assert family.spin_dim == 1


def test_nelson_form_factor_must_be_conjugation_invariant():
    with pytest.raises(ConfigurationError):
        nelson_preset([1.0, 1.0], [1.0, 1.0], [[1.0], [-1.0]], np.array([0.2, 0.3 + 0j]))


def test_scaled_and_free_couplings(spin_toy):
    space, family = spin_toy

    assert np.allclose(family.scaled(2.0).F0, 2.0 * family.F0)
    assert not np.any(family.without_matter_coupling().F0)
    assert not np.any(free_preset(space, spin_dim=2).spin_coupling(np.zeros(1)))


def test_load_mode_table(tmp_path):
    table = tmp_path / "modes.csv"
    table.write_text(
        "mode_id,mu,omega,m_1,F1_re,F1_im\n"
        "0,1.0,1.0,1.0,0.3,0.0\n"
        "1,1.0,1.0,-1.0,0.3,0.0\n"
    )

    space, family = load_mode_table(table)

    assert space.mode_count == 2
    assert family is not None
    assert np.allclose(family.F0, [[0.3, 0.3]])


def test_shipped_mode_table():
    space, family = load_mode_table(Path(__file__).parents[1] / "data" / "tables" / "nelson_triplet.csv")

    assert space.mode_count == 3
    assert np.allclose(space.momentum[:, 0], [0.5, -0.5, 0.0])
    assert np.allclose(family.F0, [[0.3, 0.3, 0.2]])

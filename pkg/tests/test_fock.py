import numpy as np
import pytest

from app.engine.fock import TruncatedFock, compositions, fock_dimension, lift
from app.engine.modespace import ModeSpace
from app.helpers.exceptions import DimensionCapError, InputError


def test_dimension_and_basis_order(fock: TruncatedFock):
    """Vacuum first, then the one-boson states in mode order."""
    assert fock_dimension(2, 6) == 28
    assert fock.dim == 28
    assert fock.basis[0].tolist() == [0, 0]
    assert fock.basis[1].tolist() == [1, 0]
    assert fock.basis[2].tolist() == [0, 1]
    assert len(list(compositions(3, 2))) == 4


def test_dimension_cap(two_modes: ModeSpace):
    with pytest.raises(DimensionCapError) as error:
        TruncatedFock(two_modes, 6, spin_dim=2, cap=40)

    assert error.value.dim == 56


def test_negative_cutoff_is_rejected(two_modes: ModeSpace):
    with pytest.raises(InputError):
        TruncatedFock(two_modes, -1)


def test_creation_is_adjoint_of_annihilation(fock: TruncatedFock, faker):
    f = faker.mode_vector()
    psi = np.random.default_rng(3).standard_normal(fock.dim) + 0j
    chi = np.random.default_rng(4).standard_normal(fock.dim) + 0j

    lhs = np.vdot(chi, fock.creation(f) @ psi)
    rhs = np.vdot(fock.annihilation(f) @ chi, psi)

    assert lhs == pytest.approx(rhs)


def test_canonical_commutation_below_top_sector(fock: TruncatedFock, faker):
    """`[a(f), a^dagger(g)] = <f, g>` on every sector below `N`."""
    f, g = faker.mode_vector(), faker.mode_vector()
    commutator = fock.annihilation(f) @ fock.creation(g) - fock.creation(g) @ fock.annihilation(f)
    mask = fock.sector_mask(1)

    expected = fock.space.inner_product(f, g) * np.eye(fock.dim)

    assert np.allclose(commutator[np.ix_(mask, mask)], expected[np.ix_(mask, mask)])


def test_exp_vector_of_zero_is_vacuum(fock: TruncatedFock):
    zeta = fock.exp_vector(np.zeros(2))

    assert np.allclose(zeta.vector, fock.vacuum())
    assert zeta.tail == 0.0


def test_exp_vector_overlap():
    """`<zeta(g), zeta(h)> = exp(<g, h>)`, here `exp(0.25)` up to the tail."""
    space = ModeSpace.from_modes([1.0], [1.0], [[0.0]])
    fock = TruncatedFock(space, 12)
    g = fock.exp_vector(np.array([0.5]))
    h = fock.exp_vector(np.array([0.5]))

    assert np.vdot(g.vector, h.vector) == pytest.approx(np.exp(0.25), abs=1e-10)
    assert h.tail < 1e-10


def test_annihilation_eigenvector(fock: TruncatedFock, faker):
    """`a(f) zeta(h) = i <f, h> zeta(h)` on sectors below `N`."""
    f, h = faker.mode_vector(), faker.mode_vector()
    zeta = fock.exp_vector(h).vector
    mask = fock.sector_mask(1)

    lhs = fock.annihilation(f) @ zeta
    rhs = 1j * fock.space.inner_product(f, h) * zeta

    assert np.allclose(lhs[mask], rhs[mask])


def test_second_quantization_is_multiplicative(fock: TruncatedFock):
    j = np.array([0.5, -0.3j])
    k = np.array([0.2 + 0.1j, 0.9])

    product = fock.gamma_contraction(j) @ fock.gamma_contraction(k)

    assert np.allclose(product, fock.gamma_contraction(j * k))
    assert np.allclose(fock.gamma_contraction(1.0), np.eye(fock.dim))


def test_second_quantization_needs_a_contraction(fock: TruncatedFock):
    with pytest.raises(InputError):
        fock.gamma_contraction(np.array([1.5, 0.0]))


def test_number_operator_counts_bosons(fock: TruncatedFock):
    assert np.allclose(np.diag(fock.number_operator()).real, fock.sectors)
    assert np.allclose(np.diag(fock.d_gamma(np.array([1.0, 2.0]))).real, fock.basis @ [1.0, 2.0])


def test_weyl_of_zero_is_identity(fock: TruncatedFock, faker):
    assert np.allclose(fock.weyl(np.zeros(2)), np.eye(fock.dim))
    weyl = fock.weyl(faker.mode_vector())
    assert np.allclose(weyl.conj().T @ weyl, np.eye(fock.dim))


def test_dressing_maps_exp_vectors_to_exp_vectors(faker):
    """Normal-ordered dressings act as `exp(-u - <a_minus, h>) zeta(j h + a_plus)`."""
    space = ModeSpace.from_modes([1.0], [1.0], [[0.0]])
    fock = TruncatedFock(space, 24)
    h = np.array([0.3 + 0.1j])
    a_plus, a_minus, j = np.array([0.2j]), np.array([0.1 - 0.2j]), np.array([0.6])
    u = 0.25 + 0.1j

    dressed = fock.normal_ordered_dressing(u, a_plus, j, a_minus) @ fock.exp_vector(h).vector
    expected = np.exp(-u - space.inner_product(a_minus, h)) * fock.exp_vector(j * h + a_plus).vector

    assert np.allclose(dressed[:12], expected[:12], atol=1e-9)


def test_taylor_error_bound_vanishes_for_zero_shift(fock: TruncatedFock):
    assert fock.taylor_error_bound(np.array([0.2, 0.1]), np.zeros(2), order=3) == 0.0
    assert fock.taylor_error_bound(np.array([0.2, 0.1]), np.array([0.3, 0.1]), order=8) < 1e-3


def test_relative_bounds_hold(fock: TruncatedFock, rng):
    report = fock.relative_bound_report(np.array([0.4, 0.2 + 0j]), rng, samples=40)

    assert set(report["bound"]) == {"rb-a", "rb-ad", "rb-vp1", "rb-vp2", "qfb-vp"}
    assert (report["max_ratio"] <= 1 + 1e-9).all()


def test_json_keeps_the_basis(fock: TruncatedFock, faker):
    zeta = fock.exp_vector(faker.mode_vector()).vector

    payload = fock.to_json(zeta)

    assert payload["basis"]["order"] == "graded-lexicographic-descending"
    assert np.allclose(fock.from_json(payload), zeta)
    with pytest.raises(InputError):
        TruncatedFock(fock.space, 3).from_json(payload)


def test_lift_puts_spin_outermost(fock: TruncatedFock):
    spin = np.diag([1.0, -1.0])
    number = fock.number_operator()

    lifted = lift(spin, number)

    assert lifted.shape == (2 * fock.dim, 2 * fock.dim)
    assert np.allclose(lifted[fock.dim:, fock.dim:], -number)

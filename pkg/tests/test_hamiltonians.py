import numpy as np
import pytest

from app.engine.fock import TruncatedFock
from app.engine.hamiltonians import (
    OracleSemigroup,
    domain_weight,
    energy_vs_truncation,
    exact_semigroup,
    is_hermitian,
    relative_bound_sweep,
    spectrum_table,
    truncated_ground_energy,
    van_hove_energy,
)
from app.engine.spin_sde import build_generators
from app.helpers.exceptions import InputError
from app.models.WeightFlavor import WeightFlavor


def test_van_hove_closed_form():
    """`-|omega^{-1/2} f|^2` with `omega = 1` and `|f|^2 = 1/2`."""
    assert van_hove_energy([1.0], [np.sqrt(0.5)]) == pytest.approx(-0.5)
    assert van_hove_energy([1.0, 2.0], [1.0, 1.0], mu=[1.0, 0.5]) == pytest.approx(-1.25)


def test_van_hove_needs_positive_omega():
    with pytest.raises(InputError):
        van_hove_energy([0.0], [1.0])


def test_truncated_ground_energy_converges():
    energy = truncated_ground_energy([1.0], [np.sqrt(0.5)], 14)

    assert energy == pytest.approx(-0.5, abs=1e-9)


def test_ground_energy_decreases_with_the_cutoff():
    table = energy_vs_truncation([1.0, 1.5], [0.4, 0.3], [1, 2, 4, 8])

    assert list(table.columns) == ["N", "ground_energy", "closed_form", "gap"]
    assert (table["ground_energy"].diff().dropna() <= 1e-12).all()
    assert (table["gap"] >= -1e-12).all()


def test_semigroup_property(spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 4, spin_dim=2)
    semigroup = OracleSemigroup(build_generators(family, np.array([0.2]), np.zeros(1), fock).H_full)

    assert semigroup.hermitian
    assert np.allclose(semigroup.at(0.3) @ semigroup.at(0.5), semigroup.at(0.8))
    assert np.allclose(semigroup.at(0.0), np.eye(semigroup.dim))


def test_eigh_and_expm_agree(spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 3, spin_dim=2)
    gens = build_generators(family, np.array([0.2]), np.zeros(1), fock)
    semigroup = OracleSemigroup(gens.H_full)

    assert np.allclose(semigroup.at(0.7, "eigh"), semigroup.at(0.7, "expm"))
    assert np.allclose(exact_semigroup(gens, 0.7), semigroup.at(0.7))


def test_semigroup_rejects_negative_times():
    with pytest.raises(InputError):
        OracleSemigroup(np.eye(2)).at(-1.0)


def test_non_hermitian_generators_use_expm():
    H = np.array([[1.0, 1.0], [0.0, 2.0]])
    semigroup = OracleSemigroup(H)

    assert not semigroup.hermitian
    with pytest.raises(InputError):
        semigroup.spectrum()
    assert abs(semigroup.at(0.5)[1, 0]) < 1e-14


def test_domain_weights_without_momentum(two_modes):
    fock = TruncatedFock(two_modes, 3)

    weight = domain_weight(fock, WeightFlavor.M)
    shifted = domain_weight(fock, WeightFlavor.M_A, xi=np.array([2.0]), a=1.5)

    expected = fock.basis @ two_modes.omega
    assert np.allclose(np.diag(weight).real, expected)
    assert np.allclose(np.diag(shifted).real, 2.0 + 1.5 * expected)
    with pytest.raises(InputError):
        domain_weight(fock, WeightFlavor.M_A, a=0.5)


def test_relative_bound_sweep_shrinks_with_a(rng, spin_toy):
    space, family = spin_toy
    fock = TruncatedFock(space, 5, spin_dim=2)
    gens = build_generators(family, np.array([0.1]), np.zeros(1), fock)

    table = relative_bound_sweep(gens, fock, rng, a_values=[1.0, 4.0], epsilons=[0.5], samples=20)

    assert len(table) == 2
    first, second = table["constant"].tolist()
    assert second <= first + 1e-12


def test_spectrum_table_is_sorted():
    table = spectrum_table(np.diag([3.0, -1.0, 2.0]).astype(np.complex128))

    assert table["eigenvalue_re"].tolist() == [-1.0, 2.0, 3.0]
    assert np.allclose(table["eigenvalue_im"], 0)
    assert is_hermitian(np.eye(3))

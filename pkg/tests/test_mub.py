import itertools

import numpy as np
import pytest

from tracking_king.mub import (
    BELL_DICTIONARY,
    COMPUTATIONAL,
    BasisLabel,
    basis_labels,
    entangled_basis,
    entangled_state,
    gf_inverse,
    mub_basis,
    mub_state,
    parse_basis_label,
    phase_root,
)
from tracking_king.numerics import density, partial_trace

PRIMES = [2, 3, 5, 7, 11]
S2 = 1 / np.sqrt(2)


def test_phase_root_qubit():
    root = phase_root(2)
    assert root.omega == 1j and root.modulus == 4


@pytest.mark.parametrize("d", [3, 5])
def test_phase_root_odd(d):
    root = phase_root(d)
    assert root.modulus == d
    assert abs(root.omega - np.exp(2j * np.pi / d)) < 1e-15
    assert abs(root.omega**d - 1) < 1e-12


def test_rejects_composite_and_large():
    for bad in (1, 4, 9, 13):
        with pytest.raises(ValueError):
            phase_root(bad)


def test_qubit_mub_vectors():
    np.testing.assert_allclose(mub_state(2, BasisLabel(0), 0), [S2, S2])
    np.testing.assert_allclose(mub_state(2, BasisLabel(1), 0), [S2, 1j * S2])
    np.testing.assert_allclose(mub_state(2, COMPUTATIONAL, 1), [0, 1])


def test_mub_state_range():
    with pytest.raises(ValueError):
        mub_state(3, BasisLabel(0), 3)


def test_entangled_examples():
    np.testing.assert_allclose(entangled_state(2, (0, 0, 0)), [S2, 0, 0, S2])
    # psi- = (|01> - |10>)/sqrt2, compared as a projector
    psi_minus = np.array([0, 1, -1, 0]) * S2
    np.testing.assert_allclose(density(entangled_state(2, (1, 1, 0))), density(psi_minus), atol=1e-15)
    expect = np.zeros(9)
    expect[[0, 5, 7]] = 1 / np.sqrt(3)  # |00>, |12>, |21>
    np.testing.assert_allclose(entangled_state(3, (0, 0, 0)), expect, atol=1e-15)


def test_global_phase_convention():
    for d in (2, 3, 5):
        for label in itertools.product(range(d), repeat=3):
            vec = entangled_state(d, label)
            first = vec[np.flatnonzero(np.abs(vec) > 1e-12)[0]]
            assert abs(first.imag) < 1e-15 and first.real > 0


@pytest.mark.parametrize("d", PRIMES)
def test_each_basis_orthonormal(d):
    for b in basis_labels(d):
        mat = np.column_stack(mub_basis(d, b))
        assert np.max(np.abs(mat.conj().T @ mat - np.eye(d))) < 1e-12


@pytest.mark.parametrize("d", PRIMES)
def test_bases_mutually_unbiased(d):
    labels = basis_labels(d)
    for b1, b2 in itertools.combinations(labels, 2):
        m1 = np.column_stack(mub_basis(d, b1))
        m2 = np.column_stack(mub_basis(d, b2))
        overlaps = np.abs(m1.conj().T @ m2) ** 2
        assert np.max(np.abs(overlaps - 1 / d)) < 1e-12


@pytest.mark.parametrize("d", [2, 3, 5, 7, 11])
def test_entangled_basis_complete(d):
    for s in range(d):
        mat = np.column_stack(list(entangled_basis(d, s).values()))
        assert np.max(np.abs(mat.conj().T @ mat - np.eye(d * d))) < 1e-12
        assert np.max(np.abs(mat @ mat.conj().T - np.eye(d * d))) < 1e-12


@pytest.mark.parametrize("d", [2, 3, 5, 7])
def test_entangled_states_maximally_entangled(d):
    for label in itertools.product(range(d), repeat=3):
        rho = density(entangled_state(d, label))
        for keep in (1, 2):
            assert np.max(np.abs(partial_trace(rho, keep) - np.eye(d) / d)) < 1e-12


def _brute_inverse(x, d):
    return next(y for y in range(1, d) if (x * y) % d == 1)


def test_gf_inverse_examples():
    assert gf_inverse(1, 2) == 1
    assert gf_inverse(3, 5) == 2
    assert gf_inverse(2, 7) == 4


@pytest.mark.parametrize("d", PRIMES)
def test_gf_inverse_brute_force(d):
    for x in range(1, d):
        assert gf_inverse(x, d) == _brute_inverse(x, d)
    assert gf_inverse(-1, d) == _brute_inverse(d - 1, d)


def test_gf_inverse_zero():
    with pytest.raises(ZeroDivisionError):
        gf_inverse(5, 5)


def test_basis_label_names_roundtrip():
    for d in (2, 3, 7):
        for b in basis_labels(d):
            assert parse_basis_label(b.name(d), d) == b
    assert [b.name(2) for b in basis_labels(2)] == ["z", "x", "y"]
    assert sorted([BasisLabel(1), COMPUTATIONAL, BasisLabel(0)]) == basis_labels(2)
    with pytest.raises(ValueError):
        parse_basis_label("q", 2)


# Table I of the experiment: rows sigma_x, sigma_y, sigma_z; columns DH DV AH AV.
TABLE_I = {
    "phi+": {"x": (0.5, 0.5, 0, 0), "y": (0, 0.5, 0.5, 0), "z": (0, 0.5, 0, 0.5)},
    "psi-": {"x": (0, 0, 0.5, 0.5), "y": (0, 0.5, 0.5, 0), "z": (0.5, 0, 0.5, 0)},
}
COLUMNS = ("DH", "DV", "AH", "AV")


def _ideal_probs(initial_vec, b):
    """Direct projector algebra: King measures the first qubit, Alice the Bell basis."""
    bell = {
        "phi+": np.array([1, 0, 0, 1]) * S2,
        "phi-": np.array([1, 0, 0, -1]) * S2,
        "psi+": np.array([0, 1, 1, 0]) * S2,
        "psi-": np.array([0, 1, -1, 0]) * S2,
    }
    vecs = {"z": np.eye(2), "x": np.array([[1, 1], [1, -1]]) * S2,
            "y": np.array([[1, 1], [1j, -1j]]) * S2}[b]
    rho = density(initial_vec)
    out = sum(
        np.kron(np.outer(v, v.conj()), np.eye(2)) @ rho @ np.kron(np.outer(v, v.conj()), np.eye(2))
        for v in vecs.T
    )
    return {name: float(np.real(vec.conj() @ out @ vec)) for name, vec in bell.items()}


def test_bell_dictionary_is_unique_table_consistent_bijection():
    initial = {"phi+": np.array([1, 0, 0, 1]) * S2, "psi-": np.array([0, 1, -1, 0]) * S2}
    bells = ("phi+", "phi-", "psi+", "psi-")
    consistent = []
    for perm in itertools.permutations(COLUMNS):
        mapping = dict(zip(bells, perm))
        ok = all(
            abs(_ideal_probs(initial[st], b)[bell] - TABLE_I[st][b][COLUMNS.index(mapping[bell])]) < 1e-12
            for st in TABLE_I for b in "xyz" for bell in bells
        )
        if ok:
            consistent.append(mapping)
    assert len(consistent) == 1
    frozen = {e.name: e.coincidence for e in BELL_DICTIONARY}
    assert frozen == consistent[0]


def test_bell_dictionary_labels_match_states():
    names = {
        "phi+": np.array([1, 0, 0, 1]) * S2,
        "phi-": np.array([1, 0, 0, -1]) * S2,
        "psi+": np.array([0, 1, 1, 0]) * S2,
        "psi-": np.array([0, 1, -1, 0]) * S2,
    }
    for entry in BELL_DICTIONARY:
        overlap = abs(np.vdot(names[entry.name], entangled_state(2, entry.label)))
        assert overlap == pytest.approx(1.0, abs=1e-12)
    assert {e.label[:2]: e.coincidence for e in BELL_DICTIONARY} == {
        (0, 0): "DV", (0, 1): "AV", (1, 0): "DH", (1, 1): "AH"
    }

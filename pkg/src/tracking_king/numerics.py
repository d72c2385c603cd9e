"""Dense complex linear algebra for small bipartite Hilbert spaces.

States are 1-d complex arrays, operators are 2-d complex arrays.  Bipartite
indices follow ``k = d * n1 + n2`` (subsystem 1 is the slow index), which is
exactly what :func:`numpy.kron` produces.
"""

from __future__ import annotations

from functools import reduce
from typing import NamedTuple

import numpy as np

#: Largest Hilbert-space dimension handled here (two qudits with d = 11).
MAX_DIM = 121

STATE_TOL = 1e-9
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = -1e-9
ZERO_BRANCH_TOL = 1e-12


def normalize(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return vec / norm


def ket(dim: int, index: int) -> np.ndarray:
    """Standard basis vector ``|index>`` of a ``dim``-dimensional space."""
    if not 0 <= index < dim:
        raise ValueError(f"basis index {index} out of range for dim {dim}")
    vec = np.zeros(dim, dtype=complex)
    vec[index] = 1.0
    return vec


def density(state) -> np.ndarray:
    """Pure-state projector ``|psi><psi|``."""
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj())


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


def tensor_product(*operands) -> np.ndarray:
    """Kronecker product of states or operators, first operand slowest.

    Raises ``ValueError`` when the combined dimension exceeds :data:`MAX_DIM`.
    """
    if not operands:
        raise ValueError("tensor_product needs at least one operand")
    arrays = [np.asarray(op, dtype=complex) for op in operands]
    ndims = {a.ndim for a in arrays}
    if len(ndims) != 1 or ndims.pop() not in (1, 2):
        raise ValueError("operands must all be vectors or all be square matrices")
    dim = int(np.prod([a.shape[0] for a in arrays]))
    if dim > MAX_DIM:
        raise ValueError(f"combined dimension {dim} exceeds maximum {MAX_DIM}")
    return reduce(np.kron, arrays)


def _side(dim: int) -> int:
    d = int(round(np.sqrt(dim)))
    if d * d != dim:
        raise ValueError(f"dimension {dim} is not a perfect square")
    return d


def partial_trace(rho, keep: int) -> np.ndarray:
    """Reduced state of a ``d*d`` bipartite operator.

    ``keep`` is the subsystem that survives, 1 or 2.
    """
    rho = np.asarray(rho, dtype=complex)
    if keep not in (1, 2):
        raise ValueError("keep must be 1 or 2")
    d = _side(rho.shape[0])
    t = rho.reshape(d, d, d, d)
    if keep == 1:
        return np.einsum("ajbj->ab", t)
    return np.einsum("jajb->ab", t)


def is_orthonormal(vectors, tol: float = STATE_TOL) -> bool:
    mat = np.column_stack([np.asarray(v, dtype=complex) for v in vectors])
    gram = mat.conj().T @ mat
    return bool(np.allclose(gram, np.eye(gram.shape[0]), atol=tol, rtol=0))


def check_state(vec, tol: float = STATE_TOL) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    if vec.ndim != 1:
        raise ValueError("state vector must be one-dimensional")
    if abs(np.vdot(vec, vec).real - 1.0) > tol:
        raise ValueError("state vector is not normalized")
    return vec


def check_density(rho) -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity; return the array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density operator must be a square matrix")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise ValueError("density operator is not Hermitian")
    if abs(np.trace(rho) - 1.0) > TRACE_TOL:
        raise ValueError("density operator does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < POSITIVITY_TOL:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


def is_projector(op, tol: float = 1e-10) -> bool:
    op = np.asarray(op, dtype=complex)
    return bool(
        np.allclose(op @ op, op, atol=tol, rtol=0)
        and np.allclose(op, op.conj().T, atol=tol, rtol=0)
    )


def born_probabilities(rho, basis) -> np.ndarray:
    """Outcome probabilities ``<b_i|rho|b_i>`` for a complete orthonormal basis."""
    rho = np.asarray(rho, dtype=complex)
    mat = np.column_stack([np.asarray(v, dtype=complex) for v in basis])
    if mat.shape != rho.shape:
        raise ValueError("basis must be complete for the state's space")
    if not is_orthonormal(basis):
        raise ValueError("basis is not orthonormal")
    probs = np.einsum("ia,ij,ja->a", mat.conj(), rho, mat).real
    if probs.min() < -1e-10 or probs.max() > 1 + 1e-10:
        raise ValueError("probabilities out of range; is rho a density operator?")
    return np.clip(probs, 0.0, 1.0)


class Branch(NamedTuple):
    """Outcome of a post-selection.  ``state`` is None on a zero branch."""

    state: np.ndarray | None
    probability: float

    @property
    def is_zero(self) -> bool:
        return self.state is None


def project_and_renormalize(rho, projector) -> Branch:
    rho = np.asarray(rho, dtype=complex)
    projector = np.asarray(projector, dtype=complex)
    if projector.shape != rho.shape:
        raise ValueError("projector does not act on the state's space")
    out = projector @ rho @ projector
    prob = float(np.trace(out).real)
    if prob <= ZERO_BRANCH_TOL:
        return Branch(None, max(prob, 0.0))
    return Branch(out / prob, prob)


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state."""
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return normalize(vec)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state from the Ginibre ensemble."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real

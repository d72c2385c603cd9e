"""Mutually unbiased bases, the entangled basis, and GF(d) helpers.

For prime ``d`` the King chooses among ``d + 1`` bases: the computational
basis and the ``d`` phase bases

    |m; b> = d^{-1/2} sum_n w^{b n^2 - 2 m n} |n>,

while Alice prepares and measures in the maximally entangled basis

    |c, r; s> = d^{-1/2} sum_n w^{s n^2 - 2 r n} |n>|c - n>.

For ``d = 2`` the root is ``w = i`` with exponents taken mod 4; for odd primes
``w = exp(2 pi i / d)`` with exponents mod ``d``.  Exponents are reduced in
integer arithmetic before the power is taken, so phases never drift.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .numerics import ket

SUPPORTED_PRIMES = (2, 3, 5, 7, 11)
MAX_PRIME = 11


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % k for k in range(2, int(n**0.5) + 1))


def check_dim(d: int) -> int:
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool):
        raise TypeError(f"dimension must be an integer, got {d!r}")
    d = int(d)
    if not is_prime(d):
        raise ValueError(f"dimension {d} is not prime")
    if d > MAX_PRIME:
        raise ValueError(f"dimension {d} exceeds the supported maximum {MAX_PRIME}")
    return d


class PhaseRoot(NamedTuple):
    omega: complex
    modulus: int

    def power(self, exponent: int) -> complex:
        k = exponent % self.modulus
        if self.modulus == 4:
            return (1, 1j, -1, -1j)[k]
        return self.omega**k


def phase_root(d: int) -> PhaseRoot:
    d = check_dim(d)
    if d == 2:
        return PhaseRoot(1j, 4)
    return PhaseRoot(cmath.exp(2j * cmath.pi / d), d)


@dataclass(frozen=True)
class BasisLabel:
    """The King's basis choice.

    ``phase=None`` is the computational basis; otherwise ``phase`` is the
    residue ``b`` of a phase basis.  For qubits the computational basis is
    sigma_z, ``phase=0`` is sigma_x and ``phase=1`` is sigma_y.
    """

    phase: int | None = None

    @property
    def is_computational(self) -> bool:
        return self.phase is None

    def sort_key(self) -> int:
        return -1 if self.phase is None else self.phase

    def __lt__(self, other: BasisLabel) -> bool:
        return self.sort_key() < other.sort_key()

    def name(self, d: int) -> str:
        """CLI spelling: z/x/y for qubits, z/0/1/... otherwise."""
        if self.phase is None:
            return "z"
        if d == 2:
            return "xy"[self.phase]
        return str(self.phase)

    def __str__(self) -> str:
        return "computational" if self.phase is None else f"phase({self.phase})"


COMPUTATIONAL = BasisLabel()


def basis_labels(d: int) -> list[BasisLabel]:
    """All ``d + 1`` choices in tie-break order: computational, 0, 1, ..."""
    d = check_dim(d)
    return [COMPUTATIONAL] + [BasisLabel(b) for b in range(d)]


def parse_basis_label(text: str, d: int) -> BasisLabel:
    """Inverse of :meth:`BasisLabel.name`; also accepts ``sigma_*`` names for d=2."""
    key = str(text).strip().lower()
    if key.startswith("sigma_"):
        key = key[len("sigma_"):]
    if key in ("z", "comp", "computational"):
        return COMPUTATIONAL
    if d == 2 and key in ("x", "y"):
        return BasisLabel("xy".index(key))
    try:
        b = int(key)
    except ValueError:
        raise ValueError(f"unknown basis label {text!r}") from None
    if not 0 <= b < d:
        raise ValueError(f"phase basis {b} out of range for d={d}")
    return BasisLabel(b)


def check_basis_label(label: BasisLabel, d: int) -> BasisLabel:
    if label.phase is not None and not 0 <= label.phase < d:
        raise ValueError(f"phase basis {label.phase} out of range for d={d}")
    return label


class EntangledLabel(NamedTuple):
    c: int
    r: int
    s: int = 0


def check_entangled_label(label, d: int) -> EntangledLabel:
    label = EntangledLabel(*label)
    for name, value in zip(label._fields, label):
        if not 0 <= value < d:
            raise ValueError(f"{name}={value} out of range for d={d}")
    return label


def mub_state(d: int, b: BasisLabel, m: int) -> np.ndarray:
    """Vector ``m`` of basis ``b``."""
    d = check_dim(d)
    check_basis_label(b, d)
    if not 0 <= m < d:
        raise ValueError(f"m={m} out of range for d={d}")
    if b.is_computational:
        return ket(d, m)
    root = phase_root(d)
    amps = [root.power(b.phase * n * n - 2 * m * n) for n in range(d)]
    return np.array(amps, dtype=complex) / np.sqrt(d)


def mub_basis(d: int, b: BasisLabel) -> list[np.ndarray]:
    return [mub_state(d, b, m) for m in range(d)]


def entangled_state(d: int, label) -> np.ndarray:
    """The two-qudit state ``|c, r; s>`` (dimension ``d*d``)."""
    d = check_dim(d)
    c, r, s = check_entangled_label(label, d)
    root = phase_root(d)
    vec = np.zeros(d * d, dtype=complex)
    for n in range(d):
        vec[d * n + (c - n) % d] += root.power(s * n * n - 2 * r * n)
    return vec / np.sqrt(d)


def entangled_basis(d: int, s: int) -> dict[tuple[int, int], np.ndarray]:
    """All ``d*d`` states of family ``s`` keyed by ``(c, r)``, row-major."""
    return {(c, r): entangled_state(d, (c, r, s)) for c in range(d) for r in range(d)}


def entangled_basis_matrix(d: int, s: int) -> np.ndarray:
    """Columns are ``|c, r; s>`` with column index ``d*c + r``."""
    return np.column_stack(list(entangled_basis(d, s).values()))


def gf_inverse(x: int, d: int) -> int:
    d = check_dim(d)
    if x % d == 0:
        raise ZeroDivisionError(f"{x} has no inverse mod {d}")
    return pow(x, -1, d)


class BellEntry(NamedTuple):
    label: EntangledLabel
    name: str
    coincidence: str


#: Fixed qubit dictionary: entangled label <-> Bell state <-> detector pair.
BELL_DICTIONARY: tuple[BellEntry, ...] = (
    BellEntry(EntangledLabel(0, 0, 0), "phi+", "DV"),
    BellEntry(EntangledLabel(0, 1, 0), "phi-", "AV"),
    BellEntry(EntangledLabel(1, 0, 0), "psi+", "DH"),
    BellEntry(EntangledLabel(1, 1, 0), "psi-", "AH"),
)

BELL_BY_NAME = {e.name: e for e in BELL_DICTIONARY}
BELL_BY_COINCIDENCE = {e.coincidence: e for e in BELL_DICTIONARY}
BELL_BY_OUTCOME = {(e.label.c, e.label.r): e for e in BELL_DICTIONARY}

#: Column order used for coincidence tables.
COINCIDENCE_ORDER = ("DH", "DV", "AH", "AV")


def bell_coincidence_dictionary() -> tuple[BellEntry, ...]:
    return BELL_DICTIONARY


def coincidence_label(outcome: tuple[int, int]) -> str:
    return BELL_BY_OUTCOME[tuple(outcome)].coincidence

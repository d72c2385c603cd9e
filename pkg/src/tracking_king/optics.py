"""Photonic model of the post-selected CNOT built from partial polarizing
beam splitters (PPBS), with partially distinguishable photons.

Single-photon modes are ``(spatial, polarization, internal)``.  Besides the
control and target arms there is one discarded loss port per arm, fed by the
compensating PPBS-IIs.  The internal degree of freedom carries the
distinguishability: the control photon sits in internal mode 0, the target
photon in ``sqrt(M)|0> + sqrt(1-M)|1>``, so ``M`` is their wavepacket overlap.

A two-photon state is stored as a symmetric matrix ``A`` with
``|psi> = sum_ij A_ij a_i^dag a_j^dag |vac>``.  A passive element with
single-photon unitary ``U`` maps ``A -> U A U^T``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .mub import BELL_BY_COINCIDENCE
from .numerics import check_density, density, normalize

SPATIAL = ("control", "target", "loss_control", "loss_target")
POLARIZATIONS = ("H", "V")
N_MODES = len(SPATIAL) * 2 * 2

H, V = 0, 1

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

IDEAL_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def mode_index(spatial: str | int, pol: int, internal: int) -> int:
    s = SPATIAL.index(spatial) if isinstance(spatial, str) else spatial
    return (s * 2 + pol) * 2 + internal


@dataclass(frozen=True)
class PpbsSpec:
    """Intensity reflectivities for H and V light."""

    reflectivity_H: float
    reflectivity_V: float

    def __post_init__(self):
        for r in (self.reflectivity_H, self.reflectivity_V):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"reflectivity {r} outside [0, 1]")


PPBS_I = PpbsSpec(reflectivity_H=1 / 3, reflectivity_V=1.0)
PPBS_II = PpbsSpec(reflectivity_H=0.0, reflectivity_V=2 / 3)


class TwoPhotonState:
    """Two bosons over :data:`N_MODES` single-photon modes."""

    def __init__(self, amps):
        amps = np.asarray(amps, dtype=complex)
        if amps.shape != (N_MODES, N_MODES):
            raise ValueError(f"expected a {N_MODES}x{N_MODES} amplitude matrix")
        self.amps = (amps + amps.T) / 2

    @classmethod
    def vacuum(cls) -> TwoPhotonState:
        return cls(np.zeros((N_MODES, N_MODES)))

    @classmethod
    def from_photons(cls, first, second) -> TwoPhotonState:
        """Product of two single-photon creation operators.

        Each argument maps mode indices (or ``(spatial, pol, internal)``
        tuples) to amplitudes.
        """
        a = _single_photon(first)
        b = _single_photon(second)
        return cls((np.outer(a, b) + np.outer(b, a)) / 2)

    def evolve(self, unitary) -> TwoPhotonState:
        return TwoPhotonState(unitary @ self.amps @ unitary.T)

    def amplitude(self, i: int, j: int) -> complex:
        """Fock amplitude of ``|1_i 1_j>`` (or ``|2_i>`` when ``i == j``)."""
        if i == j:
            return complex(np.sqrt(2) * self.amps[i, i])
        return complex(2 * self.amps[i, j])

    def total_probability(self) -> float:
        return float(2 * np.sum(np.abs(self.amps) ** 2))

    def is_exchange_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.amps, self.amps.T, atol=tol, rtol=0))

    def coincidence_probability(self, arm_a: str = "control", arm_b: str = "target") -> float:
        """Probability of exactly one photon in each of two spatial arms."""
        ia = _arm_modes(arm_a)
        ib = _arm_modes(arm_b)
        block = self.amps[np.ix_(ia, ib)]
        return float(4 * np.sum(np.abs(block) ** 2))


def _single_photon(spec) -> np.ndarray:
    if isinstance(spec, np.ndarray):
        return spec.astype(complex)
    vec = np.zeros(N_MODES, dtype=complex)
    for mode, amp in dict(spec).items():
        idx = mode_index(*mode) if isinstance(mode, tuple) else int(mode)
        vec[idx] += amp
    return vec


def _arm_modes(arm: str) -> list[int]:
    return [mode_index(arm, p, x) for p in (H, V) for x in (0, 1)]


# -- circuit elements (single-photon unitaries) ---------------------------


def ppbs_unitary(spec: PpbsSpec, ports: tuple[str, str]) -> np.ndarray:
    """Mode transformation of a PPBS between two spatial ports.

    Per polarization: ``a -> t a + i r b`` and ``b -> t b + i r a`` with
    ``r = sqrt(R_pol)``, ``t = sqrt(1 - R_pol)``.  Both internal modes are
    treated identically.
    """
    a, b = ports
    if a == b:
        raise ValueError("PPBS ports must be distinct")
    u = np.eye(N_MODES, dtype=complex)
    for pol, refl in ((H, spec.reflectivity_H), (V, spec.reflectivity_V)):
        t, r = np.sqrt(1 - refl), np.sqrt(refl)
        for x in (0, 1):
            ia, ib = mode_index(a, pol, x), mode_index(b, pol, x)
            u[ia, ia] = u[ib, ib] = t
            u[ib, ia] = u[ia, ib] = 1j * r
    return u


def ppbs_apply(state: TwoPhotonState, spec: PpbsSpec, ports: tuple[str, str]) -> TwoPhotonState:
    return state.evolve(ppbs_unitary(spec, ports))


def waveplate_unitary(arm: str, jones) -> np.ndarray:
    """A polarization rotation ``jones`` (2x2) acting on one spatial arm."""
    jones = np.asarray(jones, dtype=complex)
    u = np.eye(N_MODES, dtype=complex)
    for x in (0, 1):
        for p in (H, V):
            for q in (H, V):
                u[mode_index(arm, p, x), mode_index(arm, q, x)] = jones[p, q]
    return u


def swap_arms_unitary(a: str = "control", b: str = "target") -> np.ndarray:
    u = np.eye(N_MODES, dtype=complex)
    for p in (H, V):
        for x in (0, 1):
            ia, ib = mode_index(a, p, x), mode_index(b, p, x)
            u[ia, ia] = u[ib, ib] = 0
            u[ia, ib] = u[ib, ia] = 1
    return u


class Element(NamedTuple):
    name: str
    unitary: np.ndarray


@dataclass
class OpticalCircuit:
    elements: list[Element] = field(default_factory=list)

    def add(self, name: str, unitary: np.ndarray) -> OpticalCircuit:
        self.elements.append(Element(name, unitary))
        return self

    def unitary(self) -> np.ndarray:
        u = np.eye(N_MODES, dtype=complex)
        for element in self.elements:
            u = element.unitary @ u
        return u

    def apply(self, state: TwoPhotonState) -> TwoPhotonState:
        for element in self.elements:
            state = state.evolve(element.unitary)
        return state


def build_cnot_circuit() -> OpticalCircuit:
    """PPBS-I between the arms plus a PPBS-II compensator on each arm.

    PPBS-I reflects V fully, so the outputs are named after the reflected
    path (hence the arm relabelling).  The PPBS layers alone give
    ``diag(1, -1, -1, -1) / 3`` on ``HH, HV, VH, VV``; the Hadamards on the
    target and a Z on the control turn that into CNOT (control on V), and
    the final X on the target fixes which target value is flipped.
    """
    circuit = OpticalCircuit()
    circuit.add("target HWP 22.5", waveplate_unitary("target", HADAMARD))
    circuit.add("PPBS-I", ppbs_unitary(PPBS_I, ("control", "target")))
    circuit.add("relabel reflected outputs", swap_arms_unitary())
    circuit.add("PPBS-II control", ppbs_unitary(PPBS_II, ("control", "loss_control")))
    circuit.add("PPBS-II target", ppbs_unitary(PPBS_II, ("target", "loss_target")))
    circuit.add("control HWP 0", waveplate_unitary("control", PAULI_Z))
    circuit.add("target HWP 22.5 + 45", waveplate_unitary("target", PAULI_X @ HADAMARD))
    return circuit


def _check_mode_match(M: float) -> float:
    M = float(M)
    if not 0.0 <= M <= 1.0:
        raise ValueError(f"mode match {M} outside [0, 1]")
    return M


def input_state(pol_control: int, pol_target: int, M: float) -> TwoPhotonState:
    """Computational-basis photon pair with target overlap ``M``."""
    M = _check_mode_match(M)
    first = {("control", pol_control, 0): 1.0}
    second = {
        ("target", pol_target, 0): np.sqrt(M),
        ("target", pol_target, 1): np.sqrt(1 - M),
    }
    return TwoPhotonState.from_photons(first, second)


def postselected_map(M: float, circuit: OpticalCircuit | None = None) -> np.ndarray:
    """Linear map from input polarization amplitudes to coincidence amplitudes.

    Returns a ``16 x 4`` matrix.  Columns are inputs ``HH, HV, VH, VV``
    (control first); rows are ``(pol_c, pol_t, internal_c, internal_t)`` in
    row-major order, restricted to one photon per arm.
    """
    circuit = build_cnot_circuit() if circuit is None else circuit
    u = circuit.unitary()
    out = np.zeros((16, 4), dtype=complex)
    for col, (p, q) in enumerate(((H, H), (H, V), (V, H), (V, V))):
        state = input_state(p, q, M).evolve(u)
        for pc in (H, V):
            for pt in (H, V):
                for xc in (0, 1):
                    for xt in (0, 1):
                        row = ((pc * 2 + pt) * 2 + xc) * 2 + xt
                        out[row, col] = state.amplitude(
                            mode_index("control", pc, xc), mode_index("target", pt, xt)
                        )
    return out


def _apply_map(w: np.ndarray, rho: np.ndarray) -> np.ndarray:
    full = w @ rho @ w.conj().T
    return np.einsum("axbx->ab", full.reshape(4, 4, 4, 4))


def run_cnot(state, M: float = 1.0) -> tuple[np.ndarray, float]:
    """Post-selected two-qubit output and the coincidence probability.

    ``state`` is a 4-vector or a 4x4 density operator over ``HH, HV, VH, VV``.
    """
    M = _check_mode_match(M)
    state = np.asarray(state, dtype=complex)
    rho = density(normalize(state)) if state.ndim == 1 else check_density(state)
    out = _apply_map(postselected_map(M), rho)
    prob = float(np.trace(out).real)
    return out / prob, prob


def cnot_channel(M: float = 1.0):
    """Unnormalized post-selected channel ``rho -> Tr_int(W rho W^dag)``."""
    w = postselected_map(_check_mode_match(M))
    return lambda rho: _apply_map(w, np.asarray(rho, dtype=complex))


class TruthTable(NamedTuple):
    probabilities: np.ndarray
    fidelity: float
    success: np.ndarray


def truth_table(M: float = 1.0) -> TruthTable:
    """ZZ truth table: rows are inputs, columns post-selected outputs."""
    w = postselected_map(_check_mode_match(M))
    table = np.zeros((4, 4))
    success = np.zeros(4)
    for k in range(4):
        out = _apply_map(w, np.diag(np.eye(4)[k]).astype(complex))
        success[k] = np.trace(out).real
        table[k] = np.diag(out).real / success[k]
    ideal = np.abs(IDEAL_CNOT.T) ** 2
    fidelity = float(np.mean(np.sum(table * ideal, axis=1)))
    return TruthTable(table, fidelity, success)


# -- Bell-state readout ------------------------------------------------------

_DA = {"D": np.array([1, 1]) / np.sqrt(2), "A": np.array([1, -1]) / np.sqrt(2)}
# HWP at 45 deg in front of the target analyzer: the "H" detector sees V light.
_HV_READOUT = {"H": np.array([0, 1.0]), "V": np.array([1.0, 0])}


def coincidence_distribution(rho) -> dict[str, float]:
    """Detector-pair probabilities for control in {D,A}, target in {H,V}."""
    rho = np.asarray(rho, dtype=complex)
    probs = {}
    for c_name, c_vec in _DA.items():
        for t_name, t_vec in _HV_READOUT.items():
            v = np.kron(c_vec, t_vec).astype(complex)
            probs[c_name + t_name] = float(np.real(v.conj() @ rho @ v))
    return probs


def effective_control_measurement(M: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Alice's optical Bell measurement as a map from a state to outcomes.

    The returned function takes a two-qubit density operator and gives a
    ``(2, 2)`` array of probabilities indexed by the entangled labels
    ``(c', r')`` through the Bell/coincidence dictionary.
    """
    channel = cnot_channel(M)

    def measure(rho) -> np.ndarray:
        out = channel(rho)
        out = out / np.trace(out).real
        dist = np.zeros((2, 2))
        for name, p in coincidence_distribution(out).items():
            c, r, _ = BELL_BY_COINCIDENCE[name].label
            dist[c, r] = p
        return np.clip(dist, 0.0, 1.0)

    return measure


# -- Hong-Ou-Mandel scan -------------------------------------------------------


@dataclass(frozen=True)
class HomCurve:
    delays: np.ndarray
    coincidences: np.ndarray
    visibility: float
    fit: tuple[float, float, float, float] | None = None


def hom_coincidence(M: float, spec: PpbsSpec = PPBS_I) -> float:
    """Coincidence probability for two H photons meeting on one PPBS."""
    first = {("control", H, 0): 1.0}
    second = {("target", H, 0): np.sqrt(M), ("target", H, 1): np.sqrt(1 - M)}
    state = ppbs_apply(TwoPhotonState.from_photons(first, second), spec, ("control", "target"))
    return state.coincidence_probability()


def _dip(tau, baseline, depth, center, width):
    return baseline - depth * np.exp(-((tau - center) ** 2) / (2 * width**2))


def hom_scan(
    delays: Sequence[float], M0: float, width: float, spec: PpbsSpec = PPBS_I
) -> HomCurve:
    """Simulated HOM dip and the visibility of a Gaussian fit to it."""
    if width <= 0:
        raise ValueError("width must be positive")
    M0 = _check_mode_match(M0)
    delays = np.asarray(delays, dtype=float)
    overlaps = M0 * np.exp(-(delays**2) / (2 * width**2))
    coinc = np.array([hom_coincidence(m, spec) for m in overlaps])
    if np.ptp(coinc) < 1e-15 or coinc.max() <= 0:
        return HomCurve(delays, coinc, 0.0, None)
    p0 = [coinc.max(), np.ptp(coinc), delays[np.argmin(coinc)], width]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        params, _ = curve_fit(_dip, delays, coinc, p0=p0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    baseline, depth = params[0], abs(params[1])
    visibility = float(np.clip(depth / baseline, 0.0, 1.0))
    return HomCurve(delays, coinc, visibility, tuple(float(p) for p in params))


def ideal_visibility(spec: PpbsSpec = PPBS_I, M0: float = 1.0) -> float:
    t, r = 1 - spec.reflectivity_H, spec.reflectivity_H
    return 2 * t * r * M0 / (t * t + r * r)

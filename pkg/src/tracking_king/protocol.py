"""Tracking-the-King protocol: preparation, the King's nonselective
measurement, Alice's entangled-basis readout, decoding, and Monte Carlo.

The King's qudit is the first tensor factor of ``|c, r; s>``; with that
ordering the decoding table below holds for every prime ``d`` and every
family ``s``.  Pass ``subsystem=2`` to :func:`king_channel` to study the
other ordering (it only agrees with the table for ``d = 2, s = 0``).

Outcome distributions are ``(d, d)`` arrays indexed by Alice's ``(c', r')``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .mub import (
    BasisLabel,
    EntangledLabel,
    basis_labels,
    check_basis_label,
    check_dim,
    check_entangled_label,
    entangled_basis_matrix,
    entangled_state,
    gf_inverse,
    mub_basis,
    parse_basis_label,
)
from .numerics import density, maximally_mixed

ZERO_PROB = 1e-12
CHUNK = 1 << 16

# Spawn-key roots for independent random streams derived from one seed.
_KEY_RANDOM_B = 0xB0
_KEY_GAME_ROUND = 0xC0
_KEY_KING = 0xD0


# -- noise models ------------------------------------------------------------


def _unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name}={value} outside [0, 1]")
    return value


@dataclass(frozen=True)
class Ideal:
    stage = None
    variant = "ideal"

    @property
    def parameter(self) -> None:
        return None


@dataclass(frozen=True)
class WernerShared:
    """Source noise: ``lam * rho + (1 - lam) * I / d^2``."""

    lam: float
    stage = "shared_state"
    variant = "werner"

    def __post_init__(self):
        object.__setattr__(self, "lam", _unit_interval("lambda", self.lam))

    @property
    def parameter(self) -> float:
        return self.lam


@dataclass(frozen=True)
class OutcomeWhiteNoise:
    """Readout noise: ``(1 - p) * q + p * uniform``."""

    p: float
    stage = "outcome_distribution"
    variant = "white"

    def __post_init__(self):
        object.__setattr__(self, "p", _unit_interval("p", self.p))

    @property
    def parameter(self) -> float:
        return self.p


@dataclass(frozen=True)
class OpticsBackend:
    """Alice measures with the PPBS gate at mode match ``M`` (qubits only)."""

    mode_match: float
    stage = "control_gate"
    variant = "optics"

    def __post_init__(self):
        object.__setattr__(self, "mode_match", _unit_interval("M", self.mode_match))

    @property
    def parameter(self) -> float:
        return self.mode_match


NoiseModel = Ideal | WernerShared | OutcomeWhiteNoise | OpticsBackend

NOISE_FAMILIES = {
    "ideal": Ideal,
    "werner": WernerShared,
    "white": OutcomeWhiteNoise,
    "optics": OpticsBackend,
}


def make_noise(variant: str, parameter: float | None = None) -> NoiseModel:
    try:
        cls = NOISE_FAMILIES[variant.lower()]
    except KeyError:
        raise ValueError(
            f"unknown noise variant {variant!r}; expected one of {sorted(NOISE_FAMILIES)}"
        ) from None
    if cls is Ideal:
        return Ideal()
    if parameter is None:
        raise ValueError(f"noise variant {variant!r} needs a parameter")
    return cls(parameter)


def parse_noise(text: str) -> NoiseModel:
    """Parse ``variant[:parameter]``, e.g. ``white:0.374``."""
    variant, _, param = text.partition(":")
    try:
        value = float(param) if param else None
    except ValueError:
        raise ValueError(f"bad noise parameter in {text!r}") from None
    return make_noise(variant.strip(), value)


# -- scenario ----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    d: int = 2
    initial: EntangledLabel = EntangledLabel(0, 0, 0)
    noise: tuple = ()
    shots: int = 1000
    seed: int = 0

    def __post_init__(self):
        d = check_dim(self.d)
        object.__setattr__(self, "initial", check_entangled_label(self.initial, d))
        noise = self.noise
        if not isinstance(noise, (tuple, list)):
            noise = (noise,)
        object.__setattr__(self, "noise", tuple(noise))
        if int(self.shots) < 1:
            raise ValueError("shots must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self, b_schedule=None) -> dict:
        c, r, s = self.initial
        doc = {
            "d": self.d,
            "initial": {"c": c, "r": r, "s": s},
            "noise": [{"variant": n.variant, "parameter": n.parameter} for n in self.noise],
            "shots": self.shots,
            "seed": self.seed,
        }
        if b_schedule is not None:
            doc["b_schedule"] = (
                b_schedule
                if isinstance(b_schedule, str)
                else [b.name(self.d) for b in b_schedule]
            )
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> tuple[Scenario, object]:
        """Build a scenario; also returns the document's ``b_schedule``."""
        d = int(doc.get("d", 2))
        init = doc.get("initial", {"c": 0, "r": 0, "s": 0})
        if isinstance(init, Mapping):
            initial = EntangledLabel(int(init["c"]), int(init["r"]), int(init.get("s", 0)))
        else:
            initial = EntangledLabel(*[int(v) for v in init])
        noise = doc.get("noise", [])
        if isinstance(noise, (Mapping, str)):
            noise = [noise]
        models = tuple(
            parse_noise(n) if isinstance(n, str) else make_noise(n["variant"], n.get("parameter"))
            for n in noise
        )
        scenario = cls(d, initial, models, int(doc.get("shots", 1000)), int(doc.get("seed", 0)))
        schedule = doc.get("b_schedule")
        if schedule is not None and not isinstance(schedule, str):
            schedule = [parse_basis_label(str(b), d) for b in schedule]
        return scenario, schedule


# -- analytic protocol ------------------------------------------------------


def king_channel(rho, b: BasisLabel, d: int, subsystem: int = 1) -> np.ndarray:
    """Nonselective projective measurement of the King's qudit in basis ``b``.

    ``rho -> sum_m (P_m x I) rho (P_m x I)`` for ``subsystem=1``.
    """
    d = check_dim(d)
    check_basis_label(b, d)
    if subsystem not in (1, 2):
        raise ValueError("subsystem must be 1 or 2")
    rho = np.asarray(rho, dtype=complex)
    basis = np.column_stack(mub_basis(d, b))
    # Rotate the measured factor into the basis, drop its coherences, rotate back.
    u = np.kron(basis.conj().T, np.eye(d)) if subsystem == 1 else np.kron(np.eye(d), basis.conj().T)
    t = (u @ rho @ u.conj().T).reshape(d, d, d, d)
    keep = np.eye(d, dtype=bool)
    if subsystem == 1:
        t = t * keep[:, None, :, None]
    else:
        t = t * keep[None, :, None, :]
    return u.conj().T @ t.reshape(d * d, d * d) @ u


def alice_outcome_distribution(rho, s: int, d: int) -> np.ndarray:
    """Probabilities of Alice's outcomes ``(c', r')`` in family ``s``."""
    d = check_dim(d)
    mat = entangled_basis_matrix(d, s)
    rho = np.asarray(rho, dtype=complex)
    probs = np.einsum("ia,ij,ja->a", mat.conj(), rho, mat).real
    return np.clip(probs, 0.0, 1.0).reshape(d, d)


def decode(initial, outcome: tuple[int, int], d: int) -> BasisLabel | None:
    """Alice's decoding table.  Returns None when the outcome is inconclusive."""
    d = check_dim(d)
    c, r, s = check_entangled_label(initial, d)
    c2, r2 = outcome
    if not (0 <= c2 < d and 0 <= r2 < d):
        raise ValueError(f"outcome {outcome} out of range for d={d}")
    if c != c2:
        return BasisLabel((s + (r - r2) * gf_inverse(c2 - c, d)) % d)
    if r != r2:
        return BasisLabel(None)
    return None


def decode_table(initial, d: int) -> dict[tuple[int, int], BasisLabel | None]:
    return {(c, r): decode(initial, (c, r), d) for c in range(d) for r in range(d)}


def prepared_state(d: int, initial) -> np.ndarray:
    return density(entangled_state(d, initial))


def theoretical_table(d: int, initial) -> dict[BasisLabel, np.ndarray]:
    """Ideal outcome distribution for every King's choice."""
    d = check_dim(d)
    initial = check_entangled_label(initial, d)
    rho = prepared_state(d, initial)
    return {
        b: alice_outcome_distribution(king_channel(rho, b, d), initial.s, d)
        for b in basis_labels(d)
    }


def allowed_cells(d: int, initial, b: BasisLabel) -> np.ndarray:
    """Boolean mask of outcomes the ideal protocol can produce for ``b``."""
    return theoretical_table(d, initial)[b] > ZERO_PROB


def apply_noise(stage: str, noise: NoiseModel, obj, d: int = 2, s: int = 0):
    """Apply one noise model at its insertion point.

    * ``shared_state``: ``obj`` is the prepared density operator.
    * ``outcome_distribution``: ``obj`` is Alice's ``(d, d)`` distribution.
    * ``control_gate``: ``obj`` is the pre-measurement state; the result is
      the outcome distribution from the optical measurement.
    """
    if isinstance(noise, Ideal):
        return obj
    if noise.stage != stage:
        raise ValueError(f"{noise.variant} noise does not act at stage {stage!r}")
    if isinstance(noise, WernerShared):
        rho = np.asarray(obj, dtype=complex)
        return noise.lam * rho + (1 - noise.lam) * maximally_mixed(rho.shape[0])
    if isinstance(noise, OutcomeWhiteNoise):
        q = np.asarray(obj, dtype=float)
        return (1 - noise.p) * q + noise.p / q.size
    if isinstance(noise, OpticsBackend):
        if d != 2 or s != 0:
            raise ValueError("the optical backend only implements the qubit Bell basis (d=2, s=0)")
        from .optics import effective_control_measurement

        return effective_control_measurement(noise.mode_match)(obj)
    raise TypeError(f"unknown noise model {noise!r}")


def outcome_distribution(d: int, initial, b: BasisLabel, noise: Iterable = ()) -> np.ndarray:
    """Alice's outcome distribution with the noise models applied in order."""
    d = check_dim(d)
    initial = check_entangled_label(initial, d)
    noise = tuple(noise)
    rho = prepared_state(d, initial)
    for n in noise:
        if n.stage == "shared_state":
            rho = apply_noise("shared_state", n, rho)
    rho = king_channel(rho, b, d)
    gates = [n for n in noise if n.stage == "control_gate"]
    if len(gates) > 1:
        raise ValueError("at most one control-gate model can be active")
    if gates:
        q = apply_noise("control_gate", gates[0], rho, d, initial.s)
    else:
        q = alice_outcome_distribution(rho, initial.s, d)
    for n in noise:
        if n.stage == "outcome_distribution":
            q = apply_noise("outcome_distribution", n, q)
    return q


def analytic_reliability(d: int, initial, noise: Iterable = ()) -> float:
    """Expected-cell mass averaged uniformly over the King's choices."""
    noise = tuple(noise)
    table = theoretical_table(d, initial)
    masses = [
        float(outcome_distribution(d, initial, b, noise)[ideal > ZERO_PROB].sum())
        for b, ideal in table.items()
    ]
    return float(np.mean(masses))


# -- Monte Carlo -------------------------------------------------------------


class TrialRecord(NamedTuple):
    b_true: BasisLabel
    outcome: tuple[int, int]
    decoded: BasisLabel | None


@dataclass
class TrialStats:
    d: int
    counts: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)
    conclusive_rate: float = 0.0
    reliability_expected_mass: float = 0.0
    reliability_conclusive_accuracy: float = 0.0
    total: int = 0
    records: list | None = None

    def frequencies(self, b: BasisLabel) -> np.ndarray:
        arr = np.zeros((self.d, self.d))
        for (bb, (c, r)), n in self.counts.items():
            if bb == b:
                arr[c, r] += n
        return arr / arr.sum() if arr.sum() else arr

    def to_dict(self) -> dict:
        d = self.d

        def bname(b):
            return "inconclusive" if b is None else b.name(d)

        doc = {
            "total": self.total,
            "conclusive_rate": self.conclusive_rate,
            "reliability_expected_mass": self.reliability_expected_mass,
            "reliability_conclusive_accuracy": self.reliability_conclusive_accuracy,
            "counts": [
                {"b": bname(b), "outcome_c": c, "outcome_r": r, "count": n}
                for (b, (c, r)), n in sorted(self.counts.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1]))
            ],
            "confusion": [
                {"b_true": bname(bt), "b_decoded": bname(bd), "count": n}
                for (bt, bd), n in sorted(
                    self.confusion.items(),
                    key=lambda kv: (kv[0][0].sort_key(), -2 if kv[0][1] is None else kv[0][1].sort_key()),
                )
            ],
        }
        if self.records is not None:
            doc["records"] = [
                {"b_true": bname(rec.b_true), "outcome_c": rec.outcome[0],
                 "outcome_r": rec.outcome[1], "decoded": bname(rec.decoded)}
                for rec in self.records
            ]
        return doc


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def derive_seed(seed: int, *key: int) -> int:
    lo, hi = np.random.SeedSequence(int(seed), spawn_key=key).generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def sample_outcomes(probs, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling of flattened cell indices."""
    cdf = np.cumsum(np.asarray(probs, dtype=float).ravel())
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right")


def _resolve_schedule(scenario: Scenario, b_schedule) -> list[tuple[BasisLabel, int]]:
    """Expand a schedule into ``(b, number of events)`` blocks."""
    d = scenario.d
    if b_schedule is None or b_schedule == "all":
        return [(b, scenario.shots) for b in basis_labels(d)]
    if b_schedule == "uniform-random":
        labels = basis_labels(d)
        picks = _stream(scenario.seed, _KEY_RANDOM_B).integers(0, len(labels), scenario.shots)
        tally = np.bincount(picks, minlength=len(labels))
        return [(b, int(n)) for b, n in zip(labels, tally) if n]
    if isinstance(b_schedule, str):
        raise ValueError(f"unknown b schedule {b_schedule!r}")
    out = []
    for b in b_schedule:
        b = parse_basis_label(b, d) if isinstance(b, str) else check_basis_label(b, d)
        out.append((b, scenario.shots))
    if not out:
        raise ValueError("empty b schedule")
    return out


def run_trials(
    scenario: Scenario,
    b_schedule: Sequence | str | None = None,
    workers: int = 1,
    keep_records: bool = False,
) -> TrialStats:
    """Sample Alice's outcomes for each scheduled King's choice.

    ``b_schedule`` is a list of labels (``scenario.shots`` events each),
    ``"all"``/None (every basis once) or ``"uniform-random"`` (``shots``
    events, each with a uniformly drawn basis).  Events are sampled in
    fixed-size shards, each with its own generator derived from
    ``(seed, block, shard)``, so results do not depend on ``workers``.
    """
    d = scenario.d
    initial = scenario.initial
    blocks = _resolve_schedule(scenario, b_schedule)
    decoder = decode_table(initial, d)
    dists = {}
    allowed = {}
    ideal = theoretical_table(d, initial)
    for b, _ in blocks:
        if b not in dists:
            dists[b] = outcome_distribution(d, initial, b, scenario.noise)
            allowed[b] = ideal[b] > ZERO_PROB

    jobs = []
    for i, (b, n) in enumerate(blocks):
        for j, start in enumerate(range(0, n, CHUNK)):
            jobs.append((i, j, b, min(CHUNK, n - start)))

    def work(job):
        i, j, b, n = job
        return b, sample_outcomes(dists[b], n, _stream(scenario.seed, i, j))

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    stats = TrialStats(d=d, records=[] if keep_records else None)
    for b, _ in blocks:
        for c in range(d):
            for r in range(d):
                stats.counts.setdefault((b, (c, r)), 0)
    conclusive = correct = hits = 0
    for b, cells in results:
        tally = np.bincount(cells, minlength=d * d)
        for k, n in enumerate(tally):
            if not n:
                continue
            outcome = divmod(k, d)
            n = int(n)
            stats.counts[(b, outcome)] += n
            guess = decoder[outcome]
            stats.confusion[(b, guess)] = stats.confusion.get((b, guess), 0) + n
            if guess is not None:
                conclusive += n
                correct += n if guess == b else 0
            if allowed[b][outcome]:
                hits += n
        if keep_records:
            stats.records.extend(
                TrialRecord(b, divmod(int(k), d), decoder[divmod(int(k), d)]) for k in cells
            )
        stats.total += len(cells)
    stats.conclusive_rate = conclusive / stats.total
    stats.reliability_expected_mass = hits / stats.total
    stats.reliability_conclusive_accuracy = correct / conclusive if conclusive else 0.0
    return stats


# -- calibration -------------------------------------------------------------


class CalibrationError(ValueError):
    def __init__(self, target: float, interval: tuple[float, float], family: str):
        self.target = target
        self.interval = interval
        self.family = family
        lo, hi = interval
        super().__init__(
            f"target reliability {target} unreachable with {family} noise; "
            f"achievable interval is [{lo:.6f}, {hi:.6f}]"
        )


def calibrate_noise(
    target: float, family: str, d: int = 2, initial=(0, 0, 0), tol: float = 1e-12
) -> float:
    """Parameter of ``family`` whose analytic reliability equals ``target``.

    Reliability is monotone in each family's parameter, so plain bisection
    suffices.
    """
    cls = NOISE_FAMILIES.get(family.lower()) if isinstance(family, str) else family
    if cls is None or cls is Ideal:
        raise ValueError(f"cannot calibrate noise family {family!r}")
    name = cls.variant

    def reliability(x: float) -> float:
        return analytic_reliability(d, initial, (cls(x),))

    r0, r1 = reliability(0.0), reliability(1.0)
    lo_r, hi_r = min(r0, r1), max(r0, r1)
    if not lo_r - 1e-12 <= target <= hi_r + 1e-12:
        raise CalibrationError(target, (lo_r, hi_r), name)
    increasing = r1 >= r0
    lo, hi = 0.0, 1.0
    if abs(r0 - target) <= tol:
        return 0.0
    if abs(r1 - target) <= tol:
        return 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if (reliability(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    x = (lo + hi) / 2
    if abs(reliability(x) - target) > 1e-3:
        raise CalibrationError(target, (lo_r, hi_r), name)
    return x


# -- the guessing game -------------------------------------------------------


def decide_round(counts, initial, d: int) -> tuple[BasisLabel | None, float]:
    """Majority vote over conclusive outcome cells.

    ``counts`` is a ``(d, d)`` array or a mapping ``(c', r') -> count``.
    Ties go to the lowest label (computational, 0, 1, ...).
    """
    if isinstance(counts, Mapping):
        items = counts.items()
    else:
        arr = np.asarray(counts)
        items = (((c, r), arr[c, r]) for c in range(d) for r in range(d))
    votes: dict[BasisLabel, int] = {}
    for outcome, n in items:
        if n < 0:
            raise ValueError("counts must be non-negative")
        guess = decode(initial, tuple(outcome), d)
        if guess is not None and n:
            votes[guess] = votes.get(guess, 0) + int(n)
    total = sum(votes.values())
    if total == 0:
        return None, 0.0
    winner = min(votes, key=lambda b: (-votes[b], b.sort_key()))
    return winner, votes[winner] / total


class GameRound(NamedTuple):
    round: int
    b_true: BasisLabel
    guess: BasisLabel | None
    confidence: float

    @property
    def correct(self) -> bool:
        return self.guess is not None and self.guess == self.b_true


@dataclass
class GameResult:
    d: int
    rounds: list[GameRound]

    @property
    def hit_rate(self) -> float:
        if not self.rounds:
            return 0.0
        return sum(r.correct for r in self.rounds) / len(self.rounds)

    def transcript(self) -> list[str]:
        lines = []
        for rd in self.rounds:
            guess = "inconclusive" if rd.guess is None else rd.guess.name(self.d)
            lines.append(
                f"round {rd.round}: king={rd.b_true.name(self.d)} guess={guess} "
                f"confidence={rd.confidence:.4f} {'hit' if rd.correct else 'miss'}"
            )
        lines.append(f"hit rate: {self.hit_rate:.4f}")
        return lines


def ask_king(
    d: int,
    round_no: int,
    read: Callable[[str], str] = input,
    write: Callable[[str], None] = print,
) -> BasisLabel:
    """Prompt until the King types a valid basis name."""
    names = "/".join(b.name(d) for b in basis_labels(d))
    while True:
        text = read(f"round {round_no} - King, choose a basis [{names}]: ")
        try:
            return parse_basis_label(text, d)
        except ValueError as exc:
            write(f"  {exc}; try again")


def run_game(
    rounds: int,
    shots_per_round: int,
    scenario: Scenario,
    king_input="random",
    read: Callable[[str], str] = input,
    write: Callable[[str], None] | None = None,
) -> GameResult:
    """Play ``rounds`` rounds of the guessing game.

    ``king_input`` is a list of labels (scripted), ``"interactive"`` (asks
    through ``read``) or ``"random"`` (uniform choices from the seed).  In
    interactive mode, end of input stops the game after the last full round.
    """
    if rounds < 1 or shots_per_round < 1:
        raise ValueError("rounds and shots_per_round must be positive")
    d = scenario.d
    labels = basis_labels(d)
    if king_input == "random":
        picks = _stream(scenario.seed, _KEY_KING).integers(0, len(labels), rounds)
        script = [labels[k] for k in picks]
    elif king_input == "interactive":
        script = None
    else:
        script = [parse_basis_label(b, d) if isinstance(b, str) else b for b in king_input]
        if len(script) < rounds:
            raise ValueError(f"scripted game needs {rounds} labels, got {len(script)}")
    result = GameResult(d, [])
    for k in range(rounds):
        if script is None:
            try:
                b = ask_king(d, k + 1, read, write or print)
            except EOFError:
                break
        else:
            b = check_basis_label(script[k], d)
        round_scenario = replace(
            scenario, shots=shots_per_round, seed=derive_seed(scenario.seed, _KEY_GAME_ROUND, k)
        )
        stats = run_trials(round_scenario, [b])
        guess, conf = decide_round(round_scenario_counts(stats, b), scenario.initial, d)
        rd = GameRound(k + 1, b, guess, conf)
        result.rounds.append(rd)
        if write is not None:
            write(result_line(rd, d))
    return result


def round_scenario_counts(stats: TrialStats, b: BasisLabel) -> dict[tuple[int, int], int]:
    return {outcome: n for (bb, outcome), n in stats.counts.items() if bb == b}


def result_line(rd: GameRound, d: int) -> str:
    guess = "inconclusive" if rd.guess is None else rd.guess.name(d)
    return f"  Alice guesses {guess} (confidence {rd.confidence:.4f})"

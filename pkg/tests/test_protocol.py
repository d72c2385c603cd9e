import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracking_king.mub import COMPUTATIONAL, BasisLabel, basis_labels, entangled_state
from tracking_king.numerics import density, maximally_mixed, random_density
from tracking_king.protocol import (
    CalibrationError,
    Ideal,
    OpticsBackend,
    OutcomeWhiteNoise,
    Scenario,
    WernerShared,
    alice_outcome_distribution,
    analytic_reliability,
    apply_noise,
    calibrate_noise,
    decide_round,
    decode,
    king_channel,
    outcome_distribution,
    parse_noise,
    run_game,
    run_trials,
    theoretical_table,
)

S2 = 1 / np.sqrt(2)
X, Y = BasisLabel(0), BasisLabel(1)
PHI_PLUS = (0, 0, 0)
PSI_MINUS = (1, 1, 0)


def kraus_channel(rho, b, d, subsystem=1):
    """Independent oracle: explicit sum over outcome projectors."""
    from tracking_king.mub import mub_basis

    out = np.zeros_like(rho)
    for v in mub_basis(d, b):
        p = np.outer(v, v.conj())
        k = np.kron(p, np.eye(d)) if subsystem == 1 else np.kron(np.eye(d), p)
        out += k @ rho @ k
    return out


def test_king_channel_x_on_phi_plus():
    dd = np.kron([1, 1], [1, 1]) / 2
    aa = np.kron([1, -1], [1, -1]) / 2
    expect = 0.5 * density(dd) + 0.5 * density(aa)
    np.testing.assert_allclose(king_channel(density(entangled_state(2, PHI_PLUS)), X, 2), expect, atol=1e-15)


def test_king_channel_z_on_phi_plus():
    expect = np.diag([0.5, 0, 0, 0.5])
    np.testing.assert_allclose(king_channel(density(entangled_state(2, PHI_PLUS)), COMPUTATIONAL, 2), expect, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3])
def test_king_channel_fixes_maximally_mixed(d):
    for b in basis_labels(d):
        np.testing.assert_allclose(king_channel(maximally_mixed(d * d), b, d), maximally_mixed(d * d), atol=1e-15)


@pytest.mark.parametrize("subsystem", [1, 2])
@pytest.mark.parametrize("d", [2, 3, 5])
def test_king_channel_matches_kraus_oracle(d, subsystem):
    rng = np.random.default_rng(10 * d + subsystem)
    for b in basis_labels(d):
        rho = random_density(d * d, rng)
        got = king_channel(rho, b, d, subsystem=subsystem)
        assert np.max(np.abs(got - kraus_channel(rho, b, d, subsystem))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 5]), st.data())
def test_king_channel_lawful(seed, d, data):
    b = data.draw(st.sampled_from(basis_labels(d)))
    rho = random_density(d * d, np.random.default_rng(seed))
    out = king_channel(rho, b, d)
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.max(np.abs(out - out.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(out).min() >= -1e-9
    assert np.max(np.abs(king_channel(out, b, d) - out)) < 1e-10


def test_alice_distribution_table_cells():
    rho = king_channel(density(entangled_state(2, PHI_PLUS)), X, 2)
    np.testing.assert_allclose(alice_outcome_distribution(rho, 0, 2), [[0.5, 0], [0.5, 0]], atol=1e-12)
    rho = king_channel(density(entangled_state(2, PSI_MINUS)), COMPUTATIONAL, 2)
    np.testing.assert_allclose(alice_outcome_distribution(rho, 0, 2), [[0, 0], [0.5, 0.5]], atol=1e-12)
    untouched = density(entangled_state(2, PHI_PLUS))
    np.testing.assert_allclose(alice_outcome_distribution(untouched, 0, 2), [[1, 0], [0, 0]], atol=1e-12)


def test_decode_examples():
    assert decode(PHI_PLUS, (1, 0), 2) == X
    assert decode(PHI_PLUS, (0, 0), 2) is None
    assert decode(PHI_PLUS, (0, 1), 2) == COMPUTATIONAL
    assert decode(PHI_PLUS, (1, 1), 2) == Y
    # 3 + (2 - 4) * inv(3 - 1) = 3 + (-2) * 3 = -3 = 2 mod 5
    assert decode((1, 2, 3), (3, 4), 5) == BasisLabel(2)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_decode_total_and_brute_force(d):
    for c, r, s, c2, r2 in itertools.product(range(d), repeat=5):
        got = decode((c, r, s), (c2, r2), d)
        if (c, r) == (c2, r2):
            assert got is None
        elif c == c2:
            assert got == COMPUTATIONAL
        else:
            # the unique b with (c2 - c) * (b - s) == r - r2 mod d
            sols = [b for b in range(d) if ((c2 - c) * (b - s) - (r - r2)) % d == 0]
            assert sols == [got.phase]


def test_theoretical_table_rows():
    table = theoretical_table(2, PHI_PLUS)
    np.testing.assert_allclose(table[Y], [[0.5, 0], [0, 0.5]], atol=1e-12)  # DV, AH
    table = theoretical_table(2, PSI_MINUS)
    np.testing.assert_allclose(table[X], [[0, 0.5], [0, 0.5]], atol=1e-12)  # AV, AH


def test_theoretical_table_qutrit_inconclusive_third():
    for b, dist in theoretical_table(3, (0, 0, 0)).items():
        rho = kraus_channel(density(entangled_state(3, (0, 0, 0))), b, 3)
        oracle = np.real(entangled_state(3, (0, 0, 0)).conj() @ rho @ entangled_state(3, (0, 0, 0)))
        assert dist[0, 0] == pytest.approx(1 / 3, abs=1e-12)
        assert dist[0, 0] == pytest.approx(oracle, abs=1e-12)


def test_king_on_second_factor_breaks_table_for_s_nonzero():
    # Only the first-factor ordering is compatible with the decoding table when s != 0.
    rho = density(entangled_state(2, (0, 0, 1)))
    dist = alice_outcome_distribution(king_channel(rho, X, 2, subsystem=2), 1, 2)
    outcome = tuple(int(v) for v in np.argwhere(dist > 1e-12)[-1])
    assert decode((0, 0, 1), outcome, 2) == Y


def test_apply_noise_werner_identity_and_white_uniform():
    rho = density(entangled_state(2, PHI_PLUS))
    np.testing.assert_allclose(apply_noise("shared_state", WernerShared(1.0), rho), rho)
    q = np.array([[0.5, 0], [0.5, 0]])
    np.testing.assert_allclose(apply_noise("outcome_distribution", OutcomeWhiteNoise(1.0), q), np.full((2, 2), 0.25))
    assert apply_noise("shared_state", Ideal(), rho) is rho


def test_apply_noise_stage_mismatch():
    with pytest.raises(ValueError):
        apply_noise("shared_state", OutcomeWhiteNoise(0.1), np.eye(4) / 4)


def test_werner_zero_gives_uniform_outcomes():
    q = outcome_distribution(2, PHI_PLUS, X, (WernerShared(0.0),))
    np.testing.assert_allclose(q, np.full((2, 2), 0.25), atol=1e-12)


def test_optics_backend_rejects_qutrits():
    with pytest.raises(ValueError):
        outcome_distribution(3, (0, 0, 0), X, (OpticsBackend(1.0),))


def test_parse_noise():
    assert parse_noise("white:0.374") == OutcomeWhiteNoise(0.374)
    assert parse_noise("ideal") == Ideal()
    with pytest.raises(ValueError):
        parse_noise("white")
    with pytest.raises(ValueError):
        parse_noise("white:1.5")


def test_reliability_monotone_on_grid():
    grid = np.linspace(0, 1, 11)
    white = [analytic_reliability(2, PHI_PLUS, (OutcomeWhiteNoise(p),)) for p in grid]
    werner = [analytic_reliability(2, PHI_PLUS, (WernerShared(x),)) for x in grid]
    optics = [analytic_reliability(2, PHI_PLUS, (OpticsBackend(m),)) for m in grid]
    assert all(a >= b - 1e-12 for a, b in zip(white, white[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(werner, werner[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(optics, optics[1:]))
    assert white[-1] == pytest.approx(0.5)


@pytest.mark.parametrize("d", [3, 5])
def test_reliability_floor_is_one_over_d(d):
    assert analytic_reliability(d, (0, 0, 0), (OutcomeWhiteNoise(1.0),)) == pytest.approx(1 / d)


def test_calibrate_examples():
    assert calibrate_noise(1.0, "white") == pytest.approx(0.0, abs=1e-9)
    assert calibrate_noise(0.5, "white") == pytest.approx(1.0, abs=1e-9)
    assert calibrate_noise(0.813, "white") == pytest.approx(2 * (1 - 0.813), abs=1e-9)
    lam = calibrate_noise(0.813, "werner")
    assert analytic_reliability(2, PHI_PLUS, (WernerShared(lam),)) == pytest.approx(0.813, abs=1e-3)


def test_calibrate_unreachable_names_interval():
    with pytest.raises(CalibrationError) as info:
        calibrate_noise(0.4, "white")
    assert info.value.interval == pytest.approx((0.5, 1.0))


def test_run_trials_ideal():
    stats = run_trials(Scenario(shots=100_000, seed=7))
    assert stats.reliability_expected_mass == 1.0
    assert stats.reliability_conclusive_accuracy == 1.0
    sigma = np.sqrt(0.25 / stats.total)
    assert abs(stats.conclusive_rate - 0.5) < 5 * sigma
    assert sum(stats.counts.values()) == 3 * 100_000
    assert all(bt == bd for (bt, bd) in stats.confusion if bd is not None)


def test_run_trials_white_noise_floor():
    stats = run_trials(Scenario(noise=(OutcomeWhiteNoise(1.0),), shots=100_000, seed=3))
    sigma = np.sqrt(0.25 / stats.total)
    assert abs(stats.reliability_expected_mass - 0.5) < 5 * sigma


def test_run_trials_frequencies_match_analytic():
    n = 100_000
    stats = run_trials(Scenario(d=3, initial=(1, 2, 1), shots=n, seed=11))
    for b, dist in theoretical_table(3, (1, 2, 1)).items():
        freq = stats.frequencies(b)
        sigma = np.sqrt(dist * (1 - dist) / n)
        assert np.all(np.abs(freq - dist) <= 5 * sigma + 1e-15)


def test_run_trials_seed_determinism_and_workers():
    sc = Scenario(noise=(OutcomeWhiteNoise(0.2),), shots=200_000, seed=99)
    a = run_trials(sc, workers=1)
    b = run_trials(sc, workers=4)
    c = run_trials(sc, workers=1)
    assert a == b == c
    assert run_trials(Scenario(noise=(OutcomeWhiteNoise(0.2),), shots=200_000, seed=100)) != a


def test_run_trials_uniform_random_schedule():
    stats = run_trials(Scenario(shots=3000, seed=5), "uniform-random")
    assert stats.total == 3000
    assert stats.reliability_conclusive_accuracy == 1.0


def test_run_trials_single_shot_record():
    stats = run_trials(Scenario(shots=1, seed=1), [X], keep_records=True)
    assert len(stats.records) == 1
    rec = stats.records[0]
    assert rec.b_true == X and rec.decoded in (None, X)


def test_scenario_dict_roundtrip():
    sc = Scenario(3, (1, 2, 0), (WernerShared(0.9), OutcomeWhiteNoise(0.1)), 50, 2**63 + 5)
    doc = sc.to_dict([X, COMPUTATIONAL])
    back, schedule = Scenario.from_dict(doc)
    assert back == sc
    assert schedule == [X, COMPUTATIONAL]


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(shots=0)
    with pytest.raises(ValueError):
        Scenario(d=4)
    with pytest.raises(ValueError):
        Scenario(initial=(2, 0, 0))


def test_decide_round_examples():
    dh, dv, ah, av = (1, 0), (0, 0), (1, 1), (0, 1)
    assert decide_round({dh: 48, dv: 52, ah: 0, av: 0}, PHI_PLUS, 2) == (X, 1.0)
    assert decide_round({dv: 100, dh: 0, ah: 0, av: 0}, PHI_PLUS, 2) == (None, 0.0)
    assert decide_round({dh: 30, ah: 29, av: 1, dv: 40}, PHI_PLUS, 2) == (X, 0.5)


def test_decide_round_tie_prefers_lowest_label():
    guess, conf = decide_round({(0, 1): 5, (1, 0): 5}, PHI_PLUS, 2)
    assert guess == COMPUTATIONAL and conf == 0.5


def test_game_ideal_scripted():
    script = [basis_labels(2)[k % 3] for k in range(20)]
    result = run_game(20, 200, Scenario(seed=1), script)
    assert result.hit_rate == 1.0
    assert [r.b_true for r in result.rounds] == script


def test_game_single_shot_deterministic():
    one = run_game(1, 1, Scenario(seed=42), [X])
    two = run_game(1, 1, Scenario(seed=42), [X])
    assert one == two and len(one.rounds) == 1


def test_game_interactive_reprompts():
    answers = iter(["x", "bogus", "y", "", "z"])
    prompts, lines = [], []

    def read(prompt):
        prompts.append(prompt)
        return next(answers)

    result = run_game(3, 200, Scenario(seed=3), "interactive", read=read, write=lines.append)
    assert [r.b_true.name(2) for r in result.rounds] == ["x", "y", "z"]
    assert len(prompts) == 5
    assert sum("guesses" in line for line in lines) == 3


def test_game_interactive_eof_stops():
    def read(prompt):
        raise EOFError

    result = run_game(3, 10, Scenario(seed=3), "interactive", read=read, write=lambda s: None)
    assert result.rounds == []

"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 unreachable calibration
target.  All output is plain text (no colour), so ``NO_COLOR`` is honoured
trivially.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .mub import (
    BELL_BY_NAME,
    BELL_DICTIONARY,
    COINCIDENCE_ORDER,
    EntangledLabel,
    check_dim,
    check_entangled_label,
    coincidence_label,
    parse_basis_label,
)
from .optics import coincidence_distribution, hom_scan, run_cnot, truth_table
from .protocol import (
    CalibrationError,
    Scenario,
    analytic_reliability,
    calibrate_noise,
    make_noise,
    parse_noise,
    run_game,
    run_trials,
    theoretical_table,
)

SCHEMA_VERSION = 1
EXIT_USAGE = 2
EXIT_CALIBRATION = 3

TABLE_COLUMNS = (
    "d", "initial_c", "initial_r", "initial_s", "b",
    "outcome_c", "outcome_r", "coincidence_label", "probability",
)
TRIALS_COLUMNS = ("kind", "name", "b_true", "outcome_c", "outcome_r", "b_decoded", "value")
HOM_COLUMNS = ("row", "delay", "coincidence", "visibility")
TRUTH_COLUMNS = ("row", "input", "output", "probability", "success_probability", "fidelity")
BELL_COLUMNS = ("bell_state", "coincidence_label", "probability")
GAME_COLUMNS = ("round", "b_true", "guess", "confidence", "correct")
CALIBRATE_COLUMNS = ("family", "target", "parameter", "achieved")


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    """12 significant digits; float residue below 1e-15 prints as 0."""
    x = float(x)
    if abs(x) < 1e-15:
        x = 0.0
    return f"{x:.12g}"


def parse_initial(text, d: int) -> EntangledLabel:
    if isinstance(text, EntangledLabel):
        return check_entangled_label(text, d)
    if isinstance(text, dict):
        return check_entangled_label((text["c"], text["r"], text.get("s", 0)), d)
    if isinstance(text, (list, tuple)):
        return check_entangled_label(tuple(int(v) for v in text), d)
    key = str(text).strip().lower()
    if key in BELL_BY_NAME:
        if d != 2:
            raise UsageError(f"Bell alias {text!r} only valid for d=2")
        return BELL_BY_NAME[key].label
    try:
        values = [int(v) for v in key.split(",")]
    except ValueError:
        raise UsageError(f"invalid initial label {text!r}") from None
    if len(values) == 2:
        values.append(0)
    if len(values) != 3:
        raise UsageError(f"initial label needs c,r[,s], got {text!r}")
    return check_entangled_label(values, d)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc


def _pick(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _noise(args, cfg: dict):
    if args.noise:
        return tuple(parse_noise(n) for n in args.noise)
    raw = cfg.get("noise", [])
    if isinstance(raw, (dict, str)):
        raw = [raw]
    return tuple(
        parse_noise(n) if isinstance(n, str) else make_noise(n["variant"], n.get("parameter"))
        for n in raw
    )


def _schedule(raw, d: int):
    if raw is None:
        return None
    if isinstance(raw, str):
        if raw in ("all", "uniform-random"):
            return raw
        raw = [t for t in raw.split(",") if t.strip()]
    return [parse_basis_label(str(t), d) for t in raw]


def _scenario(args, cfg: dict, need_seed: bool) -> Scenario:
    d = check_dim(int(_pick(args, cfg, "d", 2)))
    initial = parse_initial(_pick(args, cfg, "initial", "0,0,0"), d)
    seed = _pick(args, cfg, "seed")
    if seed is None:
        if need_seed:
            raise UsageError("--seed is required for this command")
        seed = 0
    return Scenario(d, initial, _noise(args, cfg), int(_pick(args, cfg, "shots", 1000)), int(seed))


# -- output ------------------------------------------------------------------


def write_output(args, cfg, command: str, columns, rows, extra: dict | None = None):
    fmt_name = _pick(args, cfg, "format", "csv")
    if fmt_name not in ("csv", "json"):
        raise UsageError(f"unsupported format {fmt_name!r}")
    if fmt_name == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else row.get(c) for c in columns])
        text = buf.getvalue()
    else:
        doc = {"schema_version": SCHEMA_VERSION, "command": command}
        doc.update(extra or {})
        doc["rows"] = [dict(row) for row in rows]
        text = json.dumps(doc, indent=2) + "\n"
    out = _pick(args, cfg, "out")
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------


def table_rows(d: int, initial: EntangledLabel) -> list[dict]:
    rows = []
    for b, dist in theoretical_table(d, initial).items():
        for c in range(d):
            for r in range(d):
                rows.append({
                    "d": d, "initial_c": initial.c, "initial_r": initial.r, "initial_s": initial.s,
                    "b": b.name(d), "outcome_c": c, "outcome_r": r,
                    "coincidence_label": coincidence_label((c, r)) if d == 2 and initial.s == 0 else "",
                    "probability": fmt(dist[c, r]),
                })
    return rows


def cmd_table(args, cfg):
    d = check_dim(int(_pick(args, cfg, "d", 2)))
    initial = parse_initial(_pick(args, cfg, "initial", "0,0,0"), d)
    write_output(args, cfg, "table", TABLE_COLUMNS, table_rows(d, initial))


def cmd_trials(args, cfg):
    scenario = _scenario(args, cfg, need_seed=True)
    schedule = _schedule(_pick(args, cfg, "b_list", cfg.get("b_schedule")), scenario.d)
    stats = run_trials(
        scenario, schedule, workers=int(_pick(args, cfg, "workers", 1)),
        keep_records=bool(args.records),
    )
    doc = stats.to_dict()
    rows = []
    for name in ("conclusive_rate", "reliability_expected_mass", "reliability_conclusive_accuracy"):
        rows.append({"kind": "metric", "name": name, "value": fmt(doc[name])})
    rows.append({"kind": "metric", "name": "total", "value": doc["total"]})
    for item in doc["counts"]:
        rows.append({"kind": "count", "b_true": item["b"], "outcome_c": item["outcome_c"],
                     "outcome_r": item["outcome_r"], "value": item["count"]})
    for item in doc["confusion"]:
        rows.append({"kind": "confusion", "b_true": item["b_true"],
                     "b_decoded": item["b_decoded"], "value": item["count"]})
    for item in doc.get("records", []):
        rows.append({"kind": "record", "b_true": item["b_true"], "outcome_c": item["outcome_c"],
                     "outcome_r": item["outcome_r"], "b_decoded": item["decoded"]})
    sched = schedule if schedule is not None else "all"
    write_output(args, cfg, "trials", TRIALS_COLUMNS, rows,
                 {"scenario": scenario.to_dict(sched), "stats": doc})


def cmd_calibrate(args, cfg):
    d = check_dim(int(_pick(args, cfg, "d", 2)))
    initial = parse_initial(_pick(args, cfg, "initial", "0,0,0"), d)
    target = float(_pick(args, cfg, "target", 0.813))
    family = _pick(args, cfg, "family", "white")
    param = calibrate_noise(target, family, d, initial)
    achieved = analytic_reliability(d, initial, (make_noise(family, param),))
    row = {"family": family, "target": fmt(target), "parameter": fmt(param), "achieved": fmt(achieved)}
    write_output(args, cfg, "calibrate", CALIBRATE_COLUMNS, [row])


def cmd_hom(args, cfg):
    M0 = float(_pick(args, cfg, "M0", 0.829))
    width = float(_pick(args, cfg, "width", 1.0))
    points = int(_pick(args, cfg, "points", 41))
    span = float(_pick(args, cfg, "span", 6.0))
    if width <= 0 or points < 3:
        raise UsageError("need width > 0 and points >= 3")
    curve = hom_scan(np.linspace(-span * width, span * width, points), M0, width)
    rows = [{"row": "point", "delay": fmt(t), "coincidence": fmt(c)}
            for t, c in zip(curve.delays, curve.coincidences)]
    rows.append({"row": "summary", "visibility": fmt(curve.visibility)})
    write_output(args, cfg, "hom", HOM_COLUMNS, rows, {"visibility": curve.visibility})


def cmd_truth_table(args, cfg):
    M = float(_pick(args, cfg, "M", 1.0))
    tt = truth_table(M)
    names = ("HH", "HV", "VH", "VV")
    rows = []
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            rows.append({"row": "entry", "input": a, "output": b,
                         "probability": fmt(tt.probabilities[i, j]),
                         "success_probability": fmt(tt.success[i])})
    rows.append({"row": "summary", "fidelity": fmt(tt.fidelity)})
    write_output(args, cfg, "truth-table", TRUTH_COLUMNS, rows, {"fidelity": tt.fidelity})


def cmd_bell_table(args, cfg):
    from .mub import entangled_state

    M = float(_pick(args, cfg, "M", 1.0))
    rows = []
    for entry in BELL_DICTIONARY:
        out, _ = run_cnot(entangled_state(2, entry.label), M)
        probs = coincidence_distribution(out)
        for label in COINCIDENCE_ORDER:
            rows.append({"bell_state": entry.name, "coincidence_label": label,
                         "probability": fmt(probs[label])})
    write_output(args, cfg, "bell-table", BELL_COLUMNS, rows)


def cmd_game(args, cfg):
    scenario = _scenario(args, cfg, need_seed=True)
    d = scenario.d
    interactive = bool(_pick(args, cfg, "interactive", False))
    b_list = _pick(args, cfg, "b_list")
    rounds = _pick(args, cfg, "rounds")
    shots = int(_pick(args, cfg, "shots_per_round", 200))
    if interactive:
        if not sys.stdin.isatty():
            raise UsageError("--interactive needs a terminal on stdin")
        king = "interactive"
        rounds = int(rounds or 3)
    elif b_list is not None:
        king = _schedule(b_list, d)
        if not isinstance(king, list):
            raise UsageError("--b-list must be an explicit list of bases")
        rounds = int(rounds or len(king))
        if len(king) < rounds:
            raise UsageError(f"--b-list has {len(king)} entries but {rounds} rounds requested")
    else:
        king = "random"
        rounds = int(rounds or 20)

    def read(prompt):
        sys.stdout.write(prompt)
        sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:
            raise EOFError
        return line

    def write(line):
        print(line)

    result = run_game(rounds, shots, scenario, king, read=read,
                      write=write if interactive else None)
    for line in result.transcript():
        print(line)
    if _pick(args, cfg, "out"):
        rows = [{"round": rd.round, "b_true": rd.b_true.name(d),
                 "guess": "inconclusive" if rd.guess is None else rd.guess.name(d),
                 "confidence": fmt(rd.confidence), "correct": int(rd.correct)}
                for rd in result.rounds]
        write_output(args, cfg, "game", GAME_COLUMNS, rows, {"hit_rate": result.hit_rate})


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracking-king", description="Tracking-the-King retrodiction simulator."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, protocol=True):
        p.add_argument("--config", help="JSON file with default values")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if protocol:
            p.add_argument("--d", type=int)
            p.add_argument("--initial", help="c,r[,s] or phi+/phi-/psi+/psi- for d=2")

    def stochastic(p):
        p.add_argument("--noise", action="append",
                       help="ideal | werner:LAMBDA | white:P | optics:M (repeatable)")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("table", help="theoretical truth table")
    common(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("trials", help="Monte Carlo trials")
    common(p)
    stochastic(p)
    p.add_argument("--shots", type=int)
    p.add_argument("--b-list", dest="b_list", help="comma list, 'all' or 'uniform-random'")
    p.add_argument("--workers", type=int)
    p.add_argument("--records", action="store_true", help="emit every event")
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("calibrate", help="noise parameter for a target reliability")
    common(p)
    p.add_argument("--target", type=float)
    p.add_argument("--family", choices=("white", "werner", "optics"))
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("hom", help="Hong-Ou-Mandel scan on PPBS-I")
    common(p, protocol=False)
    p.add_argument("--M0", type=float)
    p.add_argument("--width", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--span", type=float, help="half range in widths")
    p.set_defaults(func=cmd_hom)

    p = sub.add_parser("truth-table", help="ZZ truth table of the optical CNOT")
    common(p, protocol=False)
    p.add_argument("--M", type=float)
    p.set_defaults(func=cmd_truth_table)

    p = sub.add_parser("bell-table", help="Bell-state coincidences of the optical CNOT")
    common(p, protocol=False)
    p.add_argument("--M", type=float)
    p.set_defaults(func=cmd_bell_table)

    p = sub.add_parser("game", help="the King-guessing game")
    common(p)
    stochastic(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--shots-per-round", dest="shots_per_round", type=int)
    p.add_argument("--b-list", dest="b_list")
    p.add_argument("--interactive", action="store_true", default=None)
    p.set_defaults(func=cmd_game)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        args.func(args, cfg)
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (UsageError, ValueError, TypeError, KeyError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())

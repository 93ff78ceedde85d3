"""Command-line front end: ``python3 -m cibgames <command> ...``.

Exit codes: 0 success, 1 validation failure, 2 parse or I/O error,
3 solver or simulation error, 4 unsupported game structure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .belief import initial_belief
from .bestresponse import BestResponsePolicy, UnsupportedStructureError, br_value, solve_best_response
from .model import (
    BUILTIN_NAMES,
    GameFileError,
    GameModel,
    GameValidationError,
    builtin_example,
    check_one_sided,
    dumps,
    load_game,
    models_equal,
    parse_game,
    validate,
)
from .prescriptions import enumerate_pure
from .sim import PolicyError, ScriptedTeam2, simulate, summarize
from .solver import GridSizeError, Refinement, SolverConfig, SolverError, ValueTable, game_value, solve_lower, solve_upper
from .strategy import ConstantPolicy, MinmaxPolicy

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_SOLVER, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4
BUILTIN_PREFIX = "builtin:"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def fmt(v: float) -> str:
    return "%.17g" % float(v)


# -- game and policy I/O ------------------------------------------------------


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(EXIT_IO, "cannot read %s: %s" % (path, exc.strerror or exc))


def read_game(source: str) -> GameModel:
    """A validated game from a file path or ``builtin:<name>``."""
    if source.startswith(BUILTIN_PREFIX):
        try:
            return builtin_example(source[len(BUILTIN_PREFIX) :])
        except ValueError as exc:
            raise CliError(EXIT_IO, str(exc))
    try:
        return load_game(_read_text(source))
    except GameFileError as exc:
        raise CliError(EXIT_IO, "%s: %s" % (source, exc))
    except GameValidationError as exc:
        raise CliError(EXIT_INVALID, "\n".join(exc.violations))


def cell_columns(model: GameModel, cells: Sequence[int]) -> List[str]:
    out = []
    for c in cells:
        x, p1, p2 = model.cell_parts(int(c))
        out.append("pi[%s|%s|%s]" % (model.states[x], model.joint_info_name(1, p1), model.joint_info_name(2, p2)))
    return out


def prescription_columns(model: GameModel, team: int) -> List[str]:
    cols = []
    for j, (infos, acts) in enumerate(zip(model.private_info[team - 1], model.actions[team - 1])):
        for p in infos:
            for a in acts:
                cols.append("g%d.%d[%s:%s]" % (team, j + 1, p, a))
    return cols


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(EXIT_IO, "cannot read %s: %s" % (path, exc.strerror or exc))
    if not rows:
        raise CliError(EXIT_IO, "%s is empty" % path)
    return rows[0], rows[1:]


def config_to_json(cfg: SolverConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["refine"] = [{"states": list(r.states), "m": r.m} for r in cfg.refine]
    return d


def config_from_json(d: dict) -> SolverConfig:
    d = dict(d)
    d["refine"] = tuple(Refinement(tuple(r["states"]), int(r["m"])) for r in d.get("refine", []))
    return SolverConfig(**d)


def write_tables(out: str, model: GameModel, tables: Sequence[ValueTable], cfg: SolverConfig, value: float) -> None:
    os.makedirs(out, exist_ok=True)
    kind = tables[0].kind
    coords = cell_columns(model, tables[0].cells)
    team = tables[0].team
    for tab in tables:
        _write_csv(
            os.path.join(out, "values_%d.csv" % tab.t),
            coords + ["value", "heuristic"],
            ([fmt(v) for v in p] + [fmt(val), int(h)] for p, val, h in zip(tab.points, tab.values, tab.heuristic)),
        )
        _write_csv(
            os.path.join(out, "presc_%d.csv" % tab.t),
            coords + prescription_columns(model, team),
            ([fmt(v) for v in p] + [fmt(v) for v in th] for p, th in zip(tab.points, tab.thetas)),
        )
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("kind %s\n" % kind)
        fh.write("game_value %s\n" % fmt(value))
        fh.write("stages %d\n" % model.horizon)
        fh.write("grid_points %s\n" % " ".join(str(len(t)) for t in tables))
        fh.write("heuristic_points %d\n" % sum(int(t.heuristic.sum()) for t in tables))
    with open(os.path.join(out, "solver.json"), "w", encoding="utf-8") as fh:
        json.dump({"kind": kind, "config": config_to_json(cfg)}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "game.json"), "w", encoding="utf-8") as fh:
        fh.write(dumps(model))


def read_tables(directory: str, model: GameModel) -> Tuple[List[ValueTable], SolverConfig]:
    """Value tables and solver settings saved by ``solve``."""
    try:
        meta = json.loads(_read_text(os.path.join(directory, "solver.json")))
        saved = parse_game(_read_text(os.path.join(directory, "game.json")))
    except (GameFileError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_IO, "%s: %s" % (directory, exc))
    if not models_equal(saved, model):
        raise CliError(EXIT_SOLVER, "policy in %s was solved for a different game" % directory)
    cfg = config_from_json(meta["config"])
    cells = model.live_cells()
    ncoord = len(cells)
    expect = cell_columns(model, cells)
    tables = []
    for t in range(1, model.horizon + 1):
        vh, vrows = _read_csv(os.path.join(directory, "values_%d.csv" % t))
        ph, prows = _read_csv(os.path.join(directory, "presc_%d.csv" % t))
        if vh[:ncoord] != expect or ph[:ncoord] != expect or len(vrows) != len(prows):
            raise CliError(EXIT_SOLVER, "stage %d files in %s do not match the game" % (t, directory))
        try:
            V = np.array(vrows, dtype=float)
            P = np.array(prows, dtype=float)
        except ValueError as exc:
            raise CliError(EXIT_IO, "stage %d files in %s: %s" % (t, directory, exc))
        tables.append(
            ValueTable(
                t=t,
                kind=meta["kind"],
                cells=cells,
                n_cells=model.n_cells,
                points=V[:, :ncoord],
                values=V[:, ncoord],
                thetas=P[:, ncoord:],
                heuristic=V[:, ncoord + 1].astype(bool),
                k=cfg.neighbours(ncoord),
                power=cfg.power,
            )
        )
    return tables, cfg


def _parse_refine(spec: str) -> Refinement:
    try:
        states, m = spec.rsplit(":", 1)
        return Refinement(tuple(s for s in states.split(",") if s), int(m))
    except ValueError:
        raise argparse.ArgumentTypeError("refinement must look like 'l_a,r_a:100'")


# -- commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    if args.game.startswith(BUILTIN_PREFIX):
        model = read_game(args.game)
    else:
        try:
            model = parse_game(_read_text(args.game))
        except GameFileError as exc:
            raise CliError(EXIT_IO, "%s: %s" % (args.game, exc))
    problems = validate(model)
    if model.cib_control == "team1_only":
        diag = check_one_sided(model)
        print("one-sided belief control: %s" % ("holds" if diag.holds else "fails (%s)" % diag.reason))
    if problems:
        for p in problems:
            print(p)
        print("%d violation(s)" % len(problems))
        return EXIT_INVALID
    print("ok: %d states, %d stages, %d increments" % (model.n_states, model.horizon, model.n_increments))
    return EXIT_OK


def cmd_export(args) -> int:
    model = read_game(BUILTIN_PREFIX + args.name)
    text = dumps(model)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(EXIT_IO, "cannot write %s: %s" % (args.out, exc.strerror or exc))
    return EXIT_OK


def _config(args) -> SolverConfig:
    return SolverConfig(
        grid=args.grid,
        restarts=args.restarts,
        seed=args.seed,
        max_iter=args.max_iter,
        eps_opt=args.eps_opt,
        refine=tuple(args.refine or ()),
    )


def cmd_solve(args) -> int:
    model = read_game(args.game)
    try:
        cfg = _config(args)
    except ValueError as exc:
        raise CliError(EXIT_SOLVER, str(exc))

    def progress(t, tab):
        if args.verbose:
            print("stage %d: %d beliefs" % (t, len(tab)), file=sys.stderr)

    if args.lower:
        warm = solve_upper(model, cfg, progress) if args.warm_start else None
        tables = solve_lower(model, cfg, progress, warm_start=warm)
    else:
        tables = solve_upper(model, cfg, progress)
    value = game_value(tables, initial_belief(model))
    write_tables(args.out, model, tables, cfg, value)
    print("%s value at initial belief: %s" % (tables[0].kind, fmt(value)))
    return EXIT_OK


def _team1_policy(model: GameModel, source: str):
    if source == "uniform":
        return ConstantPolicy.uniform(model), SolverConfig()
    tables, cfg = read_tables(source, model)
    if tables[0].kind != "upper":
        raise CliError(EXIT_SOLVER, "Team-1 policy needs upper tables (solve --upper)")
    try:
        return MinmaxPolicy(model, tables, cfg), cfg
    except ValueError as exc:
        raise CliError(EXIT_SOLVER, str(exc))


def _require_one_sided(model: GameModel) -> None:
    if model.cib_control != "team1_only":
        raise CliError(EXIT_UNSUPPORTED, "best response needs cib_control='team1_only'")


def cmd_best_response(args) -> int:
    model = read_game(args.game)
    _require_one_sided(model)
    policy, cfg = _team1_policy(model, args.policy)
    tables = solve_best_response(model, policy, cfg)
    os.makedirs(args.out, exist_ok=True)
    coords = cell_columns(model, tables[0].cells)
    for tab in tables:
        pures = enumerate_pure(model, 2, tab.t, cfg.enum_cap)
        _write_csv(
            os.path.join(args.out, "br_values_%d.csv" % tab.t),
            coords + ["value"],
            ([fmt(v) for v in p] + [fmt(val)] for p, val in zip(tab.points, tab.values)),
        )
        _write_csv(
            os.path.join(args.out, "br_actions_%d.csv" % tab.t),
            coords + ["index", "prescription"],
            (
                [fmt(v) for v in p] + [int(a), _pure_label(pures[int(a)].action_names(model))]
                for p, a in zip(tab.points, tab.actions)
            ),
        )
    value = br_value(tables, initial_belief(model))
    with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("exploitability %s\n" % fmt(value))
    print("best-response value at initial belief: %s" % fmt(value))
    return EXIT_OK


def _pure_label(names) -> str:
    return ";".join("/".join(row) for row in names)


def _opponent(model: GameModel, kind: str, policy, cfg: SolverConfig):
    if kind == "uniform":
        return ScriptedTeam2.uniform(model)
    if kind == "br":
        _require_one_sided(model)
        return BestResponsePolicy(model, solve_best_response(model, policy, cfg), cfg)
    try:
        spec = json.loads(_read_text(kind))
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_IO, "%s: line %d, column %d: %s" % (kind, exc.lineno, exc.colno, exc.msg))
    return ScriptedTeam2(model, spec)


def cmd_simulate(args) -> int:
    model = read_game(args.game)
    if args.n < 1:
        raise CliError(EXIT_SOLVER, "--n must be >= 1")
    policy, cfg = _team1_policy(model, args.policy)
    team2 = _opponent(model, args.opponent, policy, cfg)
    seeds = list(range(args.seed + 1, args.seed + args.n + 1))
    trajs = simulate(model, policy, team2, seeds)
    res = summarize([tr.total for tr in trajs])
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_csv(
            os.path.join(args.out, "rollouts.csv"),
            ["seed", "total_cost"],
            ([s, fmt(tr.total)] for s, tr in zip(seeds, trajs)),
        )
    flag = " (single rollout: no spread estimate)" if args.n == 1 else ""
    print("mean cost %s +/- %s over %d rollouts%s" % (fmt(res.mean), fmt(res.stderr), args.n, flag))
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cibgames", description="Team zero-sum games over common-information beliefs.")
    sub = ap.add_subparsers(dest="command", required=True)
    game_help = "game file, or builtin:<name> (%s)" % ", ".join(BUILTIN_NAMES)

    p = sub.add_parser("validate", help="check a game file")
    p.add_argument("game", help=game_help)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export", help="write a built-in game as a game file")
    p.add_argument("name", choices=BUILTIN_NAMES)
    p.add_argument("--out", "-o", help="output path (default stdout)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("solve", help="approximate upper or lower value tables")
    p.add_argument("game", help=game_help)
    side = p.add_mutually_exclusive_group()
    side.add_argument("--upper", action="store_true", help="min-max tables (default)")
    side.add_argument("--lower", action="store_true", help="max-min tables")
    p.add_argument("--grid", type=int, default=20, help="belief grid denominator")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--eps-opt", type=float, default=1e-4)
    p.add_argument("--refine", type=_parse_refine, action="append", metavar="STATES:M", help="extra grid on a face, e.g. l_a,r_a:100")
    p.add_argument("--warm-start", action="store_true", help="with --lower: seed Team 1 from an upper solve")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("best-response", help="Team-2 best response to a solved policy")
    p.add_argument("game", help=game_help)
    p.add_argument("--policy", required=True, help="directory written by solve --upper, or 'uniform'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_best_response)

    p = sub.add_parser("simulate", help="Monte Carlo cost of a policy pair")
    p.add_argument("game", help=game_help)
    p.add_argument("--policy", required=True, help="directory written by solve --upper, or 'uniform'")
    p.add_argument("--opponent", default="br", help="br, uniform, or a scripted-opponent JSON file")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for rollouts.csv")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.code
    except UnsupportedStructureError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (SolverError, GridSizeError, PolicyError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

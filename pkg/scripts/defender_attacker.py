"""Defender/attacker experiment: solve, print the active slice, BR map and MC check.

Usage: python3 scripts/defender_attacker.py [--grid 20] [--restarts 8] [--n 10000]
"""

import argparse
import time

import numpy as np

from cibgames.belief import Belief, initial_belief
from cibgames.bestresponse import BestResponsePolicy, br_value, exploitability, solve_best_response
from cibgames.model import defender_attacker
from cibgames.prescriptions import enumerate_pure
from cibgames.sim import monte_carlo_cost
from cibgames.solver import Refinement, SolverConfig, game_value, interpolate, solve_upper
from cibgames.strategy import ConstantPolicy, MinmaxPolicy


def slice_belief(model, p):
    w = np.zeros(model.n_cells)
    w[model.live_cells()] = [p, 1.0 - p, 0.0, 0.0]
    return Belief(1, w)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=20)
    ap.add_argument("--restarts", type=int, default=8)
    ap.add_argument("--slice", type=int, default=100, help="refinement on the attacker-active edge")
    ap.add_argument("--n", type=int, default=10_000, help="Monte Carlo rollouts (0 to skip)")
    args = ap.parse_args()

    model = defender_attacker()
    cfg = SolverConfig(grid=args.grid, restarts=args.restarts, refine=(Refinement(("l_a", "r_a"), args.slice),))
    t0 = time.perf_counter()
    tables = solve_upper(model, cfg, progress=lambda t, tab: print("stage %2d done, %.0f s" % (t, time.perf_counter() - t0)))
    print("game value %.4f" % game_value(tables, initial_belief(model)))

    policy = MinmaxPolicy(model, tables, cfg)
    br = solve_best_response(model, policy, cfg)
    labels = [q.action_names(model)[0][0] for q in enumerate_pure(model, 2, 1)]
    print("\n  pi(0)   V1       attack  signaler P(alpha | l_a), P(alpha | r_a)")
    for p in np.round(np.arange(0.0, 1.0001, 0.05), 2):
        b = slice_belief(model, p)
        i = br[0].index_of(b.weights[model.live_cells()])
        rows = policy.prescription(1, b).maps[0]
        print("  %.2f  %7.3f  %-6s  %.3f, %.3f" % (p, interpolate(tables[0], b), labels[int(br[0].actions[i])], rows[0, 0], rows[1, 0]))

    dp = br_value(br, initial_belief(model))
    print("\nexploitability: minimax %.4f, uniform %.4f" % (dp, exploitability(model, ConstantPolicy.uniform(model), cfg)))
    if args.n:
        res = monte_carlo_cost(model, policy, BestResponsePolicy(model, br, cfg), args.n, seed=0)
        print("Monte Carlo %.3f +/- %.3f over %d rollouts (DP %.3f)" % (res.mean, res.stderr, res.n, dp))


if __name__ == "__main__":
    main()

"""Command-line interface: ``drsmpc certify|solve|simulate|feasible-set``.

Exit codes: 0 success, 2 infeasible (tightening, certificate or initial
program), 3 solver or synthesis failure.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .errors import InitialInfeasible, NotSchurStable, SolverError, SynthesisFailed, TighteningInfeasible
from .ocp import OPTIMAL, SOLVER_ERROR, OcpBuilder
from .scenarios import load_scenario
from .sim import feasible_set_scan, monte_carlo, summary_lines, write_feasible_csv, write_outputs
from .tightening import METHODS, UNBOUNDED, certify_terminal, stage_radii, terminal_set

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3


def _vector(text):
    return np.array([float(t) for t in text.replace(";", ",").split(",") if t.strip()])


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()] if v.ndim else _jsonable(v.item())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    return v


def _methods(text):
    names = list(METHODS) if text == "all" else [m.strip() for m in text.split(",")]
    for m in names:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}")
    return names


def cmd_certify(args):
    sc = load_scenario(args.scenario)
    art = sc.synthesize()
    report = {
        "scenario": sc.name,
        "method": args.method,
        "K": art.K,
        "S": art.S,
        "SigmaBar": art.SigmaBar,
        "spectral_radius": art.spectralRadius,
        "trace_SW": float(np.trace(art.S @ art.W)),
    }
    code = EXIT_OK
    try:
        radii = stage_radii(sc.constraints, art, None, args.method, sc.input_tightening)
        report["stage_radii"] = radii.stage
        report["stage_variance"] = radii.variance
        report["terminal_radii"] = radii.terminal
        term = terminal_set(sc.constraints, art, args.method)
        rep = certify_terminal(art, sc.constraints, term, args.method, sc.input_tightening)
        report["terminal"] = {
            "invariant": rep.invariant,
            "inputAdmissible": rep.inputAdmissible,
            "invariance_margins": list(rep.invariance_margins),
            "input_margins": list(rep.input_margins),
            "certified": rep.certified,
        }
        if rep.invariant is False or rep.inputAdmissible is False:
            code = EXIT_INFEASIBLE
        elif UNBOUNDED in (rep.invariant, rep.inputAdmissible):
            print("warning: terminal set is unbounded along a checked direction; certificate inconclusive",
                  file=sys.stderr)
    except TighteningInfeasible as exc:
        report["error"] = str(exc)
        code = EXIT_INFEASIBLE
    text = json.dumps(_jsonable(report), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return code


def cmd_solve(args):
    sc = load_scenario(args.scenario)
    art = sc.synthesize()
    x0 = sc.x0 if args.x0 is None else _vector(args.x0)
    builder = OcpBuilder(sc.model, sc.cost, sc.constraints, art, args.method, args.form, sc.input_tightening)
    sol = builder.solve(x0)
    if sol.status != OPTIMAL:
        print(f"{sol.status}: {sol.detail}", file=sys.stderr)
        return EXIT_SOLVER if sol.status == SOLVER_ERROR else EXIT_INFEASIBLE
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        n_x, n_u = sc.model.n_x, sc.model.n_u
        w.writerow(["stage"] + [f"xbar{i + 1}" for i in range(n_x)] + [f"ubar{i + 1}" for i in range(n_u)])
        for l, x in enumerate(sol.nominalStates):
            u = sol.nominalInputs[l] if l < len(sol.nominalInputs) else [""] * n_u
            w.writerow([l] + [format(v, ".17g") for v in x] + [v if v == "" else format(v, ".17g") for v in u])
    finally:
        if fh is not sys.stdout:
            fh.close()
    print(f"cost: {sol.cost:.17g}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args):
    sc = load_scenario(args.scenario)
    try:
        res = monte_carlo(sc, args.method, args.runs, args.seed, args.jobs, args.steps, args.form)
    except InitialInfeasible as exc:
        print(f"initial program infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    write_outputs(res, args.out)
    print("\n".join(summary_lines(res)))
    return EXIT_OK


def cmd_feasible_set(args):
    sc = load_scenario(args.scenario)
    art = sc.synthesize()
    dims = tuple(int(t) for t in args.dims.split(","))
    base = None if args.base is None else _vector(args.base)
    sets = [feasible_set_scan(sc, m, args.grid, dims, base, art, args.form) for m in args.method]
    os.makedirs(args.out, exist_ok=True)
    write_feasible_csv(sets, os.path.join(args.out, "feasible.csv"))
    for s in sets:
        print(f"{s.method}: {s.count} cells, area {s.area:.6g}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="drsmpc", description="Distributionally robust stochastic MPC toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="synthesize K, S, SigmaBar and certify the terminal set")
    c.add_argument("--scenario", required=True, help="scenario file or builtin:<name>")
    c.add_argument("--method", choices=METHODS, default="dr")
    c.add_argument("--out", help="write the JSON report here instead of stdout")
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("solve", help="solve one finite-horizon program")
    s.add_argument("--scenario", required=True)
    s.add_argument("--x0", help='initial nominal state, e.g. "1,2" (default: scenario x0)')
    s.add_argument("--method", choices=METHODS, default="dr")
    s.add_argument("--form", choices=("conic", "condensed"))
    s.add_argument("--out", help="trajectory CSV path (default: stdout)")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", help="seeded Monte Carlo closed-loop runs")
    m.add_argument("--scenario", required=True)
    m.add_argument("--method", choices=METHODS, default="dr")
    m.add_argument("--runs", type=int, default=100)
    m.add_argument("--steps", type=int)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--form", choices=("conic", "condensed"))
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=cmd_simulate)

    f = sub.add_parser("feasible-set", help="grid scan of feasible initial nominal states")
    f.add_argument("--scenario", required=True)
    f.add_argument("--method", type=_methods, default=list(METHODS), help="method, comma list, or 'all'")
    f.add_argument("--grid", default="-2.5:2.5:0.05,-3.5:3.5:0.05")
    f.add_argument("--dims", default="0,1", help="state indices spanned by the grid")
    f.add_argument("--base", help="values of the remaining state coordinates")
    f.add_argument("--form", choices=("conic", "condensed"))
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(func=cmd_feasible_set)
    return p


_VALUE_FLAGS = ("--grid", "--x0", "--base")


def _join_values(argv):
    # values such as "-2.5:2.5:0.05" would otherwise be read as options
    out, it = [], iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_values(argv))
    try:
        return args.func(args)
    except (SolverError, SynthesisFailed, NotSchurStable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

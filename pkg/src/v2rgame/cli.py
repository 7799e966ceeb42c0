"""``v2rgame`` command: one scenario file, one subcommand per analysis.

Every subcommand writes a table.  CSV output starts with ``# schema=1``
and ``# command=...`` lines, then a header row, then data rows, then
``# key=value`` summary lines.  JSON output holds the same content.
Exit codes: 0 success, 1 computational failure (or a ``compare`` bound
exceeded), 2 bad scenario or arguments.

``V2RGAME_WORKERS`` sets the number of processes used for simulator
replications (default 1).  Row order does not depend on it.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import game as gm
from . import mac, pricing, sim, traffic
from .scenario import ScenarioError, load

OUTPUT_SCHEMA = 1


@dataclasses.dataclass
class Table:
    columns: tuple
    rows: list
    meta: dict = dataclasses.field(default_factory=dict)
    ok: bool = True


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("nan" if v != v else ("inf" if v > 0 else "-inf"))
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else _cell(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_json_value(u) for u in v]
    return v


def render(table: Table, command: str, fmt: str) -> str:
    if fmt == "json":
        doc = {"schema": OUTPUT_SCHEMA, "command": command, "columns": list(table.columns),
               "rows": [[_json_value(v) for v in r] for r in table.rows],
               "meta": {k: _json_value(v) for k, v in table.meta.items()}}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema={OUTPUT_SCHEMA}\n# command={command}\n")
    buf.write(",".join(table.columns) + "\n")
    for r in table.rows:
        buf.write(",".join(_cell(v) for v in r) + "\n")
    for k, v in table.meta.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(_cell(u) for u in np.ravel(v))
        else:
            v = _cell(v)
        buf.write(f"# {k}={v}\n")
    return buf.getvalue()


def _workers():
    raw = os.environ.get("V2RGAME_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ScenarioError([f"V2RGAME_WORKERS: expected an integer, got {raw!r}"]) from None


def _own_mix(scn, j, c):
    cls = scn.vehicle_classes()[c]
    return mac.PayloadMix.from_regions(scn.region_probs(), cls.frame_len,
                                       scn.data["channels"][j]["rates"][c])


# subcommands -------------------------------------------------------------

def cmd_traffic_dist(scn, args):
    classes = scn.vehicle_classes()
    sweep = scn.data["analysis"]["lambda_sweep"] or [classes[0].lambda_]
    rows = []
    for lam in sorted(sweep):
        swept = [dataclasses.replace(classes[0], lambda_=lam)] + classes[1:]
        for c, cls in enumerate(swept):
            pmf = traffic.count_pmf(cls, scn.d)
            for n, p in enumerate(pmf.probs):
                rows.append((lam, c, pmf.mean, n, p))
    return Table(("lambda1", "class", "mean", "n", "prob"), rows)


def cmd_fixed_point(scn, args):
    rows = []
    for j, p in enumerate(scn.mac_parameters()):
        for n in sorted(scn.data["analysis"]["n"]):
            fp = mac.solve_fixed_point(p, n)
            rows.append((j, n, fp.gamma, fp.beta, fp.p0, fp.residual, fp.iterations))
    return Table(("channel", "n", "gamma", "beta", "p0", "residual", "iterations"), rows)


def cmd_service_time(scn, args):
    rows = []
    for j, p in enumerate(scn.mac_parameters()):
        for n in sorted(scn.data["analysis"]["n"]):
            fp, states = mac.analyze(p, n)
            for c in range(len(scn.vehicle_classes())):
                mix = _own_mix(scn, j, c)
                rows.append((j, c, n, mac.mean_service_time(p, fp, states, mix),
                             *states.as_array()))
    return Table(("channel", "class", "n", "service_time", "p_idle", "p_succ", "p_coll"), rows)


def cmd_throughput(scn, args):
    rows = []
    classes = scn.vehicle_classes()
    for j, p in enumerate(scn.mac_parameters()):
        for n in sorted(scn.data["analysis"]["n"]):
            fp = mac.solve_fixed_point(p, n)
            for c, cls in enumerate(classes):
                mix = _own_mix(scn, j, c)
                thr = mac.throughput(p, fp, cls.frame_len, mean_payload=mix.mean, n=n)
                rows.append((j, c, n, thr, n * thr))
    return Table(("channel", "class", "n", "per_node", "aggregate"), rows)


def _state_columns(game):
    C, L = game.shape
    return tuple(f"x_{c}_{l}" for c in range(C) for l in range(L))


def cmd_game_run(scn, args):
    game = scn.game()
    b = scn.data["game"]["bnn"]
    start = None
    if args.seed is not None:
        start = gm.GameState.random(game.masses, game.available,
                                    np.random.default_rng(args.seed))
    res = gm.run_bnn(game, start, h=b["h"], eps=b["eps"], max_steps=int(b["max_steps"]),
                     record_every=int(b["record_every"]) or 1)
    meta = {"steps": res.steps, "theta": res.theta[-1], "mass_drift": res.mass_drift,
            "converged": res.converged}
    return Table(("step", "theta", "max_excess", *_state_columns(game)), res.to_rows(), meta,
                 ok=res.converged)


def cmd_game_optimize(scn, args):
    game = scn.game()
    o = scn.data["game"]["optimizer"]
    seed = o["seed"] if args.seed is None else args.seed
    res = gm.optimize_potential(game, starts=int(o["starts"]), seed=seed)
    F = gm.payoff(game, gm.GameState(res.x, game.masses, game.available)).F
    C, L = game.shape
    rows = [(c, l, res.x[c, l], F[c, l]) for c in range(C) for l in range(L)]
    return Table(("class", "channel", "x", "payoff"), rows,
                 {"theta": res.theta, "starts": len(res.starts), "iterations": res.iterations})


def cmd_pricing(scn, args):
    grid = scn.data["pricing"]["grid"]
    if grid is None:
        raise ScenarioError(["pricing.grid: missing"])
    game = scn.game()
    b = scn.data["game"]["bnn"]
    seed = scn.data["pricing"]["seed"] if args.seed is None else args.seed
    res = pricing.solve_pricing(game, pricing.price_grid(grid), seed=seed, h=b["h"],
                                eps=b["eps"], max_steps=int(b["max_steps"]))
    C = game.shape[0]
    cols = (*(f"p_{c}" for c in range(C)), "theta", "psi", "converged")
    return Table(cols, res.to_rows(), {"p_star": res.p_star, "psi_star": res.psi_star})


def _replicate(scn, args):
    base = scn.data["sim"]["seed"] if args.seed is None else args.seed
    configs = [scn.sim_config(seed=base + r) for r in range(int(scn.data["sim"]["replications"]))]
    workers = min(_workers(), len(configs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(sim.run, configs))
    return [sim.run(c) for c in configs]


def cmd_simulate(scn, args):
    rows = [(r, *row) for r, res in enumerate(_replicate(scn, args)) for row in res.to_rows()]
    return Table(("replication", *sim.SimResult.columns), rows)


SLOT_METRICS = ("p_idle", "p_succ", "p_coll")


def cmd_compare(scn, args):
    bounds = scn.data["sim"]["bounds"]
    rows = []
    ok = True
    for r, res in enumerate(_replicate(scn, args)):
        for cmp in sim.compare_with_analytic(res):
            if cmp.metric in SLOT_METRICS:
                err, bound = abs(cmp.simulated - cmp.analytic), bounds["slot_abs"]
            else:
                err, bound = cmp.rel_error, bounds[cmp.metric]
            within = err <= bound
            ok &= within
            rows.append((r, cmp.metric, cmp.channel, cmp.cls, cmp.simulated, cmp.analytic,
                         err, bound, within))
    return Table(("replication", "metric", "channel", "class", "simulated", "analytic",
                  "error", "bound", "within"), rows, {"all_within": ok}, ok=ok)


COMMANDS = {
    "traffic-dist": (cmd_traffic_dist, "vehicle-count pmf per class, optionally over a density sweep"),
    "fixed-point": (cmd_fixed_point, "collision probability and attempt rate per channel and n"),
    "service-time": (cmd_service_time, "mean MAC service time per channel, class and n"),
    "throughput": (cmd_throughput, "per-node and aggregate throughput per channel, class and n"),
    "game-run": (cmd_game_run, "BNN trajectory to the channel-selection equilibrium"),
    "game-optimize": (cmd_game_optimize, "multi-start projected-gradient potential maximum"),
    "pricing": (cmd_pricing, "RSU gain over the price grid and its maximizer"),
    "simulate": (cmd_simulate, "slotted DCF simulation of the scenario"),
    "compare": (cmd_compare, "simulation against the analytic model, checked against bounds"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="v2rgame", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", required=True, metavar="PATH")
        p.add_argument("--out", metavar="PATH", help="output file (default: scenario or stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--quiet", action="store_true", help="suppress warnings and notes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        scn = load(args.scenario)
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            table = func(scn, args)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2
    fmt = args.format or scn.data["output"]["format"]
    text = render(table, args.command, fmt)
    out = args.out or scn.data["output"]["path"]
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        log(f"wrote {len(table.rows)} rows to {out}")
    else:
        sys.stdout.write(text)
    if not table.ok:
        log(f"{args.command}: result outside tolerance")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

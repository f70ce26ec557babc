"""Command-line front end: ``zrp <command> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure. Every
run writes its resolved configuration and seed to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import bdchain, dynamics, llt, spectral
from .errors import InvalidInput, NumericalFailure
from .lattice import complete_graph, cube
from .model import (canonical, check_stochastic_domination, load_rate_file, resolve_rates,
                    verify_conditions)
from .reports import emit_report

COMMANDS = ("gap", "logsob", "ed", "sweep", "bd", "miclo", "llt", "econd", "dominate",
            "simulate", "decay", "colour-check", "couple")


def parse_sides(text: str) -> list[int]:
    """``"2..8"`` (inclusive range) or ``"2,4,8"``."""
    try:
        if ".." in text:
            a, b = text.split("..")
            vals = list(range(int(a), int(b) + 1))
        else:
            vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInput(f"cannot parse size list {text!r}; use a..b or a,b,c") from None
    if not vals:
        raise InvalidInput(f"empty size list {text!r}")
    if min(vals) < 2:
        raise InvalidInput("side must be ≥ 2")
    return vals


def _common(p: argparse.ArgumentParser, particles: bool = True) -> None:
    p.add_argument("--dim", type=int, default=1, help="lattice dimension (default 1)")
    p.add_argument("--side", type=int, default=2, help="cube side length N (default 2)")
    if particles:
        p.add_argument("--particles", "-r", type=int, default=2, help="particle number r")
    p.add_argument("--rates", default="linear",
                   help="preset: linear, linear-theta:T, alternating:T1,T2, staircase")
    p.add_argument("--rates-file", help="rate-family file (overrides --rates)")
    p.add_argument("--topology", choices=("nn", "complete"), default="nn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zrp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    for name, helptext in (("gap", "exact spectral gap"),
                           ("logsob", "gap plus log-Sobolev and entropy-dissipation estimates"),
                           ("ed", "gap plus entropy-dissipation estimate")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name != "gap":
            p.add_argument("--restarts", type=int, default=32)
            p.add_argument("--iterations", type=int, default=2000)

    p = sub.add_parser("sweep", help="constant versus side length with log-log fit")
    _common(p, particles=False)
    p.add_argument("--kind", choices=("gap", "LS", "ED"), default="gap")
    p.add_argument("--sides", default="2..6", help="a..b or comma list")
    p.add_argument("--r-rule", default="N", help="particles per size: N, kN (e.g. 2N) or an integer")
    p.add_argument("--fit", action="store_true", help="report the fitted slope on stderr")
    p.add_argument("--restarts", type=int, default=32)

    p = sub.add_parser("bd", help="birth-death reductions")
    _common(p)
    p.add_argument("--chain", choices=("metropolis", "single-site", "two-site"),
                   default="metropolis")
    p.add_argument("--site", type=int, default=0, help="site for the single-site chain")
    p.add_argument("--split", help="comma list of sites in the first half (default: first half)")
    p.add_argument("--restarts", type=int, default=16)

    p = sub.add_parser("miclo", help="Miclo-type conditions for the boundary count law")
    _common(p)
    p.add_argument("--law", choices=("gamma1", "binomial", "modified"), default="gamma1")
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--split", help="comma list of sites in the first half")

    p = sub.add_parser("llt", help="Edgeworth local limit errors against the exact law")
    _common(p, particles=False)
    p.add_argument("--sides", default="16,32,64,128", help="volume side lengths")
    p.add_argument("--J", default="2,3", help="expansion orders")
    p.add_argument("--phi", type=float, default=1.0)

    p = sub.add_parser("econd", help="sqrt(r) mu(R=r) statistics over sizes and r")
    _common(p, particles=False)
    p.add_argument("--sizes", default="2,4,8", help="volume sizes |Λ|")
    p.add_argument("--r-max", type=int, default=50)

    p = sub.add_parser("dominate", help="stochastic domination between r and r+M particles")
    _common(p)
    p.add_argument("--extra", type=int, help="M (default ceil(B|Λ|))")

    p = sub.add_parser("simulate", help="event-driven trajectory")
    _common(p)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--sample-dt", type=float)
    p.add_argument("--colours", help="r1,r2 for two-colour dynamics")
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--observable", default="eta:0", help="eta:x, occupation of site x")

    p = sub.add_parser("decay", help="empirical relaxation rate of an observable")
    _common(p)
    p.add_argument("--replicas", type=int, default=400)
    p.add_argument("--T", type=float)
    p.add_argument("--observable", default="eta:0")

    p = sub.add_parser("colour-check", help="two-colour generator against colour-blind projection")
    _common(p, particles=False)
    p.add_argument("--max-particles", type=int, default=3)

    p = sub.add_parser("couple", help="order-preserving coupled complete-graph simulation")
    _common(p)
    p.add_argument("--extra", type=int, help="M (default ceil(B|Λ|))")
    p.add_argument("--events", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=50)
    return ap


# ---------------------------------------------------------------------------


def _validate(args) -> None:
    if args.dim < 1:
        raise InvalidInput("dim must be ≥ 1")
    if args.side < 2:
        raise InvalidInput("side must be ≥ 2")
    if getattr(args, "particles", 0) < 0:
        raise InvalidInput("particles must be ≥ 0")


def _rates(args, n: int):
    if args.rates_file:
        rf = load_rate_file(args.rates_file)
        return resolve_rates(rf, n)
    return resolve_rates(args.rates, n)


def _instance(args, lat, r=None) -> dict:
    out = {"dim": args.dim, "side": args.side, "n_sites": lat.n_sites,
           "rates": args.rates_file or args.rates, "topology": args.topology}
    if r is not None:
        out["particles"] = r
    return out


def _setup(args):
    lat = cube(args.dim, args.side)
    rf = _rates(args, lat.n_sites)
    return lat, rf


def _split(args, n):
    if getattr(args, "split", None):
        return tuple(int(v) for v in args.split.split(","))
    return bdchain.halves(n)


def _r_rule(text: str):
    t = text.strip()
    if t == "N":
        return lambda N: N
    if t.endswith("N"):
        k = int(t[:-1])
        return lambda N: k * N
    k = int(t)
    return lambda N: k


def _observable(text: str):
    kind, _, arg = text.partition(":")
    if kind != "eta" or not arg.isdigit():
        raise InvalidInput(f"unknown observable {text!r}; use eta:x")
    return dynamics.occupation(int(arg)), int(arg)


def cmd_spectral(args) -> dict:
    lat, rf = _setup(args)
    gen = spectral.build_generator(canonical(rf, args.particles, lat), args.topology)
    g = spectral.spectral_gap(gen)
    rec = {"instance": _instance(args, lat, args.particles), "gap": g.gap, "C_SG": g.C_SG,
           "C_ED_hat": None, "C_LS_hat": None,
           "diagnostics": {"gap_method": g.method, "gap_residual": g.residual,
                           "n_states": gen.n_states, "seed": args.seed}}
    if args.command in ("ed", "logsob"):
        ed = spectral.estimate_constant(gen, "ED", args.restarts, args.iterations, args.seed, gap=g)
        rec["C_ED_hat"] = ed.value
        rec["diagnostics"]["ED"] = ed.diagnostics()
        if args.command == "logsob":
            ls = spectral.estimate_constant(gen, "LS", args.restarts, args.iterations, args.seed,
                                            extra_starts=[ed.density], gap=g)
            rec["C_LS_hat"] = ls.value
            rec["diagnostics"]["LS"] = ls.diagnostics()
    return rec


def cmd_sweep(args):
    sides = parse_sides(args.sides)
    if args.rates_file:
        rates = load_rate_file(args.rates_file)
    else:
        rates = args.rates
    res = spectral.scaling_sweep(rates, args.dim, sides, _r_rule(args.r_rule), args.kind,
                                 args.topology, args.restarts, args.seed)
    if args.fit:
        print(f"slope {res.slope!r}", file=sys.stderr)
    rows = res.table()
    if args.format == "csv":
        return rows, ["N", "r", "constant", "log_constant"], ("N", "constant")
    return {"kind": args.kind, "rows": rows, "slope": res.slope, "intercept": res.intercept}


def cmd_bd(args) -> dict:
    lat, rf = _setup(args)
    ens = canonical(rf, args.particles, lat)
    if args.chain == "metropolis":
        law = bdchain.gamma1(ens, _split(args, lat.n_sites))
        chain = bdchain.metropolis_chain(law)
    elif args.chain == "single-site":
        chain = bdchain.single_site_chain(ens, args.site)
    else:
        chain = bdchain.two_site_chain(ens)
    return chain.report(restarts=args.restarts, seed=args.seed)


def cmd_miclo(args) -> dict:
    lat, rf = _setup(args)
    r = args.particles
    if args.law == "binomial":
        from scipy.stats import binom
        law = binom.pmf(np.arange(r + 1), r, 0.5)
        res = bdchain.miclo_check(law)
    else:
        law = bdchain.gamma1_from_rates(rf, _split(args, lat.n_sites), r)
        if args.law == "modified":
            mm = bdchain.modified_measure(law, rf, args.epsilon)
            res = bdchain.miclo_check(mm)
            res["equivalence_bounds"] = list(mm.equivalence_bounds())
        else:
            res = bdchain.miclo_check(law)
            res["gammabounds_C"] = bdchain.gammabounds_constant(law)
    return {"instance": _instance(args, lat, r), "law": args.law, **res}


def cmd_llt(args):
    sides = parse_sides(args.sides)
    Js = [int(j) for j in args.J.split(",")]
    rates = load_rate_file(args.rates_file) if args.rates_file else args.rates
    out = llt.error_table(rates, [s ** args.dim for s in sides], Js, args.phi)
    rows = [{"N": N, "J": J, "sup_err": e} for N, J, e in out["rows"]]
    if args.format == "csv":
        return rows, ["N", "J", "sup_err"], None
    return {"phi": args.phi, "rows": rows, "slopes": {str(k): v for k, v in out["slopes"].items()}}


def cmd_econd(args) -> dict:
    rates = load_rate_file(args.rates_file) if args.rates_file else args.rates
    out = llt.condition_E_scan(rates, parse_sides(args.sizes), args.r_max)
    return {"rates": args.rates_file or args.rates, "inf": out["inf"], "sup": out["sup"],
            "rows": [{"size": n, "r": r, "value": v} for n, r, v in out["rows"]]}


def cmd_dominate(args) -> dict:
    lat, rf = _setup(args)
    rep = verify_conditions(rf)
    M = args.extra if args.extra is not None else math.ceil(rep.B * lat.n_sites)
    lo = canonical(rf, args.particles, lat)
    hi = canonical(rf, args.particles + M, lat)
    res = check_stochastic_domination(lo, hi)
    return {"instance": _instance(args, lat, args.particles), "M": M, "B": rep.B,
            "dominated": res.dominated, "max_marginal_error": res.max_marginal_error,
            "coupling_support": len(res.coupling) if res.coupling is not None else 0}


def cmd_simulate(args):
    lat, rf = _setup(args)
    f, _ = _observable(args.observable)
    topology = "two-colour" if args.colours else args.topology
    colours = tuple(int(v) for v in args.colours.split(",")) if args.colours else None
    seeds = np.random.SeedSequence(args.seed).spawn(args.replicas)
    trajs = [dynamics.simulate(rf, lat, args.particles, args.T,
                               int(s.generate_state(1)[0]) if args.replicas > 1 else args.seed,
                               topology, args.sample_dt, colours=colours) for s in seeds]
    if args.format == "csv":
        return dynamics.observable_series(trajs, f), ["t", "mean", "var", "n"], None
    r = sum(colours) if colours else args.particles
    return {"instance": _instance(args, lat, r),
            "trajectories": [t.summary() for t in trajs]}


def cmd_decay(args) -> dict:
    lat, rf = _setup(args)
    f, _ = _observable(args.observable)
    d = dynamics.estimate_decay(rf, lat, args.particles, f, args.replicas, args.T, args.seed,
                                args.topology)
    return {"instance": _instance(args, lat, args.particles), "observable": args.observable,
            **d.as_dict()}


def cmd_colour(args) -> dict:
    lat, rf = _setup(args)
    if not rf.is_homogeneous():
        raise InvalidInput("colour check needs a homogeneous rate family")
    rows = []
    for r in range(args.max_particles + 1):
        for r1 in range(r + 1):
            err = dynamics.colour_projection_error(rf[0], lat, r1, r - r1)
            rows.append({"r1": r1, "r2": r - r1, "max_abs_error": err})
    return {"instance": _instance(args, lat), "rows": rows,
            "max_error": max(r["max_abs_error"] for r in rows)}


def cmd_couple(args) -> dict:
    lat = complete_graph(cube(args.dim, args.side).n_sites)
    rf = _rates(args, lat.n_sites)
    rep = verify_conditions(rf)
    M = args.extra if args.extra is not None else math.ceil(rep.B * lat.n_sites)
    seeds = np.random.SeedSequence(args.seed).spawn(args.seeds)
    runs = [dynamics.coupled_order_sim(rf, args.particles, M, seed=int(s.generate_state(1)[0]),
                                       n_events=args.events) for s in seeds]
    return {"n_sites": lat.n_sites, "particles": args.particles, "M": M, "B": rep.B,
            "k0": rep.k0, "asserted": runs[0].asserted,
            "order_preserved": all(r.order_preserved for r in runs),
            "violations": [i for i, r in enumerate(runs) if not r.order_preserved],
            "events": sum(r.n_events for r in runs)}


HANDLERS = {"gap": cmd_spectral, "logsob": cmd_spectral, "ed": cmd_spectral, "sweep": cmd_sweep,
            "bd": cmd_bd, "miclo": cmd_miclo, "llt": cmd_llt, "econd": cmd_econd,
            "dominate": cmd_dominate, "simulate": cmd_simulate, "decay": cmd_decay,
            "colour-check": cmd_colour, "couple": cmd_couple}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {k: v for k, v in vars(args).items()}
    print("config: " + json.dumps(config, sort_keys=True), file=sys.stderr)
    try:
        _validate(args)
        result = HANDLERS[args.command](args)
        if isinstance(result, tuple):
            rows, columns, dat = result
            if args.format != "csv":
                result = {"rows": rows}
            else:
                emit_report(rows, "csv", args.out, columns, dat)
                return 0
        if args.format == "csv":
            rows = result.get("rows") if isinstance(result, dict) else None
            if not rows:
                raise InvalidInput(f"{args.command} produces a single record; use --format json")
            emit_report(rows, "csv", args.out)
        else:
            emit_report(result, "json", args.out)
    except InvalidInput as exc:
        print(f"zrp: error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"zrp: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
# scripts/cgap_cli.py
"""
Command-line entry point for the cGAP engine.

Usage:
    python scripts/cgap_cli.py validate programs/two_equilibria.cgap
    python scripts/cgap_cli.py solve programs/two_equilibria.cgap --method vic2
    python scripts/cgap_cli.py enumerate programs/two_equilibria.cgap --kind se
    python scripts/cgap_cli.py query programs/two_equilibria.cgap asus.query.json --method monotone
    python scripts/cgap_cli.py experiment --network net.sn.tsv --likes net.likes.tsv --models 1,3 --delta 50

JSON goes to stdout, diagnostics to stderr. Exit codes: 0 success,
1 no equilibrium or undefined range, 2 usage or input error, 3 resource cap,
4 non-convergence.
"""
import sys
import argparse
import logging
from pathlib import Path
from typing import List, Optional

# Add scripts directory to path
sys.path.insert(0, str(Path(__file__).parent))

import cgap_settings as settings
from cgap_errors import CgapError, NoEquilibriumError, NotAModelError, NotVicError, ValidationError
from cgap_text import (
    dump_report, interpretation_dict, parse_interpretation, parse_likes, parse_network, parse_program,
    serialize_likes, serialize_network, serialize_program,
)

log = logging.getLogger("cgap")

EXIT_EMPTY = 1


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror}") from None


def _write(path: Optional[str], text: str) -> None:
    if not path or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise ValidationError(f"cannot write {path}: {e.strerror}") from None
    print(f"✅ Wrote {path}", file=sys.stderr)


def _emit(obj) -> None:
    print(dump_report(obj))


def _load(args):
    """Parse the program argument and ground it against the optional network."""
    from grounder import ground

    program = parse_program(_read(args.program))
    sn = parse_network(_read(args.network)) if getattr(args, "network", None) else None
    return program, ground(program, sn, naive=getattr(args, "naive", False))


def _equilibrium_report(gp, choice, model, pattern):
    from game import State

    return {"state": State(gp.vertices, choice).as_dict(), "interpretation": interpretation_dict(model, pattern)}


# Subcommands


def cmd_validate(args) -> int:
    from vic import classify

    program, gp = _load(args)
    _emit({
        "valid": True,
        "rules": len(program.rules),
        "templates": len(program.templates),
        "options": program.vc.size,
        "ground_atoms": len(gp.index),
        "ground_rules": len(gp.rules),
        "vertices": len(gp.vc),
        "vic": classify(program).as_dict(),
    })
    print("✅ Program is valid", file=sys.stderr)
    return 0


def cmd_ground(args) -> int:
    _, gp = _load(args)
    _write(args.output, serialize_program(gp.to_program()))
    return 0


def cmd_solve(args) -> int:
    _, gp = _load(args)
    if args.method == "vic2":
        from vic import find_se_vic2

        trace: List[List[str]] = []
        state, model = find_se_vic2(gp, args.default_action, trace=trace)
        report = _equilibrium_report(gp, state.key(), model, args.filter)
        report["rounds"] = trace
    elif args.method == "enumerate":
        from equilibria import enumerate_strong_equilibria

        found = enumerate_strong_equilibria(gp, jobs=args.jobs, limit=1)
        if not found:
            raise NoEquilibriumError("the program has no strong equilibrium")
        report = _equilibrium_report(gp, found[0].choice, found[0].model, args.filter)
    else:
        from milp import enumerate_se_milp

        found = enumerate_se_milp(gp, t_hat=args.t_hat, limit=1)
        if not found:
            raise NoEquilibriumError("the constraint system is infeasible: no strong equilibrium")
        report = _equilibrium_report(gp, found[0].choice, found[0].model, args.filter)
    report["method"] = args.method
    _emit(report)
    return 0


def cmd_enumerate(args) -> int:
    _, gp = _load(args)
    if args.method == "milp":
        if args.kind != "se":
            raise ValidationError("the milp method enumerates strong equilibria only")
        from milp import enumerate_se_milp

        found = [(s.choice, s.model) for s in enumerate_se_milp(gp, t_hat=args.t_hat, limit=args.limit)]
    else:
        from equilibria import enumerate_coherent, enumerate_strong_equilibria

        run = enumerate_strong_equilibria if args.kind == "se" else enumerate_coherent
        found = [(eq.choice, eq.model) for eq in run(gp, jobs=args.jobs, limit=args.limit)]
    _emit({"kind": args.kind, "method": args.method, "count": len(found),
           "equilibria": [_equilibrium_report(gp, c, m, args.filter) for c, m in found]})
    if not found:
        print(f"⚠️  No {'strong equilibria' if args.kind == 'se' else 'coherent models'} found", file=sys.stderr)
        return EXIT_EMPTY
    return 0


def cmd_check(args) -> int:
    from semantics import is_coherent_model, is_model, is_strong_equilibrium

    _, gp = _load(args)
    i = parse_interpretation(_read(args.interpretation), gp.index)
    model = is_model(gp, i)
    try:
        coherent = is_coherent_model(gp, i)
    except NotAModelError:
        coherent = False
    _emit({"model": model, "coherent": coherent, "strong_equilibrium": is_strong_equilibrium(gp, i)})
    return 0


def cmd_query(args) -> int:
    from queries import answer, load_query

    _, gp = _load(args)
    q = load_query(_read(args.query))
    result = answer(gp, q, args.method)
    _emit(result.as_dict())
    if not result.defined:
        print("⚠️  Range is undefined: the program has no strong equilibrium", file=sys.stderr)
        return EXIT_EMPTY
    return 0


def cmd_compile_game(args) -> int:
    from game import compile_generic_game, load_game

    g = load_game(_read(args.game))
    _write(args.output, serialize_program(compile_generic_game(g, args.epsilon, args.decimals)))
    return 0


def cmd_compile_apt_simon(args) -> int:
    from game import compile_apt_simon, load_apt_simon

    g = load_apt_simon(_read(args.game))
    _write(args.output, serialize_program(compile_apt_simon(g)))
    return 0


def cmd_export_lp(args) -> int:
    from lp_writer import export_lp, solve_external
    from milp import build_ilc, compute_t_hat, set_fixpoint_objective

    _, gp = _load(args)
    t_hat = compute_t_hat(gp) if args.t_hat is None else args.t_hat
    if args.query:
        from queries import load_query, query_system

        cs = query_system(gp, load_query(_read(args.query)), t_hat=t_hat, band=settings.EPS_MILP)
        cs.sense = args.sense
    elif args.objective == "fixpoint":
        cs = build_ilc(gp, t_hat, strong=False, band=settings.EPS_MILP)
        set_fixpoint_objective(cs)
    else:
        cs = build_ilc(gp, t_hat, band=settings.EPS_MILP)
    log.info("T-hat %d: %s", t_hat, cs)
    _write(args.output, export_lp(cs))
    if args.run_solver:
        sol = solve_external(cs, cs.sense or "feasibility")
        _emit({"status": sol.status, "objective": sol.objective})
    return 0


def _models(text: str):
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two models like 1,3, got '{text}'") from None
    return a, b


def cmd_experiment(args) -> int:
    from experiments import (
        ScenarioConfig, compute_rho, parse_perturb, perturbation_sweep, run_scenario,
    )

    sn = parse_network(_read(args.network))
    prefs = compute_rho(parse_likes(_read(args.likes)))
    tau = settings.TAU if args.tau is None else args.tau
    cfg = ScenarioConfig(args.models[0], args.models[1], args.delta, args.competition, tau, args.seed,
                         parse_perturb(args.perturb))
    if args.sweep:
        _emit({"rows": perturbation_sweep(cfg, sn, prefs, args.sweep, jobs=args.jobs)})
        return 0
    result = run_scenario(cfg, sn, prefs)
    row = result.row(cfg)
    if args.scores:
        row["scores"] = result.scores
    _emit(row)
    print(f"✅ AUROC {result.auroc:.4f} in {result.time_ms:.0f} ms", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    from synthetic import network_stats, synth_network

    sn, likes = synth_network(args.vertices, args.edges, args.communities, args.homophily, args.seed,
                              active=args.active)
    network_path, likes_path = f"{args.out_prefix}.sn.tsv", f"{args.out_prefix}.likes.tsv"
    _write(network_path, serialize_network(sn))
    _write(likes_path, serialize_likes(likes))
    _emit({"network": network_path, "likes": likes_path, "likes_rows": len(likes), "stats": network_stats(sn)})
    return 0


def cmd_stats(args) -> int:
    from synthetic import network_stats

    sn = parse_network(_read(args.network))
    report = network_stats(sn, diameter=args.diameter)
    if args.likes:
        from experiments import compute_rho, label_assortativity

        prefs = compute_rho(parse_likes(_read(args.likes)))
        report["users_with_likes"] = len(prefs.users)
        report["supporter_agreement"] = label_assortativity(sn, prefs)
    _emit(report)
    return 0


# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of setting overrides")
    common.add_argument("--log-level", help=f"Logging level (default: {settings.LOG_LEVEL})")
    common.add_argument("--log-file", help="Append log lines to this file")
    common.add_argument("--jobs", type=int, help=f"Worker threads (default: {settings.JOBS})")

    program = argparse.ArgumentParser(add_help=False)
    program.add_argument("program", help="Program file (.cgap)")
    program.add_argument("--network", help="Network file (.sn.tsv) to ground against")
    program.add_argument("--naive", action="store_true", help="Ground every variable over the full domain")

    report = argparse.ArgumentParser(add_help=False)
    report.add_argument("--filter", default="", help="Shell pattern restricting reported atoms")

    parser = argparse.ArgumentParser(prog="cgap", description="Competitive diffusion with choice GAPs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common, program], help="Parse, ground and classify a program")
    p.set_defaults(run=cmd_validate)

    p = sub.add_parser("ground", parents=[common, program], help="Print the ground program")
    p.add_argument("--output", help="Output file (default: stdout)")
    p.set_defaults(run=cmd_ground)

    p = sub.add_parser("solve", parents=[common, program, report], help="Find one strong equilibrium")
    p.add_argument("--method", choices=["vic2", "enumerate", "milp"], default="vic2")
    p.add_argument("--default-action", type=int, choices=[1, 2], default=1,
                   help="Option every vertex starts from (vic2 only)")
    p.add_argument("--t-hat", type=int, help="Unrolled iterations for milp (default: computed)")
    p.set_defaults(run=cmd_solve)

    p = sub.add_parser("enumerate", parents=[common, program, report], help="List coherent models or strong equilibria")
    p.add_argument("--kind", choices=["coherent", "se"], default="se")
    p.add_argument("--method", choices=["brute", "milp"], default="brute")
    p.add_argument("--limit", type=int, help="Stop after this many results")
    p.add_argument("--t-hat", type=int, help="Unrolled iterations for milp (default: computed)")
    p.set_defaults(run=cmd_enumerate)

    p = sub.add_parser("check", parents=[common, program], help="Check an interpretation")
    p.add_argument("interpretation", help="JSON object of atom -> value")
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("query", parents=[common, program], help="Range answer of an estimation query")
    p.add_argument("query", help="Query file (.query.json)")
    p.add_argument("--method", choices=["naive", "monotone", "milp"], default="naive")
    p.set_defaults(run=cmd_query)

    p = sub.add_parser("compile-game", parents=[common], help="Compile a normal-form game (.game.json)")
    p.add_argument("game")
    p.add_argument("--epsilon", type=float, help=f"Base utility (default: {settings.GAME_EPSILON})")
    p.add_argument("--decimals", type=int, help="Round scaled payoffs up to this many decimals")
    p.add_argument("--output", help="Output file (default: stdout)")
    p.set_defaults(run=cmd_compile_game)

    p = sub.add_parser("compile-apt-simon", parents=[common], help="Compile a threshold network game (.asg.json)")
    p.add_argument("game")
    p.add_argument("--output", help="Output file (default: stdout)")
    p.set_defaults(run=cmd_compile_apt_simon)

    p = sub.add_parser("export-lp", parents=[common, program], help="Write the strong-equilibrium MILP as an LP file")
    p.add_argument("--t-hat", type=int, help="Unrolled iterations (default: computed)")
    p.add_argument("--objective", choices=["none", "fixpoint"], default="none",
                   help="fixpoint writes the T-hat oracle system instead")
    p.add_argument("--query", help="Use this query file's objective")
    p.add_argument("--sense", choices=["min", "max"], default="min", help="Direction of the query objective")
    p.add_argument("--run-solver", action="store_true", help=f"Also solve with {settings.LP_SOLVER}")
    p.add_argument("--output", help="Output file (default: stdout)")
    p.set_defaults(run=cmd_export_lp)

    p = sub.add_parser("experiment", parents=[common], help="Run one diffusion scenario and report its AUROC")
    p.add_argument("--network", required=True, help="Network file (.sn.tsv)")
    p.add_argument("--likes", required=True, help="Likes file (.likes.tsv)")
    p.add_argument("--models", type=_models, default=(1, 1), help="Diffusion models of the two sides, e.g. 1,3")
    p.add_argument("--delta", type=float, default=50, help="Training share in percent")
    p.add_argument("--competition", type=int, choices=[1, 2, 3, 4], default=3)
    p.add_argument("--tau", type=float, help=f"Tipping threshold (default: {settings.TAU})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", help="node:p or edge:p")
    p.add_argument("--sweep", choices=["node", "edge"], help="Run the perturbation levels instead")
    p.add_argument("--scores", action="store_true", help="Include per-user scores")
    p.set_defaults(run=cmd_experiment)

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic network and likes table")
    p.add_argument("--vertices", type=int, required=True)
    p.add_argument("--edges", type=int, required=True)
    p.add_argument("--communities", type=int, default=2)
    p.add_argument("--homophily", type=float, default=0.9)
    p.add_argument("--active", type=float, default=0.5, help="Share of users with political likes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", default="synthetic")
    p.set_defaults(run=cmd_synth)

    p = sub.add_parser("stats", parents=[common], help="Network statistics")
    p.add_argument("network")
    p.add_argument("--likes", help="Also summarize supporters from this likes file")
    p.add_argument("--diameter", action="store_true")
    p.set_defaults(run=cmd_stats)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            settings.load_config_file(args.config)
        if args.jobs is not None:
            settings.apply_overrides({"jobs": args.jobs})
        settings.configure_logging(args.log_level, args.log_file)
        args.jobs = settings.JOBS
        return args.run(args)
    except NotVicError as e:
        if e.classification is not None:
            _emit({"vic": e.classification.as_dict()})
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except CgapError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\nCancelled.", file=sys.stderr)
        return 130
    except Exception as e:
        print(f"❌ Unexpected error: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc(file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

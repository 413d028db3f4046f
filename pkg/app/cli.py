"""
Command-line entry point.

    python -m app.cli graph-info data/fig1.edges
    python -m app.cli run --graph data/fig1.edges --tau-bar 2 --out traj.csv
    python -m app.cli mc --config data/fig1_scenario.env --compare tau_bar=0,2,5
    python -m app.cli spectral gamma-sweep data/fig1.edges --tau-bar 2
    python -m app.cli spectral delay-sweep data/fig1.edges --gamma 0.1
    python -m app.cli check data/fig1.edges --tau-bar 2 --gamma 0.1 --seed 7 --iters 300

Exit codes: 0 success, 1 validation failure or usage error, 2 I/O error.
"""

import argparse
import logging
import sys
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from app.config import configure_logging, read_scenario_file
from app.errors import ConfigError, ConsensusError, ValidationFailure
from app.models import ScenarioConfig
from app.services.augmented_service import build_snapshot_matrices, snapshot_from_schedule
from app.services.check_service import CheckService
from app.services.experiment_service import ExperimentService
from app.services.export_service import (
    export_curve,
    export_curves_wide,
    export_matrix,
    export_sweep,
    export_trajectory,
)
from app.services.graph_service import graph_info, load_edge_file
from app.services.spectral_service import (
    best_gamma,
    gamma_upper_bound,
    mean_gap_vs_delay,
    sweep_gamma,
)
from app.utils.db import db

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

DEFAULT_GAMMA_GRID = "0.01,0.02,0.05,0.1,0.15,0.2,0.25,0.3"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; here that is a validation failure (1)"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _comparison(text: str) -> Tuple[str, List[float]]:
    parameter, sep, values = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected <param>=<v1>,<v2>,..., got {text!r}")
    return parameter.strip(), _floats(values)


def _add_graph(p: argparse.ArgumentParser):
    p.add_argument("graph_path", nargs="?", help="edge-list file")
    p.add_argument("--graph", dest="graph_flag", help="edge-list file (same as the positional)")


def _add_scenario_flags(p: argparse.ArgumentParser):
    _add_graph(p)
    p.add_argument("--config", help="key=value scenario file; flags override it")
    p.add_argument("--tau-bar", type=int)
    p.add_argument("--delay-kind", choices=["zero", "constant", "uniform", "trace"])
    p.add_argument("--trace", help="trace file for --delay-kind trace")
    p.add_argument("--gamma", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", help="index | const:<v> | file:<path> | random")
    p.add_argument("--out", help="output CSV (stdout when omitted)")
    p.add_argument("--force-gamma", action="store_true", default=None)


def build_parser() -> Parser:
    parser = Parser(prog="consensus", description="Delay-robust push-pull average consensus simulator")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("run", help="single scenario, trajectory CSV")
    _add_scenario_flags(p)

    p = sub.add_parser("mc", help="Monte Carlo mean consensus error")
    _add_scenario_flags(p)
    p.add_argument("--compare", type=_comparison, help="tau_bar=0,2,5 or gamma=0.01,0.1,0.3: one column per value")

    p = sub.add_parser("spectral", help="spectral gap sweeps")
    spectral = p.add_subparsers(dest="sweep", parser_class=Parser)
    spectral.required = True

    q = spectral.add_parser("gamma-sweep", help="mean gap against gamma")
    _add_graph(q)
    q.add_argument("--tau-bar", type=int, default=0)
    q.add_argument("--gammas", type=_floats, default=DEFAULT_GAMMA_GRID)
    q.add_argument("--samples", type=int, default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")

    q = spectral.add_parser("delay-sweep", help="mean gap against tau_bar")
    _add_graph(q)
    q.add_argument("--gamma", type=float, default=0.1)
    q.add_argument("--tau-bars", type=_ints, default=",".join(str(t) for t in range(11)))
    q.add_argument("--samples", type=int, default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")

    p = sub.add_parser("check", help="invariant suite on a graph and seed")
    _add_graph(p)
    p.add_argument("--tau-bar", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--force-gamma", action="store_true")
    p.add_argument("--dump-matrix", help="write M(0) as CSV")

    p = sub.add_parser("graph-info", help="degrees, strong connectivity, gamma bound")
    _add_graph(p)

    p = sub.add_parser("serve", help="start the HTTP API")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _graph_path(args) -> Optional[str]:
    return args.graph_flag or args.graph_path


def _require_graph(args) -> str:
    path = _graph_path(args)
    if not path:
        raise ConfigError("A graph file is required")
    return path


def _scenario(args) -> ScenarioConfig:
    file_values = read_scenario_file(args.config) if args.config else {}
    try:
        return ScenarioConfig.merged(
            file_values,
            graph=_graph_path(args),
            tau_bar=args.tau_bar,
            delay_kind=args.delay_kind,
            trace=args.trace,
            gamma=args.gamma,
            iters=args.iters,
            runs=args.runs,
            seed=args.seed,
            init=args.init,
            out=args.out,
            force_gamma=args.force_gamma,
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid scenario: {e}")


def cmd_run(args) -> int:
    cfg = _scenario(args)
    result = ExperimentService().run_scenario(cfg)
    export_trajectory(result.trajectory, cfg.out)
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = _scenario(args)
    service = ExperimentService()
    if args.compare:
        parameter, values = args.compare
        curves = service.compare_curves(cfg, parameter, values)
        export_curves_wide({label: c.mean_error for label, c in curves.items()}, cfg.out)
    else:
        export_curve(service.monte_carlo(cfg).mean_error, cfg.out)
    return EXIT_OK


def cmd_spectral(args) -> int:
    g = load_edge_file(_require_graph(args))
    if args.sweep == "gamma-sweep":
        table = sweep_gamma(g, args.tau_bar, args.gammas, args.samples, args.seed)
        best = best_gamma(table)
        logger.info("tau_bar=%d best gamma on grid: %g (mean gap %.4g)", args.tau_bar, best.value, best.mean_gap)
    else:
        table = mean_gap_vs_delay(g, args.gamma, args.tau_bars, args.samples, args.seed)
    db.increment_metric("total_sweeps")
    export_sweep(table, args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    g = load_edge_file(_require_graph(args))
    suite = CheckService(g, args.tau_bar, args.gamma, args.seed, args.iters, args.force_gamma)
    report = suite.run_suite()
    for result in report.results:
        print(f"{result.name}: {'PASS' if result.passed else 'FAIL'} {result.detail}")
    if args.dump_matrix:
        sm = build_snapshot_matrices(g, snapshot_from_schedule(g, suite.schedule, 0), args.gamma)
        export_matrix(sm.M, args.dump_matrix)
    print(f"overall: {'PASS' if report.passed else 'FAIL'}")
    if not report.passed:
        failed = ", ".join(r.name for r in report.results if not r.passed)
        raise ValidationFailure(f"Invariant checks failed: {failed}")
    return EXIT_OK


def cmd_graph_info(args) -> int:
    g = load_edge_file(_require_graph(args))
    info = graph_info(g)
    c_min = Fraction(info.min_push_weight).limit_denominator(10**6)
    print(f"n={info.n}")
    print(f"m={info.m}")
    print(f"strongly_connected={str(info.strongly_connected).lower()}")
    print(f"c_min={c_min}")
    print(f"c_min_value={info.min_push_weight!r}")
    for j, (d_in, d_out) in enumerate(zip(info.in_degrees, info.out_degrees), start=1):
        print(f"node {j}: in_degree={d_in} out_degree={d_out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "mc": cmd_mc,
    "spectral": cmd_spectral,
    "check": cmd_check,
    "graph-info": cmd_graph_info,
    "serve": cmd_serve,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConsensusError as e:
        logger.error("%s", e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

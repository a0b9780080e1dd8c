import argparse
import logging
import sys
from contextlib import contextmanager
from typing import Any, Callable, Dict, List, Optional, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from colorfield import __version__
from colorfield.config import configure_logging, derive_seed, fresh_seed, load_config_file
from colorfield.coupling import CouplingContext, coupling_row, g_hat
from colorfield.errors import NumericalError, UsageError
from colorfield.field import (
    canonical_minimizer,
    energy,
    energy_bruteforce,
    ghz_state,
    random_state,
    read_state,
    single_configuration_state,
)
from colorfield.history import RunHistory, load_manifest
from colorfield.largenc import (
    beta0,
    dyson_solve,
    energy_prediction,
    lower_bound,
)
from colorfield.moments import EXACT_LIMITS, cactus_cumulants, exact_cumulants, mc_cumulants
from colorfield.sampler import (
    Schedule,
    anneal,
    annealed_overlap,
    beta_sweep,
    default_beta_tilde_grid,
    find_minimum,
    frustration_scan,
    hysteresis,
    law_rescaled_minimum,
    make_config,
    rescaled_lower_bound,
    run_chain,
)

console = Console()

TRACE_HEADER = ["leg_index", "beta", "beta_tilde", "mean_H", "stderr_H", "rescaled_H",
                "acceptance", "theta_max"]
# proposals per sweep request above which `sweep` refuses to start
SWEEP_PROPOSAL_LIMIT = 5e9


class CLIParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def parse_int_list(text: str) -> List[int]:
    """'2,3,5' or '2-8' (inclusive)."""
    values = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                values.extend(range(int(lo), int(hi) + 1))
            else:
                values.append(int(part))
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}")
    if not values:
        raise UsageError(f"empty integer list {text!r}")
    return values


def parse_float_list(text: str) -> List[float]:
    try:
        values = [float(p) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}")
    if not values:
        raise UsageError(f"empty number list {text!r}")
    return values


def _grid(args) -> List[float]:
    return parse_float_list(args.grid) if args.grid else default_beta_tilde_grid()


def _trace_rows(legs, n: int, n_colors: int) -> List[List[Any]]:
    scale = energy_prediction(n, n_colors)
    return [[i, leg.beta, leg.beta_tilde, leg.mean_H, leg.stderr_H, leg.mean_H / scale,
             leg.acceptance_rate, leg.theta_max] for i, leg in enumerate(legs)]


def _trace_table(title: str, rows: Sequence[Sequence[Any]], lead: Optional[str] = None) -> Table:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    columns = ([lead] if lead else []) + ["beta~", "<H>", "stderr", "<H>/H_Nc", "acc", "theta"]
    for col in columns:
        table.add_column(col, justify="right")
    for row in rows:
        body = row[1:] if lead else row
        cells = [str(row[0])] if lead else []
        cells += [f"{body[2]:.3f}", f"{body[3]:.6f}", f"{body[4]:.1e}", f"{body[5]:.4f}",
                  f"{body[6]:.2f}", f"{body[7]:.3f}"]
        table.add_row(*cells)
    return table


def _mc_config(args, seed: Optional[int] = None):
    return make_config(n=args.n, n_colors=args.nc, seed=args.seed if seed is None else seed,
                       steps_per_measurement=args.measure_every, theta_max=args.theta_max)


@contextmanager
def _spinner(text: str):
    with Progress(SpinnerColumn(), TextColumn(f"[bold blue]{text}"), transient=True,
                  console=console) as progress:
        progress.add_task("work", total=None)
        yield progress


# --- subcommands ---

def cmd_coupling(args, run: RunHistory):
    ctx = CouplingContext(args.n, seed=args.seed)
    rows = [[s, t, str(g_hat(s, t, ctx)), float(g_hat(s, t, ctx))]
            for s in range(ctx.n_a + 1) for t in range(ctx.n - ctx.n_a + 1)]
    run.write_csv(["s", "t", "g_hat", "g_hat_float"], rows)
    row = coupling_row(ctx, args.k)
    run.write_csv(["l", "delta", "delta_tilde"], [[l, str(d), str(dt)] for l, d, dt in row],
                  filename="delta_row.csv")
    table = Table(title=f"g-hat(s, t) for n={ctx.n}, n_A={ctx.n_a}", header_style="bold magenta")
    table.add_column("s \\ t", justify="right")
    for t in range(ctx.n - ctx.n_a + 1):
        table.add_column(str(t), justify="right")
    for s in range(ctx.n_a + 1):
        table.add_row(str(s), *[str(g_hat(s, t, ctx)) for t in range(ctx.n - ctx.n_a + 1)])
    console.print(table)
    console.print(f"{len(ctx.bipartitions)} balanced bipartitions; "
                  f"row sum of Delta-tilde = {ctx.delta_tilde_row_sum}")


def _special_state(args):
    if args.state:
        return read_state(args.state)
    if args.n is None:
        raise UsageError("energy needs --state or --n")
    if args.special == "single":
        return single_configuration_state(args.n, args.nc, args.k)
    if args.special == "ghz":
        return ghz_state(args.n, args.nc)
    if args.special == "canonical":
        return canonical_minimizer(args.n, args.nc, tuple(range(1, args.n // 2 + 1)))
    return random_state(args.n, args.nc, args.seed)


def cmd_energy(args, run: RunHistory):
    state = _special_state(args)
    report = energy(state)
    rows = [[" ".join(map(str, A)), v] for A, v in report.per_bipartition.items()]
    rows.append(["total", report.total])
    if args.bruteforce:
        rows.append(["bruteforce", energy_bruteforce(state)])
    run.write_csv(["bipartition", "purity"], rows)
    run.save_state(state, "input")
    table = Table(title=f"Purity, n={state.n}, N_c={state.n_colors}", header_style="bold magenta")
    table.add_column("A")
    table.add_column("H_A", justify="right")
    for label, value in rows:
        table.add_row(label, f"{value:.12f}")
    console.print(table)
    console.print(f"bounds: {report.lower_bound:.6g} <= H <= {report.upper_bound:.6g}")


def cmd_cumulants(args, run: RunHistory):
    if not 1 <= args.order <= 5:
        raise UsageError(f"--order must be in 1..5, got {args.order}")
    N, n_a = 1 << args.n, 1 << (args.n // 2)
    reports: Dict[int, Dict[str, Any]] = {
        m: {"exact": None, "cactus": cactus_cumulants(args.n, m) if m <= 3 else None,
            "mc_mean": None, "mc_stderr": None}
        for m in range(1, args.order + 1)}
    if args.exact:
        exact_order = min(args.order, max(EXACT_LIMITS))
        with _spinner("Enumerating Wick contractions..."):
            for rep in exact_cumulants(args.n, exact_order):
                reports[rep.order]["exact"] = rep.exact
    if args.samples > 0:
        with _spinner(f"Sampling {args.samples} states..."):
            for rep in mc_cumulants(args.n, args.nc, args.order, args.samples, args.seed):
                reports[rep.order]["mc_mean"] = rep.mc_mean
                reports[rep.order]["mc_stderr"] = rep.mc_stderr
    rows = [[m, r["exact"], r["cactus"], r["mc_mean"], r["mc_stderr"], N, n_a]
            for m, r in reports.items()]
    run.write_csv(["order", "exact", "cactus", "mc_mean", "mc_stderr", "N", "N_A"], rows)
    table = Table(title=f"Cumulants of H at beta=0, n={args.n}", header_style="bold magenta")
    for col in ("order", "exact", "cactus", "mc", "stderr"):
        table.add_column(col, justify="right")
    fmt = lambda v, spec=".10g": "-" if v is None else format(v, spec)
    for m, exact, cactus, mean, err, *_ in rows:
        table.add_row(str(m), fmt(exact), fmt(cactus), fmt(mean), fmt(err, ".2g"))
    console.print(table)


def _resolve_beta(args) -> float:
    if args.beta is not None:
        return args.beta
    return args.beta_tilde * beta0(args.n)


def cmd_sample(args, run: RunHistory):
    config = _mc_config(args)
    beta = _resolve_beta(args)
    with _spinner(f"Sampling at beta={beta:.4g}..."):
        record = run_chain(config, Schedule.fixed(beta, args.steps))
    rows = _trace_rows(record.legs, args.n, args.nc)
    run.write_csv(TRACE_HEADER, rows)
    run.save_state(record.final_state, "final")
    console.print(_trace_table("Fixed-beta chain", rows))


def cmd_sweep(args, run: RunHistory):
    if not 3 <= args.n <= 7:
        raise UsageError(f"sweep supports n in [3, 7], got {args.n}")
    colors = parse_int_list(args.nc_list)
    if min(colors) < 2 or max(colors) > 20:
        raise UsageError("sweep supports N_c in [2, 20]")
    grid = _grid(args)
    cost = sum(len(grid) * args.steps * (1 << args.n) * nc for nc in colors)
    if cost > SWEEP_PROPOSAL_LIMIT:
        raise UsageError(f"sweep would run {cost:.2e} proposals (limit {SWEEP_PROPOSAL_LIMIT:.0e}); "
                         "reduce --steps, the grid or the N_c list")
    b0 = beta0(args.n)
    rows = []
    with _spinner("Sweeping the beta grid..."):
        for nc in colors:
            config = make_config(n=args.n, n_colors=nc, seed=derive_seed(args.seed, nc),
                                 steps_per_measurement=args.measure_every, theta_max=args.theta_max)
            legs = beta_sweep(config, [bt * b0 for bt in grid], args.steps)
            rows.extend([nc] + r for r in _trace_rows(legs, args.n, nc))
    run.write_csv(["n_colors"] + TRACE_HEADER, rows)
    console.print(_trace_table(f"Sweep n={args.n}", rows, lead="N_c"))


def cmd_anneal(args, run: RunHistory):
    config = _mc_config(args)
    with _spinner("Annealing..."):
        record = anneal(config, _grid(args), args.steps)
    rows = _trace_rows(record.legs, args.n, args.nc)
    run.write_csv(TRACE_HEADER, rows)
    run.save_state(record.final_state, "final")
    console.print(_trace_table("Annealing", rows))


def cmd_hysteresis(args, run: RunHistory):
    config = _mc_config(args)
    with _spinner("Running the hysteresis loop..."):
        cooling, heating = hysteresis(config, args.beta_max, args.delta_beta, args.steps)
    rows = ([["heating"] + r for r in _trace_rows(heating.legs, args.n, args.nc)]
            + [["cooling"] + r for r in _trace_rows(cooling.legs, args.n, args.nc)])
    run.write_csv(["branch"] + TRACE_HEADER, rows)
    run.save_state(cooling.final_state, "final")
    console.print(_trace_table("Hysteresis loop", rows, lead="branch"))


def cmd_overlap(args, run: RunHistory):
    b0 = beta0(args.n)
    with _spinner("Measuring replica overlaps..."):
        points = annealed_overlap(args.n, args.nc, [bt * b0 for bt in _grid(args)],
                                  args.measurements, args.seed, interval=args.interval,
                                  steps_between=args.steps_between, burn_in=args.burn_in,
                                  theta_max=args.theta_max)
    rows = [[beta, beta / b0, mean, err] for beta, mean, err in points]
    run.write_csv(["beta", "beta_tilde", "q2_rescaled", "stderr"], rows)
    table = Table(title="Rescaled overlap <q^2> N N_c", header_style="bold magenta")
    for col in ("beta~", "q2", "stderr"):
        table.add_column(col, justify="right")
    for _, bt, mean, err in rows:
        table.add_row(f"{bt:.3f}", f"{mean:.4f}", f"{err:.2g}")
    console.print(table)


def cmd_minimize(args, run: RunHistory):
    with _spinner(f"Minimizing over {args.restarts} restarts..."):
        E0, state = find_minimum(args.n, args.nc, args.restarts, args.seed)
    rescaled = 2.0 * E0 / args.nc
    run.write_csv(["n", "n_colors", "E0", "rescaled_E0", "lower_bound"],
                  [[args.n, args.nc, E0, rescaled, lower_bound(args.n, args.nc)]])
    run.save_state(state, "argmin")
    console.print(Panel(f"E0 = {E0:.10f}\nrescaled 2E0/N_c = {rescaled:.6f}\n"
                        f"ideal bound 1/N_A = {rescaled_lower_bound(args.n):.6f}",
                        title=f"Minimum, n={args.n}, N_c={args.nc}", border_style="bright_green"))


def cmd_scan_frustration(args, run: RunHistory):
    colors = parse_int_list(args.nc_list)
    with _spinner("Scanning N_c..."):
        table_rows = frustration_scan(args.n, colors, args.restarts, args.seed)
    rows = [[nc, value, law_rescaled_minimum(nc) if args.n == 4 else None, rescaled_lower_bound(args.n)]
            for nc, value in table_rows]
    run.write_csv(["n_colors", "rescaled_E0", "law", "rescaled_lower_bound"], rows)
    table = Table(title=f"Rescaled minimum vs N_c, n={args.n}", header_style="bold magenta")
    for col in ("N_c", "2E0/N_c", "law", "1/N_A"):
        table.add_column(col, justify="right")
    for nc, value, law, bound in rows:
        table.add_row(str(nc), f"{value:.5f}", "-" if law is None else f"{law:.5f}", f"{bound:.5f}")
    console.print(table)


def cmd_dyson(args, run: RunHistory):
    solution = dyson_solve(args.n, args.beta_tilde, tol=args.tol, max_iter=args.max_iter,
                           damping=args.damping)
    rows = [[k, g, solution.lam, solution.residual] for k, g in enumerate(solution.G)]
    run.write_csv(["k", "G_k", "lambda", "residual"], rows)
    console.print(Panel(f"lambda = {solution.lam:.12g}\nresidual = {solution.residual:.3e}\n"
                        f"symmetric = {solution.symmetric} (G_k = 1/N = {1.0 / len(solution.G):.6g})\n"
                        f"iterations = {solution.iterations}",
                        title=f"Dyson solution, n={args.n}, beta~={args.beta_tilde}",
                        border_style="bright_green"))


COMMANDS: Dict[str, Callable] = {
    "coupling": cmd_coupling,
    "energy": cmd_energy,
    "cumulants": cmd_cumulants,
    "sample": cmd_sample,
    "sweep": cmd_sweep,
    "anneal": cmd_anneal,
    "hysteresis": cmd_hysteresis,
    "overlap": cmd_overlap,
    "minimize": cmd_minimize,
    "scan-frustration": cmd_scan_frustration,
    "dyson": cmd_dyson,
}


def _add_mc_flags(p):
    p.add_argument("--steps", type=int, default=200, help="Monte Carlo sweeps per beta")
    p.add_argument("--measure-every", type=int, default=1, help="sweeps between measurements")
    p.add_argument("--theta-max", type=float, default=0.5, help="initial proposal angle")


def build_parser() -> CLIParser:
    common = CLIParser(add_help=False)
    common.add_argument("--out", default="runs", help="base directory for run outputs")
    common.add_argument("--seed", type=int, default=None, help="master seed (generated if omitted)")
    common.add_argument("--config", default=None, help="YAML file of flag defaults")
    common.add_argument("--verbose", action="store_true", help="log at INFO level")
    common.add_argument("--debug", action="store_true", help="log at DEBUG level")

    parser = CLIParser(prog="colorent", description="Colored purity potential toolkit")
    parser.add_argument("--version", action="version", version=f"colorent {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=CLIParser)

    p = sub.add_parser("coupling", parents=[common], help="dump the g-hat table and a Delta row")
    p.add_argument("action", nargs="?", default="dump", choices=["dump"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=0, help="configuration whose Delta row is dumped")

    p = sub.add_parser("energy", parents=[common], help="purity of a state per bipartition")
    p.add_argument("--state", default=None, help="JSON or CSV state file")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--nc", type=int, default=2)
    p.add_argument("--special", choices=["random", "single", "ghz", "canonical"], default="random")
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--bruteforce", action="store_true", help="also evaluate the direct quadruple sum")

    p = sub.add_parser("cumulants", parents=[common], help="beta=0 cumulants of H")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--nc", type=int, default=2)
    p.add_argument("--exact", action="store_true", help="exact Wick enumeration")
    p.add_argument("--samples", type=int, default=0, help="Monte Carlo samples (0 disables)")

    p = sub.add_parser("sample", parents=[common], help="one fixed-beta chain")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nc", type=int, default=2)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--beta", type=float, default=None)
    group.add_argument("--beta-tilde", type=float, default=0.0)
    _add_mc_flags(p)

    p = sub.add_parser("sweep", parents=[common], help="fixed-beta chains over a beta-tilde grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nc-list", default="2-20", help="N_c values, e.g. '2,4,20' or '2-20'")
    p.add_argument("--grid", default=None, help="comma-separated beta-tilde values")
    _add_mc_flags(p)

    p = sub.add_parser("anneal", parents=[common], help="cool through a beta-tilde grid on one chain")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nc", type=int, default=2)
    p.add_argument("--grid", default=None)
    _add_mc_flags(p)

    p = sub.add_parser("hysteresis", parents=[common], help="heat from beta_max to 0 and cool back")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nc", type=int, default=20)
    p.add_argument("--beta-max", type=float, default=130.0)
    p.add_argument("--delta-beta", type=float, default=4.0)
    _add_mc_flags(p)

    p = sub.add_parser("overlap", parents=[common], help="replica overlap over a beta-tilde grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nc", type=int, default=20)
    p.add_argument("--grid", default=None)
    p.add_argument("--measurements", type=int, default=50)
    p.add_argument("--interval", type=int, default=10, help="sweeps between overlap samples")
    p.add_argument("--burn-in", type=int, default=None,
                   help="sweeps before the first grid point (default 10 intervals)")
    p.add_argument("--steps-between", type=int, default=500,
                   help="sweeps at each later grid point before sampling")
    p.add_argument("--theta-max", type=float, default=0.5)

    p = sub.add_parser("minimize", parents=[common], help="ground-state search")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nc", type=int, default=2)
    p.add_argument("--restarts", type=int, default=20)

    p = sub.add_parser("scan-frustration", parents=[common], help="rescaled minimum versus N_c")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nc-list", default="2-8")
    p.add_argument("--restarts", type=int, default=20)

    p = sub.add_parser("dyson", parents=[common], help="large-N_c Dyson fixed point")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta-tilde", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--damping", type=float, default=0.5)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="base directory (default: the manifest's)")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--debug", action="store_true")
    parser.subcommands = sub.choices
    return parser


def parse_args(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(f"a subcommand is required\n{parser.format_usage()}")
    if getattr(args, "config", None):
        defaults = load_config_file(args.config)
        known = set(vars(args))
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {', '.join(unknown)}")
        subparser = parser.subcommands[args.command]
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _log_level(args) -> int:
    if getattr(args, "debug", False):
        return logging.DEBUG
    if getattr(args, "verbose", False):
        return logging.INFO
    return logging.WARNING


def execute(command: str, args: argparse.Namespace) -> str:
    """Run one subcommand into a fresh run directory; returns that directory."""
    if args.seed is None:
        args.seed = fresh_seed()
    run = RunHistory(args.out, command)
    configure_logging(run.run_dir, _log_level(args))
    logging.info(f"{command} started with seed {args.seed}")
    COMMANDS[command](args, run)
    flags = {k: v for k, v in vars(args).items() if k not in ("config",)}
    run.write_manifest(flags, seed=args.seed)
    console.print(f"[dim]outputs in {run.run_dir}[/dim]")
    return run.run_dir


def replay(args) -> str:
    manifest = load_manifest(args.manifest)
    if manifest.command not in COMMANDS:
        raise UsageError(f"manifest records unknown command {manifest.command!r}")
    flags = dict(manifest.flags)
    if args.out is not None:
        flags["out"] = args.out
    flags["verbose"], flags["debug"] = args.verbose, args.debug
    flags["seed"] = manifest.seed if manifest.seed is not None else flags.get("seed")
    return execute(manifest.command, argparse.Namespace(**flags))


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        if args.command == "replay":
            replay(args)
        else:
            execute(args.command, args)
        return 0
    except UsageError as e:
        console.print(f"[red]Usage error: {e}[/red]")
        console.print("[dim]Run `colorent <command> --help` for the available flags.[/dim]")
        return 1
    except NumericalError as e:
        logging.error(f"numerical failure: {e}")
        console.print(f"[red]Numerical failure: {e}[/red]")
        return 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())

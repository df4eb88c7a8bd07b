#!/usr/bin/env python3
"""
SplitFlow Project Launcher
Splitting methods for near-integrable Hamiltonian systems

Subcommands:
- verify     certify coefficient tables against their order conditions
- integrate  run one method on a model and write the energy trajectory
- sweep      efficiency sweep over methods and step sizes
- solve      derive coefficients (grid search or homotopy continuation)
- catalog    print the method registry
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add project path to Python path
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

import structlog  # noqa: E402
from rich.console import Console  # noqa: E402
from rich.table import Table  # noqa: E402

from dynamics.elements import ElementsError, load_elements_file  # noqa: E402
from dynamics.models import (ModelError, SplitSystem, helio_from_bodies,  # noqa: E402
                             perturbed_kepler, phase_error_series)
from engine.integrator import (REFERENCE_METHOD, IntegrationPlan, PlanError,  # noqa: E402
                               integrate, trajectory_to_csv)
from engine.sweep import (DEFAULT_NITER, default_tau_grid, efficiency_sweep,  # noqa: E402
                          format_plot_data, sweep_to_csv)
from methods.coefficients import MethodKind, SplittingMethod, negative_coefficients  # noqa: E402
from methods.order_conditions import certify  # noqa: E402
from methods.registry import RegistryError, default_registry  # noqa: E402
from solver.homotopy import run_pipeline, write_path_logs  # noqa: E402
from solver.newton import GRID_MAX_UNKNOWNS, grid_solve, write_solution_file  # noqa: E402
from solver.polysystem import PolySystem, SolverError, build_system  # noqa: E402
from utils.config_loader import ConfigError, RunConfig, build_config  # noqa: E402
from utils.log import configure_logging  # noqa: E402
from utils.validation import (PathValidator, SplitFlowError, ValidationError,  # noqa: E402
                              parse_float_list, parse_order, sanitize_log_message)

logger = structlog.get_logger('SplitFlow.CLI')

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_EXHAUSTED = 3

console = Console()
err_console = Console(stderr=True)


def _usage_error(message: str) -> int:
    err_console.print(f"[red]Error:[/red] {sanitize_log_message(message)}", highlight=False)
    return EXIT_USAGE


def _emit(text: str, output: str):
    """Write to a file when an output path is configured, stdout otherwise"""
    if output:
        target = PathValidator.output_path(output)
        target.write_text(text)
        logger.info("output written", path=str(target))
    else:
        sys.stdout.write(text)


def _methods(config: RunConfig) -> List[SplittingMethod]:
    registry = default_registry()
    ids = registry.ids() if config.all_methods else config.methods
    return [registry.lookup(method_id) for method_id in ids]


def _model(config: RunConfig) -> SplitSystem:
    if config.model == 'kepler':
        return perturbed_kepler(epsilon=config.epsilon, eccentricity=config.eccentricity)
    if not config.elements:
        raise ValidationError("The helio model needs --elements FILE")
    bodies = load_elements_file(str(PathValidator.input_path(config.elements)))
    return helio_from_bodies(bodies)


def cmd_verify(config: RunConfig) -> int:
    """Certify each method; exit 0 only when all pass"""
    methods = _methods(config)
    if not methods:
        return _usage_error("verify needs method ids or --all")

    target = tuple(config.order) if config.order else None
    reports = [certify(method, tol=config.tol, dps=config.dps, order=target) for method in methods]

    table = Table(title=f"Order conditions at {config.dps} digits, tol {config.tol:.1e}")
    for column in ("Method", "Kind", "Order", "Stages", "Max residual", "Status"):
        table.add_column(column)
    for method, report in zip(methods, reports):
        table.add_row(method.id, method.kind.value, ",".join(str(r) for r in report.order),
                      str(method.stages), f"{float(report.max_residual):.3e}",
                      "[green]certified[/green]" if report.certified else "[red]FAILED[/red]")
    console.print(table)

    for report in reports:
        console.print(report.format(), markup=False, highlight=False)

    return EXIT_OK if all(report.certified for report in reports) else EXIT_FAILURE


def cmd_integrate(config: RunConfig) -> int:
    """Energy trajectory CSV of one method"""
    if len(config.methods) != 1:
        return _usage_error("integrate takes exactly one method id")
    method = default_registry().lookup(config.methods[0])
    system = _model(config)

    tau = config.tau
    n_steps = config.niter or int(round(config.t_final / abs(tau)))
    sample_every = max(1, int(round(config.sample_dt / abs(tau))))
    plan = IntegrationPlan(method=method, system=system, tau=tau, n_steps=n_steps,
                           sample_every=sample_every, compensated=config.compensated,
                           fsal=config.fsal, allow_degraded=config.allow_degraded)
    record = integrate(plan)

    extra: Dict[str, Any] = {}
    if config.phase_error:
        reference = integrate(IntegrationPlan(
            method=default_registry().lookup(REFERENCE_METHOD), system=system, tau=tau / 10,
            n_steps=n_steps * 10, sample_every=sample_every * 10, compensated=True,
            allow_degraded=True))
        count = min(len(record.states), len(reference.states))
        q_err, p_err = phase_error_series(record.states[:count], reference.states[:count])
        extra = {"q_error": q_err, "p_error": p_err}
        if count < len(record.states):
            record.times, record.states = record.times[:count], record.states[:count]
            record.energy_deviation = record.energy_deviation[:count]

    _emit(trajectory_to_csv(record, include_states=config.states, extra_columns=extra), config.output)

    table = Table(title=f"{method.id} on {system.name}")
    for column in ("tau", "steps", "samples", "A-flows", "max dE/E", "status"):
        table.add_column(column)
    table.add_row(f"{tau:g}", str(record.steps_done), str(len(record.times)),
                  str(record.a_evaluations), f"{record.max_energy_deviation:.3e}",
                  record.error or "ok")
    err_console.print(table)

    return EXIT_FAILURE if record.failed else EXIT_OK


def cmd_sweep(config: RunConfig) -> int:
    """Efficiency table over methods x step sizes"""
    methods = _methods(config)
    if not methods:
        return _usage_error("sweep needs at least one method id (or --all)")
    taus = config.taus or default_tau_grid()
    if len(taus) < 2:
        return _usage_error("sweep needs at least two step sizes")

    rows = efficiency_sweep(methods, _model(config), taus, niter=config.niter or DEFAULT_NITER,
                            jobs=config.jobs, compensated=config.compensated,
                            allow_degraded=config.allow_degraded)
    _emit(sweep_to_csv(rows), config.output)
    if config.plot_data:
        _emit(format_plot_data(rows), config.plot_data)

    table = Table(title="Sweep summary")
    for column in ("Method", "runs", "failed", "min max dE/E"):
        table.add_column(column)
    for method in methods:
        method_rows = [row for row in rows if row.method == method.id]
        good = [row.max_dE_rel for row in method_rows if row.status == "ok"]
        table.add_row(method.id, str(len(method_rows)), str(len(method_rows) - len(good)),
                      f"{min(good):.3e}" if good else "-")
    err_console.print(table)

    return EXIT_FAILURE if all(row.status != "ok" for row in rows) else EXIT_OK


def _solution_id(config: RunConfig, system: PolySystem) -> str:
    if config.methods:
        return config.methods[0]
    prefix = "SOLVEDH" if system.kind == MethodKind.ABAH else "SOLVED"
    return prefix + "".join(str(r) for r in system.order)


def cmd_solve(config: RunConfig) -> int:
    """Coefficients for a target order; writes solution files"""
    if not config.order or config.stages < 1:
        return _usage_error("solve needs --order and --stages")

    kind = MethodKind(config.kind)
    try:
        system = build_system(config.order, config.stages, kind, cubic=kind == MethodKind.ABAH)
    except SolverError as e:
        return _usage_error(str(e))

    strategy = config.solve_method
    if strategy == 'auto':
        strategy = 'grid' if system.square and system.n_unknowns <= GRID_MAX_UNKNOWNS else 'homotopy'
    if strategy == 'grid' and not system.square:
        return _usage_error(f"Grid solve needs a square system: {system.describe()}")

    output_dir = Path(config.output_dir)
    base_id = _solution_id(config, system)

    if strategy == 'grid':
        solutions = [grid_solve(system, dps=config.dps)]
    else:
        report = run_pipeline(system, zeroed=config.zero or None,
                              seeds=range(config.seed, config.seed + config.seeds),
                              dps=config.dps, jobs=config.jobs, x0_seed=config.seed)
        log_path = write_path_logs(report, PathValidator.output_path(f"{base_id}_paths.yaml", output_dir))
        err_console.print(f"Path log: {log_path} (success rate {report.success_rate:.0%})")
        if report.selected is None:
            err_console.print("[red]No certified real solution within the seed budget[/red]")
            return EXIT_EXHAUSTED
        solutions = [report.selected] + [c for c in report.solutions if c is not report.selected]

    table = Table(title=f"Solutions: {system.describe()}")
    for column in ("id", "norm", "residual", "negative a", "negative b", "certified"):
        table.add_column(column)

    certified_any = False
    for index, candidate in enumerate(solutions):
        method_id = base_id if index == 0 else f"{base_id}_{index}"
        method = candidate.to_method(method_id)
        result = certify(method, tol=config.tol, dps=config.dps)
        certified_any = certified_any or result.certified
        path = write_solution_file(PathValidator.output_path(f"{method_id}.txt", output_dir), method, result)
        a_neg, b_neg = negative_coefficients(method)
        table.add_row(method_id, f"{float(candidate.norm):.6f}", f"{float(result.max_residual):.2e}",
                      ",".join(a_neg) or "-", ",".join(b_neg) or "-",
                      "yes" if result.certified else "no")
        logger.info("solution saved", method=method_id, path=str(path))
    console.print(table)

    return EXIT_OK if certified_any else EXIT_FAILURE


def cmd_catalog(config: RunConfig) -> int:
    """Plain-text registry listing"""
    registry = default_registry()
    _emit(registry.export_catalog(), config.output)

    table = Table(title="Registry")
    for column in ("id", "kind", "order", "stages", "cubic", "source"):
        table.add_column(column)
    for method in registry.list_methods():
        table.add_row(method.id, method.kind.value, ",".join(str(r) for r in method.order),
                      str(method.stages), "yes" if method.cubic_condition else "no", method.source)
    err_console.print(table)
    return EXIT_OK


COMMANDS = {
    'verify': cmd_verify,
    'integrate': cmd_integrate,
    'sweep': cmd_sweep,
    'solve': cmd_solve,
    'catalog': cmd_catalog,
}


def _order_arg(text: str):
    try:
        return list(parse_order(text))
    except ValidationError as e:
        raise argparse.ArgumentTypeError(str(e))


def _float_list_arg(text: str):
    try:
        return list(parse_float_list(text))
    except ValidationError as e:
        raise argparse.ArgumentTypeError(str(e))


def _name_list_arg(text: str):
    return [part.strip() for part in text.split(',') if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="SplitFlow - splitting methods for near-integrable Hamiltonian systems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python splitflow.py verify --all                       # Certify every registry method
  python splitflow.py verify LEAPFROG --order 10,4       # Fails: leapfrog is (2,2)
  python splitflow.py integrate ABA864 --tau 0.1         # Perturbed Kepler, t in [0, 1e4]
  python splitflow.py integrate ABAH1064 --model helio --elements data/outer_planets.txt --tau 0.25
  python splitflow.py sweep LEAPFROG ABA82 --niter 10000 --output sweep.csv
  python splitflow.py solve --order 8,2 --stages 4       # Positive (8,2) method by grid search
  python splitflow.py solve --order 10,6,4 --stages 9 --abah --seeds 16
  python splitflow.py catalog                            # Registry as plain text

Exit codes: 0 success, 1 certification/integration failure, 2 usage error, 3 solver exhausted
        """
    )
    parser.add_argument('--config', help='TOML file of key = value options')
    parser.add_argument('--verbose', action='store_true', help='Log at INFO level')
    parser.add_argument('--debug', action='store_true', help='Log at DEBUG level')
    parser.add_argument('--dps', type=int, help='Decimal digits for extended precision (default 50)')

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument('--model', choices=['kepler', 'helio'], help='Model (default kepler)')
    model.add_argument('--epsilon', type=float, help='Perturbation size of the Kepler model')
    model.add_argument('--eccentricity', type=float, help='Initial eccentricity of the Kepler model')
    model.add_argument('--elements', help='Planetary element file for the helio model')
    model.add_argument('--compensated', action='store_true', default=None,
                       help='Compensated summation of state updates')
    model.add_argument('--allow-degraded', action='store_true', default=None,
                       help='Accept ABA methods on approximate B-flows')
    model.add_argument('--niter', type=int, help='Steps per run')
    model.add_argument('--output', help='Output file (stdout when omitted)')

    subparsers = parser.add_subparsers(dest='subcommand', required=True)

    verify = subparsers.add_parser('verify', help='Certify coefficient tables')
    verify.add_argument('methods', nargs='*', help='Method ids')
    verify.add_argument('--all', dest='all_methods', action='store_true', default=None,
                        help='Every registry method')
    verify.add_argument('--tol', type=float, help='Residual tolerance (default 1e-30)')
    verify.add_argument('--order', type=_order_arg, help='Certify against this order, e.g. 10,4')

    run = subparsers.add_parser('integrate', parents=[model], help='Integrate one method')
    run.add_argument('methods', nargs='*', help='Method id')
    run.add_argument('--tau', type=float, help='Step size (default 0.1)')
    run.add_argument('--t-final', dest='t_final', type=float, help='Final time (default 1e4)')
    run.add_argument('--sample-dt', dest='sample_dt', type=float, help='Sampling interval (default 20)')
    run.add_argument('--states', action='store_true', default=None, help='Add q and p columns')
    run.add_argument('--phase-error', dest='phase_error', action='store_true', default=None,
                     help='Add errors against an ABA1064 tau/10 reference run')
    run.add_argument('--no-fsal', dest='fsal', action='store_false', default=None,
                     help='Do not merge the last and first A-flows of consecutive steps')

    sweep = subparsers.add_parser('sweep', parents=[model], help='Efficiency sweep')
    sweep.add_argument('methods', nargs='*', help='Method ids')
    sweep.add_argument('--all', dest='all_methods', action='store_true', default=None,
                       help='Every registry method')
    sweep.add_argument('--taus', type=_float_list_arg, help='Comma separated step sizes')
    sweep.add_argument('--jobs', type=int, help='Worker threads')
    sweep.add_argument('--plot-data', dest='plot_data', help='Companion plot-data file')

    solve = subparsers.add_parser('solve', help='Derive coefficients')
    solve.add_argument('--order', type=_order_arg, help='Generalized order, e.g. 10,6,4')
    solve.add_argument('--stages', type=int, help='Stage count')
    kind = solve.add_mutually_exclusive_group()
    kind.add_argument('--abah', dest='kind', action='store_const', const='ABAH',
                      help='Approximate B-flows (adds the cubic condition)')
    kind.add_argument('--bab', dest='kind', action='store_const', const='BAB', help='BAB layout')
    solve.add_argument('--method', dest='solve_method', choices=['auto', 'grid', 'homotopy'],
                       help='Solution strategy (default auto)')
    solve.add_argument('--zero', type=_name_list_arg, help='Entries held at zero for x0, e.g. a3,a4')
    solve.add_argument('--seeds', type=int, help='Homotopy seed budget (default 16)')
    solve.add_argument('--seed', type=int, help='First seed')
    solve.add_argument('--jobs', type=int, help='Worker processes')
    solve.add_argument('--tol', type=float, help='Certification tolerance (default 1e-30)')
    solve.add_argument('--id', dest='solution_id', help='Identifier of the written solution')
    solve.add_argument('--output-dir', dest='output_dir', help='Directory for solution files')

    catalog = subparsers.add_parser('catalog', help='Print the registry')
    catalog.add_argument('--output', help='Output file (stdout when omitted)')

    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    flags = {key: value for key, value in vars(args).items()
             if key not in ('config', 'verbose', 'debug', 'solution_id')}
    if getattr(args, 'solution_id', None):
        flags['methods'] = [args.solution_id]
    if flags.get('methods') == []:
        flags['methods'] = None
    return flags


def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = build_config(_flags(args), args.config)
    except (ConfigError, ValidationError) as e:
        return _usage_error(str(e))

    level = 'DEBUG' if args.debug else 'INFO' if args.verbose else config.log_level
    configure_logging(level)
    logger.debug("configuration", **config.to_dict())

    try:
        return COMMANDS[config.subcommand](config)
    except (ValidationError, ConfigError, RegistryError, PlanError, ModelError, ElementsError) as e:
        return _usage_error(str(e))
    except SolverError as e:
        err_console.print(f"[red]Solver failed:[/red] {sanitize_log_message(str(e))}", highlight=False)
        return EXIT_EXHAUSTED
    except SplitFlowError as e:
        err_console.print(f"[red]Failed:[/red] {sanitize_log_message(str(e))}", highlight=False)
        return EXIT_FAILURE


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nExiting program")
        sys.exit(0)
    except Exception as e:
        print(f"Unexpected error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)

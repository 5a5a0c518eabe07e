"""Command-line surface.

    lightstack solve       --config stack.yaml --out DIR [--grid N]
    lightstack forces      --config stack.yaml --out DIR
    lightstack relax       --config stack.yaml --out DIR [--frozen I,J] [--dt] [--tol] [--max-steps]
    lightstack equilibrate --config stack.yaml --out DIR [--frozen I,J] [--tol] [--max-steps]
    lightstack minimize    --config stack.yaml --out DIR [--seed] [--sweeps] [--chains] [--greedy]
    lightstack sweep       --out DIR [--mirror-lambda] [--bs-lambda] [--length-range] [--z-range]
                           [--grid NZxNL]
    lightstack scenario    {fig1,fig2,fig3} --out DIR [--seed] [--grid] [--sweeps] [--chains]
                           [--clouds]

Every run writes ``manifest.yaml`` (resolved parameters, reusable as
``--config``) and ``run.jsonl`` (run log) next to its outputs. Exit codes:
0 success, 1 invalid input, 2 no convergence (best-so-far still written).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import uuid
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, NoReturn, TextIO

import numpy as np

from src import __version__
from src.core.config import SimulationConfig, load_config, resolve_workers
from src.core.exceptions import (
    ConvergenceError,
    LightstackError,
    NotIdenticalClouds,
)
from src.core.types import WAVELENGTH
from src.dynamics.equilibria import (
    LATTICE_HEADER,
    Equilibrium,
    find_equilibrium,
    lattice_report,
    relax,
)
from src.dynamics.montecarlo import (
    FINAL_HEADER,
    TRACE_HEADER,
    AnnealSchedule,
    MinimizationResult,
    greedy_descent,
    run_chains,
    slab_analysis,
)
from src.optics.field_solver import intensity_profile, peak_intensity, solve, stack_transmission
from src.optics.forces import (
    FORCE_REPORT_HEADER,
    force_report,
    force_vector,
    momentum_flux,
    momentum_residual,
)
from src.reporting.runlog import RunLogger, StderrLog, utc_timestamp
from src.reporting.writers import RunManifest, write_csv, write_yaml
from src.sweeps.force_map import (
    GRID_HEADER,
    BeamSplitterSpec,
    CavitySpec,
    SweepGrid,
    force_map,
)
from src.sweeps.scenarios import (
    ChainSetup,
    SplitterSetup,
    scenario_fig1,
    scenario_fig2,
    scenario_fig3,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2


class UsageError(Exception):
    """Raised instead of exiting when the arguments cannot be parsed."""

    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message, self.format_usage())


def _index_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got {text!r}") from e


def _float_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected MIN,MAX, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected MIN,MAX, got {text!r}") from e


def _optional_float(text: str) -> float | None:
    if text.lower() in {"none", "off"}:
        return None
    try:
        return float(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a number or 'none', got {text!r}") from e


def _resolution(text: str) -> tuple[int, int]:
    """Parse ``NZxNL`` (positions × lengths)."""
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise LightstackError(f"--grid must look like 512x256 for this command, got {text!r}")
    return int(parts[0]), int(parts[1])


def _points_per_wavelength(text: str | None, default: int) -> int:
    if text is None:
        return default
    try:
        value = int(text)
    except ValueError as e:
        raise LightstackError(f"--grid must be an integer for this command, got {text!r}") from e
    if value < 2:
        raise LightstackError(f"--grid must be at least 2, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("out"), help="Output directory")
    common.add_argument("--threads", type=int, default=None, help="Worker count")
    common.add_argument("--quiet", action="store_true", help="Only print errors")

    with_config = argparse.ArgumentParser(add_help=False)
    with_config.add_argument("--config", type=Path, required=True, help="Stack YAML or manifest")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--frozen", type=_index_list, default=None, help="Fixed indices, e.g. 0,2")
    search.add_argument("--tol", type=float, default=None, help="Force tolerance")
    search.add_argument("--max-steps", type=int, default=None, help="Step or iteration limit")

    parser = _Parser(
        prog="lightstack",
        description="Light fields, optical forces and self-ordering of 1D scatterer stacks",
    )
    parser.add_argument("--version", action="version", version=f"lightstack {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve_cmd = commands.add_parser("solve", parents=[common, with_config], help="Field profile")
    solve_cmd.add_argument("--grid", default=None, help="Profile points per wavelength")

    commands.add_parser("forces", parents=[common, with_config], help="Forces and energies")

    relax_cmd = commands.add_parser(
        "relax", parents=[common, with_config, search], help="Overdamped relaxation"
    )
    relax_cmd.add_argument("--dt", type=float, default=None, help="Initial time step")

    commands.add_parser(
        "equilibrate", parents=[common, with_config, search], help="Newton equilibrium search"
    )

    minimize_cmd = commands.add_parser(
        "minimize", parents=[common, with_config], help="Monte-Carlo energy minimisation"
    )
    minimize_cmd.add_argument("--seed", type=int, default=None)
    minimize_cmd.add_argument("--sweeps", type=int, default=None)
    minimize_cmd.add_argument("--chains", type=int, default=None)
    minimize_cmd.add_argument("--move-scale", type=float, default=None)
    minimize_cmd.add_argument("--frozen", type=_index_list, default=None)
    minimize_cmd.add_argument(
        "--greedy", action=argparse.BooleanOptionalAction, default=None,
        help="Zero-temperature descent",
    )

    sweep_cmd = commands.add_parser("sweep", parents=[common], help="Beam-splitter force map")
    sweep_cmd.add_argument("--mirror-lambda", type=_optional_float, default=10.0)
    sweep_cmd.add_argument("--bs-lambda", type=float, default=1.0)
    sweep_cmd.add_argument("--length-range", type=_float_pair, default=(2.5, 3.5))
    sweep_cmd.add_argument("--z-range", type=_float_pair, default=(0.05, 2.45))
    sweep_cmd.add_argument("--grid", default="512x256", help="Resolution NZxNL")

    scenario_cmd = commands.add_parser("scenario", parents=[common], help="Canned scenarios")
    scenario_cmd.add_argument("name", choices=["fig1", "fig2", "fig3"])
    scenario_cmd.add_argument("--seed", type=int, default=0)
    scenario_cmd.add_argument("--grid", default=None)
    scenario_cmd.add_argument("--sweeps", type=int, default=None)
    scenario_cmd.add_argument("--chains", type=int, default=4)
    scenario_cmd.add_argument("--clouds", type=int, default=None, help="Chain length for fig1")

    return parser


@dataclass
class _Run:
    """State shared by a subcommand handler."""

    args: argparse.Namespace
    out: Path
    log: StderrLog
    runlog: RunLogger
    manifest: RunManifest
    workers: int

    def csv(self, name: str, header: Sequence[str], rows) -> None:
        path = write_csv(self.out / name, header, rows)
        self._record(path)

    def yaml(self, name: str, data: dict[str, Any]) -> None:
        path = write_yaml(self.out / name, data)
        self._record(path)

    def _record(self, path: Path) -> None:
        self.manifest.outputs.append(path.name)
        self.runlog.log_event("file_written", {"path": str(path)})

    def load(self) -> SimulationConfig:
        config = load_config(self.args.config)
        self.log.log(f"Config loaded from {self.args.config} ({len(config.stack)} scatterers)")
        self.runlog.log_event("config_loaded", {"path": str(self.args.config)})
        return config

    def remember(self, config: SimulationConfig) -> None:
        self.manifest.config = config.to_dict()


def _pick(given: Any, saved: dict[str, Any], key: str, default: Any) -> Any:
    """Command-line value, else the one saved in the config, else the default."""
    if given is not None:
        return given
    return saved.get(key, default)


def _frozen(args: argparse.Namespace, config: SimulationConfig) -> tuple[int, ...]:
    frozen = config.frozen if args.frozen is None else tuple(sorted(set(args.frozen)))
    for index in frozen:
        if not 0 <= index < len(config.stack):
            raise LightstackError(f"Frozen index {index} out of range for {len(config.stack)}")
    return frozen


def _cmd_solve(run: _Run) -> int:
    config = run.load()
    grid = _points_per_wavelength(run.args.grid, config.grid_points_per_wavelength)
    config = replace(config, grid_points_per_wavelength=grid)
    run.remember(config)

    solution = solve(config.stack)
    positions = config.stack.positions
    z_min, z_max = positions[0] - WAVELENGTH, positions[-1] + WAVELENGTH
    n_points = int(math.ceil(grid * (z_max - z_min) / WAVELENGTH)) + 1
    profile = intensity_profile(solution, z_min, z_max, n_points)
    run.csv("profile.csv", ["z", "intensity"], profile.rows())
    run.csv(
        "regions.csv",
        ["region", "reference", "right_re", "right_im", "left_re", "left_im"],
        [
            (k, r.reference, r.rightward.real, r.rightward.imag, r.leftward.real, r.leftward.imag)
            for k, r in enumerate(solution.regions)
        ],
    )
    transmission = stack_transmission(config.stack)
    peak_z, peak = peak_intensity(solution, float(z_min), float(z_max))
    run.yaml(
        "summary.yaml",
        {
            "transmission": transmission.transmission,
            "reflection": transmission.reflection,
            "momentum_residual": momentum_residual(solution),
            "peak_position": peak_z,
            "peak_intensity": peak,
        },
    )
    run.log.log(f"Solved {len(config.stack)} scatterers, T = {transmission.transmission:.6g}")
    return EXIT_OK


def _cmd_forces(run: _Run) -> int:
    config = run.load()
    run.remember(config)
    report = force_report(config.stack)
    run.csv("forces.csv", FORCE_REPORT_HEADER, report.rows())
    discrepancy = report.max_discrepancy
    run.yaml(
        "summary.yaml",
        {
            "total_force": report.total_force,
            "momentum_flux": momentum_flux(solve(config.stack)),
            "momentum_residual": report.momentum_residual,
            "max_force_discrepancy": discrepancy,
            "total_energy": report.energies.total,
        },
    )
    run.runlog.log_event("forces", {"max_discrepancy": discrepancy})
    return EXIT_OK


def _write_equilibrium(run: _Run, equilibrium: Equilibrium) -> None:
    forces = force_vector(solve(equilibrium.stack))
    run.csv(
        "positions.csv",
        ["index", "position", "lambda", "force", "frozen"],
        [
            (j, z, lam, f, j in equilibrium.frozen)
            for j, (z, lam, f) in enumerate(
                zip(equilibrium.stack.positions, equilibrium.stack.lambdas, forces, strict=True)
            )
        ],
    )
    data = equilibrium.to_dict()
    try:
        report = lattice_report(equilibrium)
    except NotIdenticalClouds:
        data["lattice"] = None
    else:
        data["lattice"] = report.to_dict()
        run.csv("lattice.csv", LATTICE_HEADER, report.rows())
    run.yaml("equilibrium.yaml", data)
    run.runlog.log_event(
        "equilibrium",
        {
            "converged": equilibrium.converged,
            "iterations": equilibrium.iterations,
            "residual": equilibrium.residual,
            "method": equilibrium.method,
        },
    )


def _search(
    run: _Run,
    block: str,
    resolve: Callable[[dict[str, Any]], dict[str, Any]],
    search: Callable[..., Equilibrium],
) -> int:
    """Run an equilibrium search with options resolved against the config block ``block``."""
    config = run.load()
    frozen = _frozen(run.args, config)
    options = resolve(getattr(config, block))
    run.remember(replace(config, frozen=frozen, **{block: options}))
    try:
        equilibrium = search(config.stack, frozen=frozen, **options)
    except ConvergenceError as e:
        if e.best is not None:
            _write_equilibrium(run, e.best)
        run.log.error(e.message)
        run.manifest.status = "not_converged"
        return EXIT_NOT_CONVERGED
    _write_equilibrium(run, equilibrium)
    run.log.log(
        f"Converged in {equilibrium.iterations} steps, residual {equilibrium.residual:.3g}, "
        f"{equilibrium.stability.value if equilibrium.stability else 'unclassified'}"
    )
    return EXIT_OK


def _cmd_relax(run: _Run) -> int:
    args = run.args

    def resolve(saved: dict[str, Any]) -> dict[str, Any]:
        return {
            "dt": _pick(args.dt, saved, "dt", 0.1),
            "tol": _pick(args.tol, saved, "tol", 1e-10),
            "max_steps": _pick(args.max_steps, saved, "max_steps", 20000),
        }

    return _search(run, "relax", resolve, relax)


def _cmd_equilibrate(run: _Run) -> int:
    args = run.args

    def resolve(saved: dict[str, Any]) -> dict[str, Any]:
        # --max-steps caps both the Newton iterations and the relaxation fallback.
        return {
            "tol": _pick(args.tol, saved, "tol", 1e-12),
            "max_iter": _pick(args.max_steps, saved, "max_iter", 50),
            "max_steps": _pick(args.max_steps, saved, "max_steps", 20000),
        }

    return _search(run, "equilibrate", resolve, find_equilibrium)


def _write_minimization(run: _Run, result: MinimizationResult) -> None:
    run.csv("trace.csv", TRACE_HEADER, result.trace_rows())
    run.csv("final.csv", FINAL_HEADER, result.final_rows())
    run.runlog.log_event(
        "chain_finished",
        {
            "seed": result.seed,
            "final_energy": result.final_energy,
            "accepted_moves": result.accepted_moves,
            "bookkeeping_error": result.bookkeeping_error,
        },
    )


def _cmd_minimize(run: _Run) -> int:
    args = run.args
    config = run.load()
    frozen = _frozen(args, config)
    seed = config.seed if args.seed is None else args.seed
    base = AnnealSchedule.from_dict(config.anneal)
    schedule = AnnealSchedule(
        initial_temperature=base.initial_temperature,
        cooling_factor=base.cooling_factor,
        sweeps=base.sweeps if args.sweeps is None else args.sweeps,
        move_scale=base.move_scale if args.move_scale is None else args.move_scale,
    )
    chains = config.chains if args.chains is None else args.chains
    greedy = config.greedy if args.greedy is None else args.greedy
    resolved = replace(config, frozen=frozen, seed=seed, anneal=schedule.to_dict())
    run.remember(replace(resolved, chains=chains, greedy=greedy))

    if greedy:
        result = greedy_descent(
            config.stack, schedule.move_scale, schedule.sweeps, frozen=frozen, seed=seed
        )
        results = [result]
    else:
        result, results = run_chains(
            config.stack, schedule, frozen, chains=chains, seed=seed, max_workers=run.workers
        )
    _write_minimization(run, result)
    summary = result.summary()
    summary["chains"] = [chain.summary() for chain in results]
    summary["slabs"] = slab_analysis(result.final_stack).to_dict()
    run.yaml("summary.yaml", summary)
    run.log.log(f"Energy {result.initial_energy:.6g} -> {result.final_energy:.6g}")
    return EXIT_OK


def _write_grid(run: _Run, grid: SweepGrid) -> None:
    run.csv("grid.csv", GRID_HEADER, grid.rows())
    rows = []
    for row, length in enumerate(grid.lengths):
        crossings = grid.row_equilibria(row)
        stable = [c.position for c in crossings if c.descending]
        spacing = float(np.mean(np.diff(stable))) if len(stable) > 1 else math.nan
        rows.append((length, len(crossings), len(stable), spacing))
    run.csv("rows.csv", ["length", "zeros", "stable_zeros", "stable_spacing"], rows)
    summary = grid.summary()
    run.yaml("summary.yaml", summary)
    run.runlog.log_event("grid_finished", {"contour_counts": summary["contour_counts"]})


def _cmd_sweep(run: _Run) -> int:
    args = run.args
    n_positions, n_lengths = _resolution(args.grid)
    cavity = CavitySpec(args.mirror_lambda, *args.length_range, n_lengths)
    splitter = BeamSplitterSpec(args.bs_lambda, *args.z_range, n_positions)
    grid = force_map(cavity, splitter, max_workers=run.workers)
    _write_grid(run, grid)
    run.log.log(f"Force map {n_lengths}x{n_positions} done")
    return EXIT_OK


def _cmd_scenario(run: _Run) -> int:
    args = run.args
    if args.name == "fig1":
        schedule = AnnealSchedule() if args.sweeps is None else AnnealSchedule(sweeps=args.sweeps)
        run.manifest.parameters["schedule"] = schedule.to_dict()
        result = scenario_fig1(
            seed=args.seed,
            setup=ChainSetup() if args.clouds is None else ChainSetup(n_clouds=args.clouds),
            schedule=schedule,
            chains=args.chains,
            max_workers=run.workers,
        )
        _write_minimization(run, result.best)
        forces = result.forces
        run.csv("forces.csv", ["index", "position", "force"],
                zip(range(len(forces)), result.best.final_stack.positions, forces, strict=True))
        run.yaml("summary.yaml", result.summary())
        run.log.log(f"Energy ratio {result.energy_ratio:.4g}, {result.slabs.slab_count} slabs")
    elif args.name == "fig2":
        grid = _points_per_wavelength(args.grid, 256)
        result = scenario_fig2(grid_points_per_wavelength=grid)
        run.csv(
            "scan.csv",
            ["atom_position", "energy", "peak_intensity", "peak_relative", "peak_over_mean"],
            zip(result.scan_positions, result.scan_energies, result.scan_peaks,
                result.scan_peaks / result.setup.free_space_peak,
                result.scan_peaks / result.setup.free_space_mean, strict=True),
        )
        run.csv("profile_energy_minimum.csv", ["z", "intensity"],
                result.energy_minimum.profile.rows())
        run.csv("profile_equilibrium.csv", ["z", "intensity"],
                result.equilibrium_point.profile.rows())
        run.yaml("summary.yaml", result.summary())
        run.log.log(
            f"Energy minimum peak {result.energy_minimum.peak_over_mean:.4g}, "
            f"equilibrium peak {result.equilibrium_point.peak_over_mean:.4g} "
            "(mean free-space intensity)"
        )
    else:
        setup = SplitterSetup() if args.grid is None else SplitterSetup(
            resolution=_resolution(args.grid)
        )
        _write_grid(run, scenario_fig3(setup, max_workers=run.workers))
    return EXIT_OK


HANDLERS: dict[str, Callable[[_Run], int]] = {
    "solve": _cmd_solve,
    "forces": _cmd_forces,
    "relax": _cmd_relax,
    "equilibrate": _cmd_equilibrate,
    "minimize": _cmd_minimize,
    "sweep": _cmd_sweep,
    "scenario": _cmd_scenario,
}


def _parameters(args: argparse.Namespace) -> dict[str, Any]:
    params = {}
    for key, value in vars(args).items():
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        params[key] = value
    return params


def run(argv: Sequence[str] | None = None, stderr: TextIO | None = None) -> int:
    """Parse ``argv``, run the subcommand and return its exit status."""
    stream = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        stream.write(e.usage)
        stream.write(f"lightstack: error: {e}\n")
        return EXIT_INVALID

    log = StderrLog(stream, quiet=args.quiet)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    run_id = uuid.uuid4().hex[:12]
    manifest = RunManifest(
        run_id=run_id,
        subcommand=args.command if args.command != "scenario" else f"scenario {args.name}",
        timestamp=utc_timestamp(),
        parameters=_parameters(args),
    )

    with RunLogger(out / "run.jsonl") as runlog:
        runlog.log_run_start(run_id, manifest.subcommand, manifest.parameters)
        started = time.perf_counter()
        try:
            workers = resolve_workers(args.threads)
            status = HANDLERS[args.command](_Run(args, out, log, runlog, manifest, workers))
        except (LightstackError, ValueError) as e:
            log.error(str(e))
            runlog.log_event("error", {"type": type(e).__name__, "message": str(e)})
            manifest.status = "invalid"
            status = EXIT_INVALID
        duration_ms = (time.perf_counter() - started) * 1000.0
        manifest.write(out)
        runlog.log_run_end(run_id, manifest.status, duration_ms)
    return status


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())

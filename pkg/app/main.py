import argparse
import logging
import sys
import time
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app import __version__
from app.certify import certify_problem, contraction_constant, invariant_ball_radius
from app.config import settings
from app.errors import DefinitionError, EvaluationError, IntegrableError, TruncationError
from app.models import (
    ProblemDefinition,
    Provenance,
    Report,
    SolveConfig,
    config_hash,
    parse_definition,
)
from app.operators import kernel_norm_estimate
from app.registry import build_problem
from app.solver import solve
from app.wkmeasure import (
    Schedules,
    build_ensemble,
    check_mu_contraction,
    dieudonne_report,
    mu_measure,
    parse_ensemble,
)

logger = logging.getLogger(__name__)

PROBLEMS_DIR = Path(__file__).parent / "problems"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EVALUATION = 3

# --------------------------------------------------
# LOADING
# --------------------------------------------------

def bundled_problems() -> List[str]:
    return sorted(p.stem for p in PROBLEMS_DIR.glob("*.json"))


def load_problem(path: str) -> ProblemDefinition:
    """
    Load a definition from a file path, or a bundled problem by name.

    Raises:
        DefinitionError: missing file, bad JSON (with line/column), unknown
            keys, or a constant outside its assumption's range
    """
    candidate = Path(path)
    if not candidate.is_file():
        bundled = PROBLEMS_DIR / f"{path}.json"
        if not bundled.is_file():
            raise DefinitionError(
                f"No problem file '{path}' (bundled problems: {', '.join(bundled_problems())})"
            )
        candidate = bundled
    definition = parse_definition(candidate.read_text(encoding="utf-8"))
    logger.info(f"[CLI] Loaded '{definition.name}' from {candidate}")
    return definition


def with_cells(definition: ProblemDefinition, cells: Optional[int]) -> ProblemDefinition:
    if cells is None:
        return definition
    numerics = definition.numerics.model_copy(update={"cells": cells})
    return definition.model_copy(update={"numerics": numerics})


def _provenance(definition: ProblemDefinition, options: Dict[str, Any], seed: Optional[int], started: float) -> Provenance:
    return Provenance(
        tool_version=__version__,
        seed=seed,
        config_hash=config_hash({
            "definition": definition.model_dump(mode="json", by_alias=True),
            "options": options,
        }),
        elapsed_s=round(time.perf_counter() - started, 6),
    )


# --------------------------------------------------
# COMMANDS
# --------------------------------------------------

def run_certify(
    definition: ProblemDefinition,
    seed: Optional[int] = None,
    sample_count: Optional[int] = None,
    pair_count: Optional[int] = None,
) -> Report:
    started = time.perf_counter()
    seed = settings.SEED if seed is None else seed
    spec = build_problem(definition)
    certificate = certify_problem(spec, sample_count=sample_count, pair_count=pair_count, seed=seed)

    payload = certificate.to_dict()
    payload["problem"] = definition.name
    if spec.kernel_norm_source == "declared":
        try:
            estimate = kernel_norm_estimate(spec.k, t_max=definition.numerics.t_max)
            payload["kernel_norm"]["estimate"] = estimate.value
            payload["kernel_norm"]["estimate_slack"] = estimate.slack
            payload["kernel_norm"]["difference"] = estimate.value - spec.kernel_norm
        except TruncationError as te:
            logger.warning(f"[CLI] kernel norm estimate unavailable: {te}")
            payload["kernel_norm"]["estimate_error"] = str(te)
    else:
        payload["kernel_norm"]["slack"] = spec.kernel_norm_slack

    options = {"command": "certify", "samples": sample_count, "pairs": pair_count}
    return Report(kind="certificate", payload=payload, provenance=_provenance(definition, options, seed, started))


def run_solve(
    definition: ProblemDefinition,
    config: Optional[SolveConfig] = None,
    emit_table: Optional[Path] = None,
) -> Report:
    started = time.perf_counter()
    config = config or SolveConfig()
    spec = build_problem(definition)

    gamma = contraction_constant(spec)
    _, r = invariant_ball_radius(spec)
    if r is None:
        logger.warning(f"[CLI] gamma = {gamma:.6g} >= 1: no certificate, solving anyway")

    result = solve(spec, config=config, radius=r)
    payload = result.to_dict()
    payload.update(problem=definition.name, gamma=gamma, r=r)
    if emit_table is not None:
        np.savetxt(emit_table, result.table(), delimiter=",", header="t,x", comments="", fmt="%.17g")
        logger.info(f"[CLI] Wrote {result.final_iterate.grid.nodes.size} rows to {emit_table}")
        payload["table"] = str(emit_table)

    options = {"command": "solve", "config": config.model_dump(mode="json")}
    return Report(kind="solve", payload=payload, provenance=_provenance(definition, options, None, started))


def run_measure(
    definition: ProblemDefinition,
    ensemble: str,
    schedules: Optional[Schedules] = None,
    seed: Optional[int] = None,
    cross_sums: bool = False,
    radius: Optional[float] = None,
) -> Report:
    started = time.perf_counter()
    seed = settings.SEED if seed is None else seed
    kind, size = parse_ensemble(ensemble)
    spec = build_problem(definition)
    grid = spec.default_grid()
    schedules = schedules or Schedules.for_horizon(grid.t_max)

    gamma = contraction_constant(spec)
    _, r = invariant_ball_radius(spec)
    if radius is None:
        radius = r if r is not None and r > 0.0 else 1.0
    X = build_ensemble(kind, size, grid, radius, seed)

    payload: Dict[str, Any] = {"problem": definition.name, "ensemble": X.label, "radius": radius, "gamma": gamma}
    if gamma < 1.0:
        contraction = check_mu_contraction(spec, X, schedules, cross_sums=cross_sums)
        payload.update(contraction.to_dict())
    else:
        payload.update(status="skipped", source=mu_measure(X, schedules).to_dict(), note="gamma >= 1")
    payload["dieudonne"] = dieudonne_report(X, schedules.epsilons[-1], schedules.taus[0]).to_dict()

    options = {
        "command": "measure",
        "ensemble": ensemble,
        "epsilons": list(schedules.epsilons),
        "taus": list(schedules.taus),
        "cross_sums": cross_sums,
        "radius": radius,
    }
    return Report(kind="measure", payload=payload, provenance=_provenance(definition, options, seed, started))


def run_demo(cells: Optional[int] = None, sample_count: Optional[int] = None, pair_count: Optional[int] = None) -> List[str]:
    """Certify and solve the bundled worked example; returns the summary lines."""
    definition = with_cells(load_problem("taoudi_example"), cells)
    certificate = run_certify(definition, sample_count=sample_count, pair_count=pair_count).payload
    solved = run_solve(definition).payload
    return [
        f"problem   {definition.name} ({definition.numerics.cells} cells, T_max={definition.numerics.t_max:g})",
        f"gamma     {certificate['gamma']:.12g}",
        f"C         {certificate['C']:.12g}",
        f"r         {certificate['r']!r}",
        f"status    {certificate['status']}",
        f"residual  {solved['residual']:.3e} ({solved['status']}, {solved['iterations']} iterations)",
    ]


# --------------------------------------------------
# ARGUMENTS
# --------------------------------------------------

def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app.main",
        description="Certify, solve and measure x = Ax + Bx in L1(R+).",
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level (default: LOG_LEVEL or INFO).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def problem_command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("file", help="Problem definition (path or bundled name, e.g. taoudi_example).")
        p.add_argument("--cells", type=int, default=None, help="Override the definition's cell count.")
        return p

    p = problem_command("certify", "Compute gamma, C, r and run the assumption checks.")
    p.add_argument("--seed", type=int, default=None, help=f"Sampling seed (default: {settings.SEED}).")
    p.add_argument("--samples", type=int, default=None, help=f"Pointwise samples per check (default: {settings.SAMPLES}).")
    p.add_argument("--pairs", type=int, default=None, help=f"Random pairs for the B_r checks (default: {settings.PAIRS}).")

    p = problem_command("solve", "Iterate to a residual-certified fixed point.")
    p.add_argument("--scheme", choices=["picard", "split"], default="picard")
    p.add_argument("--tol", type=float, default=1e-6, help="Relative residual target (default: 1e-6).")
    p.add_argument("--max-iters", type=int, default=200, dest="max_iters")
    p.add_argument("--damping", type=float, default=1.0)
    p.add_argument("--project-to-ball", type=float, default=None, dest="project_to_ball", help="Scale iterates into B_r.")
    p.add_argument("--no-refinement-check", action="store_true", dest="no_refinement_check")
    p.add_argument("--emit-table", type=Path, default=None, dest="emit_table", help="Write t,x CSV here.")

    p = problem_command("measure", "Estimate mu on an ensemble and its image.")
    p.add_argument("--ensemble", required=True, help="kind:size with kind in concentrating|escaping|random-in-ball|zero.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cross-sums", action="store_true", dest="cross_sums", help="Use {Ax + By} instead of {Ax + Bx}.")
    p.add_argument("--epsilons", type=_floats, default=None, help="Decreasing epsilon schedule, comma-separated.")
    p.add_argument("--taus", type=_floats, default=None, help="Increasing tau schedule, comma-separated.")
    p.add_argument("--radius", type=float, default=None, help="Ball radius for the ensemble (default: r).")

    p = sub.add_parser("demo", help="Run the bundled worked example end to end.")
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--pairs", type=int, default=None)
    return parser


def _dispatch(args: argparse.Namespace) -> Optional[Report]:
    if args.command == "demo":
        for line in run_demo(args.cells, args.samples, args.pairs):
            print(line)
        return None

    definition = with_cells(load_problem(args.file), args.cells)
    if args.command == "certify":
        return run_certify(definition, seed=args.seed, sample_count=args.samples, pair_count=args.pairs)
    if args.command == "solve":
        config = SolveConfig(
            scheme=args.scheme,
            tol=args.tol,
            max_iters=args.max_iters,
            damping=args.damping,
            project_to_ball=args.project_to_ball,
            refinement_check=not args.no_refinement_check,
        )
        return run_solve(definition, config, emit_table=args.emit_table)

    schedules = None
    if args.epsilons is not None or args.taus is not None:
        default = Schedules.for_horizon(definition.numerics.t_max)
        schedules = Schedules(
            tuple(args.epsilons) if args.epsilons is not None else default.epsilons,
            tuple(args.taus) if args.taus is not None else default.taus,
        )
    return run_measure(
        definition, args.ensemble, schedules=schedules, seed=args.seed,
        cross_sums=args.cross_sums, radius=args.radius,
    )


# --------------------------------------------------
# ENTRY POINT
# --------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=str(args.log_level).upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        report = _dispatch(args)
    except (ValidationError, ValueError) as ve:
        logger.error(f"[CLI] ❌ {ve}")
        return EXIT_INPUT
    except (EvaluationError, TruncationError) as ee:
        logger.error(f"[CLI] ❌ {ee}")
        return EXIT_EVALUATION
    except IntegrableError as ie:
        logger.error(f"[CLI] ❌ {ie}")
        return EXIT_EVALUATION
    except Exception:
        traceback.print_exc()
        return 1

    if report is not None:
        sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

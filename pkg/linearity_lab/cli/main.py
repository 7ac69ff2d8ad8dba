"""
linearity-lab command line.

Usage:
    linearity-lab certify --map depolarizing.json --dim 2 --seed 1
    linearity-lab choi --map '{"kind": "blackbox", "preset": "transpose", "dim": 2}'
    linearity-lab witness --map weinberg.json --dim 2 --seed 1 --restarts 16
    linearity-lab steer --ensemble target.json
    linearity-lab demo projection --dim 2 --seed 7

Each invocation writes exactly one JSON document to stdout (or --output);
diagnostics and error bodies go to stderr. Exit codes: 0 success, 2 invalid
input, 3 map fault.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from pydantic import BaseModel, TypeAdapter, ValidationError

from linearity_lab.cli.scenarios import BASIS_STREAM, BasisConfig, resolve_basis, run_scenario
from linearity_lab.dynamics import DynamicalMap, map_from_spec
from linearity_lab.ensembles import (
    Ensemble,
    design_steering,
    match_ensembles,
    mixture_density,
    purify,
    steer,
)
from linearity_lab.errors import LabError
from linearity_lab.models import (
    BasisChoice,
    ChoiReport,
    DensityMatrixPayload,
    EnsemblePayload,
    ErrorDetail,
    ErrorResponse,
    InitialState,
    Scenario,
    ScenarioConfig,
    SteeringReport,
    VectorJSON,
    encode_matrix,
    map_spec_adapter,
)
from linearity_lab.qstatics import DensityMatrix, FactorSubset, partial_trace, task_rng, trace_distance
from linearity_lab.settings import LabSettings, get_settings
from linearity_lab.witness import (
    CHOI_TOL,
    WitnessConfig,
    certify_linearity,
    check_cptp,
    reconstruct_choi,
    witness_search,
)

logger = logging.getLogger("linearity_lab.cli")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_basis_adapter: TypeAdapter[list[VectorJSON]] = TypeAdapter(list[VectorJSON])


# ── Input helpers ───────────────────────────────────────────────────────────

def _read_source(value: str) -> str:
    """Inline JSON when the argument looks like JSON, otherwise a file path."""
    text = value.strip()
    if text.startswith(("{", "[")):
        return text
    return Path(value).read_text(encoding="utf-8")


def _load_map(value: str, seed: int) -> DynamicalMap:
    return map_from_spec(map_spec_adapter.validate_json(_read_source(value)), seed=seed)


def _parse_basis(value: Optional[str]) -> BasisConfig:
    if value is None:
        return None
    if value in {choice.value for choice in BasisChoice}:
        return BasisChoice(value)
    return _basis_adapter.validate_json(_read_source(value))


# ── Subcommands ─────────────────────────────────────────────────────────────

def cmd_certify(args: argparse.Namespace, settings: LabSettings) -> BaseModel:
    map = _load_map(args.map, args.seed)
    return certify_linearity(
        map,
        args.dim or map.dim,
        trials=args.trials or settings.certify_trials,
        threshold=args.tolerance or settings.tolerance,
        seed=args.seed,
    )


def cmd_choi(args: argparse.Namespace, settings: LabSettings) -> BaseModel:
    map = _load_map(args.map, args.seed)
    dim = args.dim or map.dim
    choi = reconstruct_choi(map, dim)
    return ChoiReport(
        map_label=map.label,
        dim=dim,
        matrix=encode_matrix(choi.matrix),
        cptp=check_cptp(choi, tol=args.tolerance or CHOI_TOL),
    )


def cmd_witness(args: argparse.Namespace, settings: LabSettings) -> BaseModel:
    map = _load_map(args.map, args.seed)
    if args.rho is not None:
        rho = DensityMatrix.from_payload(DensityMatrixPayload.model_validate_json(_read_source(args.rho)))
    else:
        rho = DensityMatrix.maximally_mixed(args.dim or map.dim)
    config = WitnessConfig(
        restarts=args.restarts or settings.restarts,
        max_iters=args.max_iters or settings.max_iters,
        ensemble_size=args.ensemble_size,
        seed=args.seed,
        workers=args.workers or settings.workers,
        search_steps_per_unit_time=args.search_resolution or settings.search_steps_per_unit_time,
    )
    return witness_search(map, rho, config)


def cmd_steer(args: argparse.Namespace, settings: LabSettings) -> BaseModel:
    target = Ensemble.from_payload(EnsemblePayload.model_validate_json(_read_source(args.ensemble)))
    rho = mixture_density(target)
    basis_config = _parse_basis(args.basis)
    complement_dim = len(basis_config) if isinstance(basis_config, list) else len(target)
    purification, structure = purify(rho, complement_dim=complement_dim)
    if basis_config is None:
        basis = design_steering(purification, target, structure)
    else:
        basis = resolve_basis(
            basis_config, structure.factor_dims[1], task_rng(args.seed, BASIS_STREAM)
        )
    steered = steer(purification, basis, structure)
    match = match_ensembles(target, steered)
    marginal = partial_trace(purification, structure, FactorSubset((0,)))
    return SteeringReport(
        target=target.to_payload(),
        structure=structure.to_payload(),
        purification=purification.to_payload(),
        basis=basis.to_payload(),
        steered=steered.to_payload(),
        marginal_deviation=trace_distance(mixture_density(steered), marginal),
        min_fidelity=match.min_fidelity,
        max_weight_error=match.max_weight_error,
    )


def cmd_demo(args: argparse.Namespace, settings: LabSettings) -> BaseModel:
    config = ScenarioConfig(
        scenario=Scenario(args.scenario),
        factor_dim=args.dim or settings.factor_dim,
        map=map_spec_adapter.validate_json(_read_source(args.map)) if args.map else None,
        measurement_basis=_parse_basis(args.basis),
        state=InitialState(args.state),
        seed=args.seed,
        tolerance=args.tolerance or settings.tolerance,
    )
    return run_scenario(config)


Handler = Callable[[argparse.Namespace, LabSettings], BaseModel]


# ── Parser ──────────────────────────────────────────────────────────────────

def build_parser(settings: LabSettings) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=settings.seed, help="base PRNG seed")
    common.add_argument("--dim", type=int, default=None, help="state dimension (factor dim for demos)")
    common.add_argument("--tolerance", type=float, default=None, help="verdict threshold")
    common.add_argument("--output", type=Path, default=None, help="write the JSON report here")
    common.add_argument(
        "--log-level",
        type=str.upper,
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level for stderr diagnostics",
    )

    parser = argparse.ArgumentParser(
        prog="linearity-lab",
        description="Decomposition-independence checks for candidate quantum dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    certify = sub.add_parser("certify", parents=[common], help="certify linearity of a map")
    certify.add_argument("--map", required=True, help="map spec file or inline JSON")
    certify.add_argument("--trials", type=int, default=None)
    certify.set_defaults(handler=cmd_certify)

    choi = sub.add_parser("choi", parents=[common], help="reconstruct and check a Choi matrix")
    choi.add_argument("--map", required=True, help="map spec file or inline JSON")
    choi.set_defaults(handler=cmd_choi)

    witness = sub.add_parser("witness", parents=[common], help="search for a signaling witness")
    witness.add_argument("--map", required=True, help="map spec file or inline JSON")
    witness.add_argument("--rho", default=None, help="density matrix file or inline JSON")
    witness.add_argument("--restarts", type=int, default=None)
    witness.add_argument("--max-iters", type=int, default=None)
    witness.add_argument("--ensemble-size", type=int, default=None)
    witness.add_argument("--workers", type=int, default=None)
    witness.add_argument(
        "--search-resolution",
        type=int,
        default=None,
        help="integrator steps per unit time during the search",
    )
    witness.set_defaults(handler=cmd_witness)

    steer_cmd = sub.add_parser("steer", parents=[common], help="remotely prepare an ensemble")
    steer_cmd.add_argument("--ensemble", required=True, help="target ensemble file or inline JSON")
    steer_cmd.add_argument("--basis", default=None, help="named basis or explicit basis JSON")
    steer_cmd.set_defaults(handler=cmd_steer)

    demo = sub.add_parser("demo", parents=[common], help="run a scenario")
    demo.add_argument("scenario", choices=[s.value for s in Scenario])
    demo.add_argument("--map", default=None, help="map spec file or inline JSON")
    demo.add_argument("--basis", default=None, help="named basis or explicit basis JSON")
    demo.add_argument(
        "--state", default=InitialState.RANDOM.value, choices=[s.value for s in InitialState]
    )
    demo.set_defaults(handler=cmd_demo)
    return parser


# ── Entry points ────────────────────────────────────────────────────────────

def _report_error(body: ErrorResponse) -> int:
    sys.stderr.write(body.model_dump_json() + "\n")
    return body.exit_code


def _emit(document: BaseModel, output: Optional[Path]) -> None:
    text = document.model_dump_json(indent=2)
    if output is None:
        sys.stdout.write(text + "\n")
    else:
        output.write_text(text + "\n", encoding="utf-8")


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    level: Union[int, str] = (args.log_level or settings.log_level).upper()
    logging.basicConfig(stream=sys.stderr, level=level, format=LOG_FORMAT)

    handler: Handler = args.handler
    try:
        document = handler(args, settings)
        _emit(document, args.output)
    except LabError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return _report_error(exc.body)
    except ValidationError as exc:
        detail = ErrorDetail(type="invalid_input", code="validation_error", message=str(exc))
        return _report_error(ErrorResponse(error=detail, exit_code=2))
    except (OSError, ValueError) as exc:
        detail = ErrorDetail(type="invalid_input", code="bad_input", message=str(exc))
        return _report_error(ErrorResponse(error=detail, exit_code=2))
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

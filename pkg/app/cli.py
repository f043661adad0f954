import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from app.exceptions import ConfigError, LabError
from app.schemas import HermitianClass, RunConfig
from app.services import (
    ahlfors_ratios,
    build_cycle,
    get_scenario,
    hirz_classify,
    kahler_verdict,
    parse_config,
    pn_verdict,
    run,
    scenario_summaries,
    torus_certificate,
    validate_config,
)
from app.services.density import decay_curve, lelong

logger = logging.getLogger("lab")


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _print_json(payload):
    if isinstance(payload, list):
        print(json.dumps([item.model_dump() for item in payload], indent=2))
    else:
        print(payload.model_dump_json(indent=2))


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="lab", description="Foliated cycle laboratory")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="execute a scenario run and write its reports")
    run_parser.add_argument("--config", help="JSON run config")
    run_parser.add_argument("--scenario")
    run_parser.add_argument("--seed", type=int)
    run_parser.add_argument("--samples", type=int)
    run_parser.add_argument("--order", dest="quad_order", type=int)
    run_parser.add_argument("--lambda", dest="lambda_grid", type=_floats)
    run_parser.add_argument("--out")
    run_parser.add_argument("--format", choices=["csv", "json"])
    run_parser.add_argument("--workers", type=int)

    scenario_parser = commands.add_parser("scenario", help="inspect the built-in scenarios")
    scenario_commands = scenario_parser.add_subparsers(dest="action", required=True)
    scenario_commands.add_parser("list")
    show = scenario_commands.add_parser("show")
    show.add_argument("name")

    decay = commands.add_parser("decay", help="decay curve of one scenario")
    decay.add_argument("--scenario", required=True)
    decay.add_argument("--lambda", dest="lambda_grid", type=_floats)
    decay.add_argument("--samples", type=int, default=1 << 16)
    decay.add_argument("--seed", type=int, default=42)
    decay.add_argument("--order", type=int, default=16)
    decay.add_argument("--workers", type=int, default=1)

    lelong_parser = commands.add_parser("lelong", help="Lelong ratios at the flow box center")
    lelong_parser.add_argument("--scenario", required=True)
    lelong_parser.add_argument("--radii", type=_floats, default=[0.4, 0.2, 0.1])
    lelong_parser.add_argument("--order", type=int, default=16)

    cohomology = commands.add_parser("cohomology", help="cohomological certificates")
    cohomology_commands = cohomology.add_subparsers(dest="target", required=True)
    hirzebruch = cohomology_commands.add_parser("hirzebruch")
    hirzebruch.add_argument("--n", type=int, required=True)
    hirzebruch.add_argument("--probe", type=_floats, required=True)
    torus = cohomology_commands.add_parser("torus")
    torus.add_argument("--matrix", required=True, help="JSON file with a Hermitian matrix")
    pn = cohomology_commands.add_parser("pn")
    pn.add_argument("--n", type=int, required=True)
    pn.add_argument("--q", type=int, required=True)
    pn.add_argument("--mass", type=float, default=1.0)
    kahler = cohomology_commands.add_parser("kahler")
    kahler.add_argument("--n", type=int, required=True)
    kahler.add_argument("--q", type=int, required=True)
    kahler.add_argument("--h-pp", dest="h_pp", type=int, required=True)
    kahler.add_argument("--mass", type=float, default=1.0)

    ahlfors = commands.add_parser("ahlfors", help="length/area ratios of a linear entire curve")
    ahlfors.add_argument("--v", type=_floats, required=True, help="re,im,re,im")
    ahlfors.add_argument("--radii", type=_floats, default=[1.0, 10.0, 100.0])
    ahlfors.add_argument("--order", type=int, default=64)

    return parser.parse_args(argv)


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """
    File values first, then every flag that was given
    """
    data = {}
    if args.config:
        data = parse_config(args.config).model_dump(exclude_none=True)
    for key in ("scenario", "seed", "samples", "quad_order", "lambda_grid", "out", "format", "workers"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if "scenario" not in data:
        raise ConfigError("a scenario is required, via --scenario or the config file")
    return validate_config(data)


def _record(outcome):
    from app.database import ledger_session
    from app.services import create_run_record

    with ledger_session() as db:
        record = create_run_record(db, outcome)
        logger.info(f"Recorded run {record.id}")


def _run(args) -> int:
    config = load_run_config(args)
    outcome = run(config)
    if os.getenv("LAB_RECORD_RUNS", "false").lower() in ("true", "1", "t"):
        _record(outcome)
    for assertion in outcome.report.assertions:
        mark = "ok" if assertion.passed else "FAILED"
        print(f"{mark:6} {assertion.name}: {assertion.detail}")
    print(outcome.json_path)
    if outcome.csv_path:
        print(outcome.csv_path)
    return outcome.status


def _load_matrix(path: str) -> HermitianClass:
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON: {e.msg}", f"line {e.lineno}, column {e.colno}")
    if isinstance(data, dict):
        return HermitianClass.model_validate(data)
    array = np.asarray(data, dtype=float)
    if array.ndim == 3:
        # [re, im] pairs
        array = array[..., 0] + 1j * array[..., 1]
    return HermitianClass.from_array(array)


def _dispatch(args) -> int:
    if args.command == "run":
        return _run(args)
    if args.command == "scenario":
        _print_json(scenario_summaries() if args.action == "list" else get_scenario(args.name))
    elif args.command == "decay":
        spec = get_scenario(args.scenario)
        T = build_cycle(spec)
        grid = args.lambda_grid or spec.lambda_grid
        _print_json(decay_curve(T, None, grid, args.samples, args.seed, args.order, args.workers))
    elif args.command == "lelong":
        T = build_cycle(get_scenario(args.scenario))
        _print_json(lelong(T, None, args.radii, args.order))
    elif args.command == "cohomology":
        if args.target == "hirzebruch":
            if len(args.probe) != 2:
                raise ConfigError("--probe takes exactly two numbers a,b")
            _print_json(hirz_classify(args.n, *args.probe))
        elif args.target == "torus":
            _print_json(torus_certificate(_load_matrix(args.matrix)))
        elif args.target == "pn":
            _print_json(pn_verdict(args.n, args.q, args.mass))
        else:
            _print_json(kahler_verdict(args.n, args.q, args.h_pp, args.mass))
    elif args.command == "ahlfors":
        values = list(args.v) + [0.0] * (len(args.v) % 2)
        direction = [complex(values[i], values[i + 1]) for i in range(0, len(values), 2)]
        _print_json(ahlfors_ratios(direction, args.radii, order=args.order))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.getenv("LAB_LOG_LEVEL", "INFO").upper())
    args = _parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as e:
        first = e.errors()[0]
        print(f"error: {first['msg']}", file=sys.stderr)
    except ConfigError as e:
        print(f"config error: {e.detail}", file=sys.stderr)
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
    except LabError as e:
        print(f"error: {e.detail}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())

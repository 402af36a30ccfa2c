import argparse
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import ExitGameError
from app.core.logging import setup_logging
from app.models.enums import Command
from app.schemas.run_config import RunConfig
from app.services.runner import EXIT_ERROR, run


def _grid(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"grid must be N or N,N,...: {text}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exitgame",
        description=f"{settings.APP_NAME} {settings.APP_VERSION}: lower/upper values, playthroughs and checks",
    )
    parser.add_argument("--config", required=True, type=Path, help="problem file (TOML)")
    parser.add_argument(
        "--command",
        default=Command.SOLVE.value,
        type=str.upper,
        choices=[c.value for c in Command],
        help="what to run",
    )
    parser.add_argument("--out", type=Path, default=Path(settings.OUTPUT_DIR), help="artifact directory")
    parser.add_argument("--seed", type=int, default=settings.SEED)
    parser.add_argument("--grid", type=_grid, help="nodes per axis, N or N,N,...")
    parser.add_argument("--dt", type=float)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--trials", type=int, help="certification trials for VERIFY")
    parser.add_argument("--horizon", type=float, help="simulation and certification horizon")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging(settings.LOG_LEVEL, settings.LOG_FILE_PATH)
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(
            problem_path=args.config,
            command=Command(args.command),
            out_dir=args.out,
            seed=args.seed,
            grid=args.grid,
            dt=args.dt,
            tol=args.tol,
            max_iters=args.max_iters,
            trials=args.trials,
            horizon=args.horizon,
        )
    except (ExitGameError, ValidationError) as e:
        logger.error(f"Invalid invocation: {e}")
        return EXIT_ERROR
    return run(config)


if __name__ == "__main__":
    sys.exit(main())

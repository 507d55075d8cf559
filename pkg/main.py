"""
SurveyPlanner 命令行入口

    python main.py plan resource/surveys/table1.yaml --out-dir work-dir/table1
    python main.py compare resource/surveys/comparison.yaml --blur-sweep 2,4,8
"""

import argparse
import os
import sys
import traceback
from typing import List, Optional

# Add project root directory to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.append(project_root)

from app.common.config import load_spec
from app.config import APP_NAME, CACHE_PATH, TOLERANCE_PROFILES, VERSION
from app.core.errors import SpecError
from app.core.pipeline import ExitCode, compare, exit_code_for, run
from app.core.utils import logger

logger = logger.setup_logger("SurveyPlanner")


def exception_hook(exctype, value, tb):
    logger.error("".join(traceback.format_exception(exctype, value, tb)))
    sys.__excepthook__(exctype, value, tb)  # 调用默认的异常处理


sys.excepthook = exception_hook


def _blur_values(text: str) -> List[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated speeds, got {text!r}")
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("blur speeds must be > 0")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survey-planner",
        description=f"{APP_NAME} {VERSION}: minimum-time survey trajectories",
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("spec", help="survey spec (YAML)")
        p.add_argument("--out-dir", help="output directory (overrides output.directory)")
        p.add_argument("--tolerance-profile", choices=sorted(TOLERANCE_PROFILES))
        p.add_argument("--no-cache", action="store_true", help="do not read or write the solution cache")

    plan = sub.add_parser("plan", help="plan, smooth, audit and export one survey")
    common(plan)
    plan.add_argument("--sample-rate", type=float, help="export sample rate in Hz, 1..1000")
    plan.add_argument("--no-smooth", action="store_true", help="skip the quartic smoothing")
    plan.add_argument("--waypoints-only", action="store_true", help="only write the waypoint document")

    cmp = sub.add_parser("compare", help="compare the NLP planner with the bang-singular-bang baseline")
    common(cmp)
    cmp.add_argument("--blur-sweep", type=_blur_values, help="comma-separated v_blur values in m/s")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "output.directory": args.out_dir,
        "mode.tolerance_profile": args.tolerance_profile,
    }
    if args.no_cache:
        overrides["mode.cache"] = False
    if args.command == "plan":
        overrides["output.sample_rate_hz"] = args.sample_rate
        if args.no_smooth:
            overrides["mode.smooth"] = False
        if args.waypoints_only:
            overrides["mode.waypoints_only"] = True
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec, _overrides(args))
    except SpecError as e:
        for line in e.diagnostics:
            print(f"spec error: {line}", file=sys.stderr)
        return int(ExitCode.SPEC_ERROR)

    cache = None
    if spec.use_cache:
        from app.core.storage import CacheManager

        cache = CacheManager(str(CACHE_PATH))
        cache.cleanup_old_cache()

    try:
        if args.command == "compare":
            result = compare(spec, cache=cache, blur_sweep=args.blur_sweep)
            for row in result.rows:
                total = "-" if row.total_time is None else f"{row.total_time:.4f} s"
                print(f"{row.method:<20} v_blur={row.v_blur:<8g} {total:>12}  {row.status}")
        else:
            result = run(spec, cache=cache)
            print(f"{result.message} ({len(result.artifacts)} files in {spec.out_dir})")
        return int(result.exit_code)
    except Exception as e:
        logger.exception(f"{args.command} failed: {e}")
        return int(exit_code_for(e))
    finally:
        if cache is not None:
            cache.close()


if __name__ == "__main__":
    sys.exit(main())

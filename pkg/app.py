"""
SlowFast-SCI - Command-line entry point
Slow learning, fast learning and analysis commands for CASSI reconstruction
"""

import argparse
import json
import os
import sys
import traceback
from typing import List, Optional

# Add project root to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config import APP_TITLE, APP_VERSION, DEFAULT_PRESET, EXIT_CODES, LOG_FILE, PRESETS
from pipeline.commands import COMMANDS, SPLITS, MODEL_PRODUCERS, RunContext, run
from pipeline.experiment import preset_config, resolve_config
from utils.errors import SFSCIError
from utils.helpers import format_error_message
from utils.logger import setup_logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfsci",
        description=f"{APP_TITLE} {APP_VERSION}: distilled unfolding reconstruction with test-time adapters"
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="Pipeline step to run")
    parser.add_argument("--config", help="JSON config; fields override the preset")
    parser.add_argument("--out", help="Output directory (overrides SFSCI_OUT and the config)")
    parser.add_argument("--seed", type=int, help="Master seed for masks and model initialization")
    parser.add_argument("--preset", choices=PRESETS, default=DEFAULT_PRESET, help="Base configuration")
    parser.add_argument("--figures", action="store_true", help="Also write PNG figures next to the CSVs")
    parser.add_argument("--print-defaults", action="store_true",
                        help="Print the preset's full config as JSON and exit (gen-data)")
    parser.add_argument("--model", choices=sorted(MODEL_PRODUCERS), default="adapted",
                        help="Checkpoint to evaluate (evaluate)")
    parser.add_argument("--split", choices=SPLITS, default="target-test", help="Data split to evaluate (evaluate)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and map failures to exit codes."""
    args = build_parser().parse_args(argv)

    if args.print_defaults:
        print(json.dumps(preset_config(args.preset).to_dict(), indent=2, sort_keys=True))
        return EXIT_CODES["ok"]

    logger = setup_logger("sfsci", log_file=None)
    try:
        cfg = resolve_config(args.config, args.preset, args.seed)
        out = cfg.resolved_output_dir(args.out)
        logger = setup_logger("sfsci", log_file=out / LOG_FILE)

        ctx = RunContext(cfg, out, figures=args.figures, options={"model": args.model, "split": args.split})
        summary = run(args.command, ctx)
        logger.info(f"{args.command} finished: {json.dumps(summary, default=str)[:500]}")
        return EXIT_CODES["ok"]

    except SFSCIError as e:
        logger.error(format_error_message(e, args.command))
        logger.debug(traceback.format_exc())
        return e.exit_code
    except Exception as e:
        logger.error(f"{format_error_message(e, args.command)}\n{traceback.format_exc()}")
        return EXIT_CODES["error"]


if __name__ == "__main__":
    sys.exit(main())

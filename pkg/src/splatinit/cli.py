"""Command line entry points for the pipeline stages.

Exit codes: 0 on success, 2 when inputs or configuration fail
validation, 1 on any other error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .config import PipelineConfig, load_config
from .errors import ConfigError, SplatinitError
from .pipeline import edit_gaussians, evaluate_losses, run_pipeline, run_stage

logger = logging.getLogger("splatinit.cli")


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for name in ("scene", "seed", "jobs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(config, **overrides) if overrides else config


def _cmd_stage(name: str):
    def handler(args) -> int:
        run_stage(name, _resolve_config(args), args.dataset, getattr(args, "output", None))
        return 0

    return handler


def _cmd_run(args) -> int:
    run_pipeline(_resolve_config(args), args.dataset, args.output)
    return 0


def _cmd_verify(args) -> int:
    report = run_stage("verify", _resolve_config(args), args.dataset, args.output)
    print(f"dynamic gaussians : {report['dynamic_count']}")
    print(f"trajectory RMSE   : {report['trajectory_rmse']:.6e}")
    print("instance  tracker  IoU       min frame IoU")
    for gid in sorted(report["instances"], key=int):
        entry = report["instances"][gid]
        print(
            f"{gid:>8}  {entry['tracker_id']:>7}  {entry['iou']:<8.6f}  "
            f"{entry['min_frame_iou']:<8.6f}"
        )
    print(f"overall min IoU   : {report['min_iou']:.6f}")
    return 0


def _parse_ids(text: str | None) -> set[int] | None:
    if text is None:
        return None
    try:
        return {int(part) for part in text.split(",") if part.strip()}
    except ValueError as exc:
        raise ConfigError(f"bad instance id list {text!r}") from exc


def _cmd_edit(args) -> int:
    read, written = edit_gaussians(
        args.input,
        args.output,
        keep=_parse_ids(args.keep),
        remove=_parse_ids(args.remove),
        include_static=not args.drop_static,
    )
    print(f"kept {written} of {read} gaussians")
    return 0


def _cmd_eval_loss(args) -> int:
    terms = evaluate_losses(
        args.image, args.ref_image, args.depth, args.ref_depth, _resolve_config(args)
    )
    print(json.dumps(terms, indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatinit",
        description="Motion-aware Gaussian initialization from posed video",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, output=True, overrides=False):
        p.add_argument("--config", help="TOML config file (defaults apply when omitted)")
        p.add_argument("--dataset", required=True, help="dataset directory")
        if output:
            p.add_argument("--output", required=True, help="run output directory")
        if overrides:
            p.add_argument("--scene", help="override the configured scene")
            p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--jobs", type=int, help="override worker count")

    p = sub.add_parser("synth", help="render a scripted scene into a dataset")
    add_common(p, output=False, overrides=True)
    p.set_defaults(func=_cmd_stage("synth"))

    for name, blurb in [
        ("detect", "flag dynamic pixels by epipolar error"),
        ("track", "propagate instance masks over time"),
        ("flow", "lift tracks to 3D and refine rigid motion"),
        ("encode", "fit trajectory encodings"),
        ("init", "build the initial gaussian sets"),
    ]:
        p = sub.add_parser(name, help=blurb)
        add_common(p)
        p.set_defaults(func=_cmd_stage(name))

    p = sub.add_parser("run", help="all stages in order")
    add_common(p, overrides=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="compare a run against dataset references")
    add_common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("edit", help="filter a gaussian set by instance")
    p.add_argument("--input", required=True, help="gaussian PLY to read")
    p.add_argument("--output", required=True, help="gaussian PLY to write")
    p.add_argument("--keep", help="comma-separated instance ids to keep")
    p.add_argument("--remove", help="comma-separated instance ids to drop")
    p.add_argument("--drop-static", action="store_true", help="drop static gaussians too")
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("eval-loss", help="loss terms between two rendered pairs")
    p.add_argument("--config", help="TOML config file for the loss weights")
    p.add_argument("--image", required=True)
    p.add_argument("--ref-image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--ref-depth", required=True)
    p.set_defaults(func=_cmd_eval_loss)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except SplatinitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 1
    except Exception as exc:  # noqa: BLE001 - process boundary
        logger.debug("unexpected failure", exc_info=True)
        print(f"unexpected error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point.

Verbs: ``run``, ``hypersurface``, ``overhead``, ``surface``, ``validate``.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigFile, OverheadSpec, load_config
from .errors import ConfigError, ZNEError
from .pipeline import (
    export_surface,
    format_overhead,
    overhead_report,
    run_hypersurface,
    run_zne,
    write_report,
)
from .sampling import ShotConfig

log = logging.getLogger("globalzne")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="globalzne", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    verbs = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", type=Path, required=needs_config, help="JSON config file")
        p.add_argument("--out", type=Path, help="output directory")

    def sampling_flags(p):
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--exact", action="store_true", help="infinite-sampling expectations (default)")
        mode.add_argument("--shots", type=_positive_int, help="simulate this many shots per setting")
        p.add_argument("--seed", type=_u64, help="master seed for shot sampling")

    p = verbs.add_parser("run", help="standard ZNE pipeline")
    common(p)
    sampling_flags(p)
    p = verbs.add_parser("hypersurface", help="multivariate hypersurface fit")
    common(p)
    sampling_flags(p)

    p = verbs.add_parser("overhead", help="measurement-overhead report")
    common(p, needs_config=False)
    p.add_argument("--sources", "-N", type=_positive_int, help="number of noise rates N")
    p.add_argument("--order", "-n", type=int, help="truncation order n")
    p.add_argument("--stability-minutes", type=float, default=None)
    p.add_argument("--settings-per-period", type=_positive_int, default=None)

    p = verbs.add_parser("surface", help="export the two-rate surface and its rays as CSV")
    common(p)

    p = verbs.add_parser("validate", help="check a config file and exit")
    common(p)
    return parser


def _with_sampling(cfg: ConfigFile, args) -> ConfigFile:
    pipeline = cfg.pipeline
    if args.exact:
        pipeline = replace(pipeline, sampling=None)
    elif args.shots is not None:
        seed = args.seed if args.seed is not None else (pipeline.sampling.seed if pipeline.sampling else 0)
        pipeline = replace(pipeline, sampling=ShotConfig(args.shots, seed))
    elif args.seed is not None and pipeline.sampling is not None:
        pipeline = replace(pipeline, sampling=ShotConfig(pipeline.sampling.shots, args.seed))
    return replace(cfg, pipeline=pipeline)


def _require(cfg: ConfigFile, *sections: str) -> None:
    missing = [s for s in sections if getattr(cfg, s) is None]
    if missing:
        raise ConfigError(f"config is missing section(s): {', '.join(missing)}")


def _summary(report: dict) -> str:
    return (
        f"{report['method']}: estimate {report['estimate']:.10g}, ideal {report['ideal']:.10g}, "
        f"|bias| {report['abs_bias']:.3g}, settings {report['n_settings']}"
    )


def _emit(report: dict, out: Path | None) -> None:
    if out is not None:
        for path in write_report(report, out):
            log.info("wrote %s", path)
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.verb == "overhead":
            spec = load_config(args.config).overhead if args.config else None
            N = args.sources if args.sources is not None else (spec.sources if spec else None)
            n = args.order if args.order is not None else (spec.order if spec else None)
            if N is None or n is None:
                raise ConfigError("overhead needs --sources and --order (or an overhead config section)")
            if n < 0:
                raise ConfigError("--order must be >= 0")
            spec = spec or OverheadSpec(N, n)
            report = overhead_report(
                N,
                n,
                args.stability_minutes if args.stability_minutes is not None else spec.stability_minutes,
                args.settings_per_period if args.settings_per_period is not None else spec.settings_per_period,
            )
            print(format_overhead(report))
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "overhead.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
            return 0

        cfg = load_config(args.config)
        if args.verb == "validate":
            sections = [k for k in ("scenario", "pipeline", "overhead", "surface") if getattr(cfg, k) is not None]
            print(f"{args.config}: OK ({', '.join(sections) or 'empty'})")
            return 0
        if args.verb == "surface":
            _require(cfg, "scenario", "surface")
            integrator = cfg.pipeline.integrator if cfg.pipeline else None
            result = export_surface(cfg.scenario, cfg.surface, args.out or Path("."), integrator)
            for item in result["intercepts"]:
                print(f"ray {item['ray']} base {item['base_rates']}: estimate {item['estimate']:.10g}, "
                      f"|bias| {item['abs_bias']:.3g}")
            return 0

        _require(cfg, "scenario", "pipeline")
        cfg = _with_sampling(cfg, args)
        if args.verb == "run":
            if cfg.pipeline.method == "hypersurface":
                raise ConfigError("pipeline.method: use the 'hypersurface' verb for hypersurface pipelines")
            report = run_zne(cfg.scenario, cfg.pipeline)
        else:
            if cfg.pipeline.method != "hypersurface":
                raise ConfigError(f"pipeline.method: 'hypersurface' verb needs method hypersurface, got {cfg.pipeline.method}")
            report = run_hypersurface(cfg.scenario, cfg.pipeline)
        _emit(report, args.out)
        print(_summary(report), file=sys.stderr if args.out is None else sys.stdout)
        return 0
    except ZNEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

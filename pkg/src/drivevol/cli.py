"""Command line entry point: ``drivevol <stage> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 model did
not converge, 1 anything else raised by the package.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__, pipeline
from .config import PipelineConfig, load_config, write_config
from .errors import DrivevolError
from .models import ModelSpec
from .synth import CorpusSpec, ProfileSpec, write_corpus

log = logging.getLogger("drivevol")

SYNTH_COVARIATES = ["aadt_major_k", "signalized", "L1-AccDec-Sdev"]


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivevol", description="Driving volatility and crash-frequency pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI configuration file")
    common.add_argument("--out", help="output directory (overrides paths.out)")
    common.add_argument("--workers", type=int, help="worker processes (overrides run.workers)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration entry; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    for name, text in [("ingest", "parse BSM files and assign records to site territories"),
                       ("measure", "segment passings and compute volatility measures"),
                       ("fit", "fit the configured count model"),
                       ("report", "correlations, VIF, expected vs actual, hotspots and figures"),
                       ("all", "run ingest, measure, fit and report")]:
        sub.add_parser(name, parents=[common], help=text)

    syn = sub.add_parser("synth", help="write a synthetic corpus and a matching config")
    syn.add_argument("directory")
    syn.add_argument("--sites", type=int, default=CorpusSpec.n_sites)
    syn.add_argument("--passings", type=int, default=CorpusSpec.passings_per_site)
    syn.add_argument("--devices", type=int, default=CorpusSpec.n_devices)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--stop-probability", type=float, default=ProfileSpec.stop_probability)
    syn.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args) -> PipelineConfig:
    overrides = _overrides(args.set)
    if args.out:
        overrides["paths.out"] = os.path.abspath(args.out)
    if args.workers is not None:
        overrides["run.workers"] = str(args.workers)
    return load_config(args.config, overrides)


def _synth(args) -> int:
    spec = CorpusSpec(n_sites=args.sites, passings_per_site=args.passings, n_devices=args.devices,
                      seed=args.seed, profile=ProfileSpec(stop_probability=args.stop_probability))
    truth = write_corpus(spec, args.directory)
    cfg = PipelineConfig(bsm=["bsm.csv"], sites="sites.csv", out="out",
                         model=ModelSpec(covariates=list(SYNTH_COVARIATES)))
    if spec.passings_per_site < cfg.measures.min_site_passings:
        log.warning("fewer passings per site than measures.min_site_passings; no site will qualify")
    write_config(cfg, os.path.join(args.directory, "drivevol.ini"))
    print(f"wrote {truth['n_records']} records for {spec.n_sites} sites to {args.directory}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return _synth(args)
        cfg = _config(args)
        runners = {"ingest": pipeline.run_ingest, "measure": pipeline.run_measure,
                   "fit": pipeline.run_fit, "report": pipeline.run_report}
        stages = pipeline.STAGES if args.command == "all" else (args.command,)
        for stage in stages:
            manifest = runners[stage](cfg)
            print(f"{stage}: {json.dumps(manifest.get('counts', {}), sort_keys=True)} "
                  f"({manifest['wall_time_s']:.2f} s)")
        return 0
    except argparse.ArgumentTypeError as exc:
        print(f"drivevol: error: {exc}", file=sys.stderr)
        return 2
    except DrivevolError as exc:
        print(f"drivevol: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"drivevol: DataError: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

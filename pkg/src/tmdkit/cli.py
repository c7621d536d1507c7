"""Command-line front end chaining simulation, calibration, and reconstruction.

Exit codes: 0 success, 2 configuration error, 3 data-format error,
4 numerical or degenerate-condition error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from . import io as tmdio
from . import pipelines
from .errors import ConfigError, DataFormatError, TmdkitError
from .montecarlo import SETUPS, ExperimentConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmdkit",
        description="simulate click detectors and reconstruct photon statistics",
    )
    parser.add_argument("--version", action="version", version=f"tmdkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser, constrained: bool = False) -> None:
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--setup", choices=SETUPS, help="use the stock config of this layout")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--shots", type=int, help="override the config shot count")
        p.add_argument("--out", default="tmdkit-out", help="output directory")
        if constrained:
            p.add_argument(
                "--constrained",
                action="store_true",
                help="non-negative reconstruction instead of the direct inverse",
            )

    p = sub.add_parser("simulate", help="run the shot-by-shot simulation")
    add_run_flags(p)
    p.add_argument("--emit-shots", action="store_true", help="also write per-shot masks as CSV")

    p = sub.add_parser("calibrate", help="estimate arm efficiencies from coincidences")
    add_run_flags(p)

    p = sub.add_parser("reconstruct", help="simulate and invert the detector model")
    add_run_flags(p, constrained=True)

    p = sub.add_parser("metrics", help="figures of merit for a stored distribution")
    p.add_argument("--in", dest="in_path", required=True, help="JSON document to analyze")
    p.add_argument("--out", default="tmdkit-out", help="output directory")

    p = sub.add_parser("fit", help="fit the one-parameter families to a stored distribution")
    p.add_argument("--in", dest="in_path", required=True, help="JSON document to fit")
    p.add_argument("--out", default="tmdkit-out", help="output directory")

    p = sub.add_parser("replicate", help="full measurement chain for one layout")
    p.add_argument("setup", choices=SETUPS, help="layout to replicate")
    add_run_flags(p, constrained=True)
    p.add_argument("--emit-shots", action="store_true", help="also write per-shot masks as CSV")
    return parser


def _load_config(args: argparse.Namespace) -> tuple[ExperimentConfig, list[str]]:
    inputs: list[str] = []
    if args.config is not None:
        config = tmdio.parse_config(args.config)
        inputs.append(str(args.config))
        if getattr(args, "setup", None) and args.command != "replicate":
            if config.setup != args.setup:
                raise ConfigError(
                    f"--setup {args.setup} contradicts the config's setup {config.setup}"
                )
    elif getattr(args, "setup", None):
        config = pipelines.default_config(args.setup)
    else:
        raise ConfigError("provide --config or --setup")
    return pipelines.apply_overrides(config, shots=args.shots, seed=args.seed), inputs


def _print_summary(doc: dict) -> None:
    skip = {"format_version", "kind", "config"}
    for key, value in doc.items():
        if key in skip or isinstance(value, (dict, list)):
            continue
        print(f"{key} = {value}")


def _write_manifest(
    command: str,
    out_dir: str,
    config_echo: dict,
    seed: int | None,
    inputs: list[str],
    output: pipelines.RunOutput,
    started: float,
) -> None:
    manifest = tmdio.RunManifest(
        command=command,
        config=config_echo,
        seed=seed,
        version=__version__,
        inputs=tuple(inputs),
        outputs=output.paths,
        duration_seconds=time.monotonic() - started,
    )
    tmdio.write_manifest(Path(out_dir) / "manifest.json", manifest)


def _dispatch(args: argparse.Namespace) -> None:
    started = time.monotonic()
    if args.command in ("simulate", "calibrate", "reconstruct"):
        config, inputs = _load_config(args)
        if args.command == "simulate":
            output = pipelines.run_simulate(config, args.out, emit_shots=args.emit_shots)
        elif args.command == "calibrate":
            output = pipelines.run_calibrate(config, args.out)
        else:
            output = pipelines.run_reconstruct(config, args.out, constrained=args.constrained)
        _write_manifest(
            args.command, args.out, tmdio.serialize_config(config), config.seed,
            inputs, output, started,
        )
    elif args.command in ("metrics", "fit"):
        if args.command == "metrics":
            output = pipelines.run_metrics_file(args.in_path, args.out)
        else:
            output = pipelines.run_fit_file(args.in_path, args.out)
        _write_manifest(
            args.command, args.out, {"in": str(args.in_path)}, None,
            [str(args.in_path)], output, started,
        )
    else:
        config = None
        inputs: list[str] = []
        if args.config is not None:
            config = tmdio.parse_config(args.config)
            inputs.append(str(args.config))
        output = pipelines.run_replicate(
            args.setup,
            args.out,
            config=config,
            shots=args.shots,
            seed=args.seed,
            constrained=args.constrained,
            emit_shots=args.emit_shots,
        )
        echo = output.primary
        _write_manifest(
            f"replicate {args.setup}", args.out,
            {"setup": args.setup, "shots": echo.get("shots"), "seed": echo.get("seed")},
            echo.get("seed"), inputs, output, started,
        )
    _print_summary(output.primary)
    for path in output.paths:
        print(f"wrote {path}")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TmdkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

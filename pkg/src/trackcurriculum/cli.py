"""Command line: ``run``, ``ablate``, ``check`` and ``export``.

Configuration comes from an optional flat ``key=value`` file; command-line
flags override it.  Exit status: 0 success, 1 usage error, 2 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .harness import ConfigError, ExperimentConfig, ablate, build_setup, check, parse_config_text, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_ORACLE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_config_flags(p: argparse.ArgumentParser, skip=()):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    for f in fields(ExperimentConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())


def _load_config(args, skip=()) -> ExperimentConfig:
    raw: dict[str, str] = {}
    if args.config:
        try:
            raw.update(parse_config_text(Path(args.config).read_text()))
        except OSError as err:
            raise UsageError(f"cannot read config: {err}") from err
    for f in fields(ExperimentConfig):
        if f.name not in skip and getattr(args, f.name, None) is not None:
            raw[f.name] = getattr(args, f.name)
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    return ExperimentConfig.from_mapping(raw)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trackcurriculum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="one seeded experiment")
    _add_config_flags(run)

    abl = sub.add_parser("ablate", help="variants x context dims over seeds")
    _add_config_flags(abl)
    abl.add_argument("--variants", default="currot,currot_a,currot_ao", help="comma-separated")
    abl.add_argument("--dims", default="51", help="comma-separated context_dim presets")

    chk = sub.add_parser("check", help="brute-force oracle suites")
    chk.add_argument("--seed", type=int, default=0)

    exp = sub.add_parser("export", help="write a trajectory, config or metric file")
    _add_config_flags(exp)
    exp.add_argument("what", choices=("trajectory", "config", "metric"))
    exp.add_argument("--out", required=True)
    exp.add_argument("--amplitudes", help="a_x,a_y of an eight to export")
    exp.add_argument("--particles", help="particles_final.json to take a context from")
    exp.add_argument("--index", type=int, default=0)
    exp.add_argument("--samples", type=int, default=4, help="trajectory samples per segment")
    return parser


def _export(args, config: ExperimentConfig):
    from .envs.eight import low_dim_to_coords
    from .metric import save_matrix
    from .trajectory import Context, write_trajectory_csv

    if args.what == "config":
        Path(args.out).write_text(config.to_text())
        return
    setup = build_setup(config)
    if args.what == "metric":
        save_matrix(args.out, setup.trajectory_metric.matrix)
        return
    if (args.amplitudes is None) == (args.particles is None):
        raise UsageError("export trajectory needs exactly one of --amplitudes or --particles")
    if args.amplitudes is not None:
        try:
            amps = np.array([float(x) for x in args.amplitudes.split(",")])
        except ValueError as err:
            raise UsageError(f"bad --amplitudes {args.amplitudes!r}") from err
        if amps.size != 2:
            raise UsageError("--amplitudes takes a_x,a_y")
        coords = low_dim_to_coords(amps, setup.spec)[0]
    else:
        contexts = np.asarray(json.loads(Path(args.particles).read_text())["contexts"], dtype=float)
        if not 0 <= args.index < contexts.shape[0]:
            raise UsageError(f"--index {args.index} out of range for {contexts.shape[0]} particles")
        coords = setup.embed(contexts[args.index : args.index + 1])[0]
    grid = setup.spec.grid
    times = np.concatenate([[grid.horizon[0]], grid.sample_times(args.samples), [grid.horizon[1]]])
    write_trajectory_csv(args.out, Context(coords, setup.spec.start), grid, times)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "check":
            return EXIT_OK if check(seed=args.seed) else EXIT_ORACLE
        config = _load_config(args)
        if args.command == "run":
            log = run_experiment(config)
            w = log.final_wasserstein
            print(f"{config.variant} seed={config.seed}: {len(log.rows)} iterations, "
                  f"final normalized W2 {w:.4g}, epsilon line {log.epsilon_line:.4g} -> {config.out_dir}")
        elif args.command == "ablate":
            variants = [v for v in args.variants.split(",") if v]
            dims = [d for d in args.dims.split(",") if d]

            def report(variant, dim, seed, err):
                print(f"failed: {variant} dim={dim} seed={seed}: {err}", file=sys.stderr)

            rows = ablate(config, variants, dims, on_error=report)
            for r in rows:
                print(f"{r['variant']:<14} {r['context_dim']:>8}  runs={r['runs']} failed={r['failed']} "
                      f"final W2 {r['final_wasserstein_mean']:.4g} +- {r['final_wasserstein_stderr']:.2g}")
        else:
            _export(args, config)
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:  # --help
        return EXIT_OK if not err.code else EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Verbs:
    generate   simulate a dataset and write the field files + manifest
    train      run the full pipeline (simulate, train, recover, score, report)
    evaluate   recompute metrics from a finished run's field files
    sweep      run several presets/configs and write one summary row each
    converge   run the derivative-error refinement study

Common flags: --config PATH (INI), --preset NAME, --seed N (overrides the
config's seed list), --out DIR.  The MOLLIPDE_OUT_ROOT environment variable
prefixes relative output directories.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import experiment
from .errors import MollipdeError, TrainingDivergedError
from .grids import write_binary, write_csv


def _load_config(args) -> experiment.ExperimentConfig:
    if args.config:
        cfg = experiment.config_from_file(args.config)
    elif args.preset:
        cfg = experiment.preset_config(args.preset)
    else:
        raise MollipdeError("provide --config or --preset")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg.validate()


def _add_common(parser):
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--preset", help="named preset configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="run a single seed instead of the config's list")
    parser.add_argument("--out", required=True, help="output directory")


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = experiment.resolve_out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        bundle = experiment.generate_bundle(cfg, seed)
        write_csv(bundle["data"], out / f"data_seed{seed}.csv")
        write_binary(bundle["data"], out / f"data_seed{seed}.bin")
        write_binary(bundle["lam_true"], out / f"lambda_true_seed{seed}.bin")
        if "phi_n" in bundle:
            write_binary(bundle["phi_n"], out / f"phi_n_seed{seed}.bin")
        with open(out / f"manifest_seed{seed}.json", "w", encoding="ascii") as fh:
            json.dump({"format_version": experiment.FORMAT_VERSION,
                       "config": cfg.as_dict(), "seed": seed,
                       **bundle["manifest"]}, fh, indent=2, sort_keys=True)
    print(f"wrote {len(cfg.seeds)} dataset(s) to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    report = experiment.run(cfg, args.out)
    agg = report.get("aggregate", {})
    line = ", ".join(f"{k}={v:.4f}" for k, v in sorted(agg.items())
                     if isinstance(v, float))
    print(f"report written to {experiment.resolve_out_dir(args.out) / 'report.json'}"
          + (f" ({line})" if line else ""))
    return 0


def cmd_evaluate(args) -> int:
    summary = experiment.evaluate(args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    named = []
    for preset in args.presets:
        named.append((preset, experiment.preset_config(preset)))
    if args.config:
        named.append(("config", experiment.config_from_file(args.config)))
    rows = experiment.sweep(named, args.out)
    failures = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows)} run(s), {failures} failure(s); summary at "
          f"{experiment.resolve_out_dir(args.out) / 'summary.csv'}")
    return 0 if failures < len(rows) else 1


def cmd_converge(args) -> int:
    cfg = _load_config(args) if (args.config or args.preset) else (
        experiment.preset_config("convergence"))
    if cfg.problem != "convergence":
        cfg = dataclasses.replace(cfg, problem="convergence")
    report = experiment.run(cfg, args.out)
    print(f"log-log slope {report['loglog_slope']:.3f}, envelope "
          f"C1={report['envelope']['c1']:.3g} C2={report['envelope']['c2']:.3g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mollipde",
        description="Smoothed-derivative inverse PDE experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb, fn in (("generate", cmd_generate), ("train", cmd_train),
                     ("converge", cmd_converge)):
        p = sub.add_parser(verb)
        _add_common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("evaluate")
    p.add_argument("--out", required=True, help="directory of a finished run")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep")
    p.add_argument("--presets", nargs="*", default=[],
                   help="preset names to include")
    p.add_argument("--config", help="additional INI config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.checkpoint_path:
            print(f"last good checkpoint: {exc.checkpoint_path}", file=sys.stderr)
        return 2
    except MollipdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

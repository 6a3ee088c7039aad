"""``fedclust`` command line: run experiments, generate data, tune the threshold.

Exit status is 0 on success, 2 when some experiment cells failed and 1 on a
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import SyntheticSpec, gen_mixture_linreg, save_federated_csv
from .errors import ConfigError, FedClustError
from .harness import ExperimentConfig, emit_report, load_dataset, parse_grid, run_experiment, tune_lambda

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

_SYNTH_KEYS = {"m": "m", "n": "n", "d": "d", "c": "clusters", "clusters": "clusters", "sigma": "sigma",
               "train_fraction": "train_fraction", "seed": "seed"}


def parse_synthetic(text: str) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, _, value = part.partition("=")
        if key not in _SYNTH_KEYS or not value:
            raise ConfigError(f"bad synthetic field {part!r}; expected key=value with key in {sorted(_SYNTH_KEYS)}")
        name = _SYNTH_KEYS[key]
        out[name] = float(value) if name in ("sigma", "train_fraction") else int(value)
    return out


def _load_config(args) -> ExperimentConfig:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if getattr(args, "seed", None) is not None:
        raw["seeds"] = args.seed
    if getattr(args, "algo", None):
        raw["algorithms"] = [a.strip() for a in args.algo.split(",") if a.strip()]
    if getattr(args, "out", None):
        raw["output_dir"] = args.out
    if getattr(args, "format", None):
        raw["format"] = args.format
    return ExperimentConfig.from_dict(raw)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir or ".")
    report = run_experiment(cfg, progress=lambda msg: print(msg, file=sys.stderr))
    path = emit_report(report, cfg.format, out / f"report.{cfg.format}")
    (out / "timings.json").write_text(json.dumps(report.timings, indent=2) + "\n")
    print(path)
    return EXIT_PARTIAL if report.failed else EXIT_OK


def cmd_gen(args) -> int:
    fields = parse_synthetic(args.synthetic)
    if args.seed is not None:
        fields["seed"] = args.seed[0]
    fd = gen_mixture_linreg(SyntheticSpec(**fields))
    save_federated_csv(fd, args.out)
    print(args.out)
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _load_config(args)
    grid = parse_grid(args.lambda_grid)
    results = []
    for seed in cfg.seeds:
        fd = load_dataset(cfg.dataset, seed)
        res = tune_lambda(fd, grid, cfg.srfca_config(seed))
        results.append({"seed": seed, "lambda": res.lam, "diagnostics": res.diagnostics})
    text = json.dumps(results, indent=2) + "\n"
    if cfg.output_dir:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        (Path(cfg.output_dir) / "tune.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedclust", description="Clustered federated learning experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, action="append", help="override seeds (repeatable)")
    run.add_argument("--algo", help="comma-separated subset of srfca,ifca,global,local")
    run.add_argument("--out", help="output directory")
    run.add_argument("--format", choices=("json", "csv"))
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="generate a synthetic federated dataset")
    gen.add_argument("--synthetic", required=True, help="e.g. m=100,n=100,d=1000,c=2,sigma=0.001")
    gen.add_argument("--seed", type=int, action="append")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    tune = sub.add_parser("tune", help="sweep the clustering threshold")
    tune.add_argument("--config", required=True)
    tune.add_argument("--lambda-grid", required=True, help="a:b:N, a:b:Nlog or comma list")
    tune.add_argument("--seed", type=int, action="append")
    tune.add_argument("--out")
    tune.set_defaults(func=cmd_tune)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"fedclust: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedClustError as exc:
        print(f"fedclust: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Subcommands:

* ``run``    -- execute the T-step continual protocol and emit
  ``curves.csv``, ``report.json`` and per-step checkpoints.
* ``ablate`` -- compare scoring variants on the same data and seeds.

Config files are flat ``key = value`` text; keys match the
ExperimentConfig field names (see README). Exit codes: 0 success,
2 config error, 3 data error, 4 numeric divergence.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from .datastreams import read_features, read_features_csv
from .engine import ExperimentConfig
from .errors import ConfigError, DataError, DivergenceError
from .experiment import ablate_experiment, run_experiment
from .presets import make_preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if ftype is int or ftype == "int":
            return int(raw)
        if ftype is float or ftype == "float":
            return float(raw)
        if ftype is bool or ftype == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ftype is str or ftype == "str":
            return raw
        # Optional[float] is the only remaining field type
        if raw.lower() in ("none", "null"):
            return None
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def parse_kv_file(path) -> dict:
    """Parse a flat ``key = value`` file with ``#`` comments."""
    entries = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        entries[key.strip()] = raw.strip()
    return entries


def load_config(path) -> ExperimentConfig:
    entries = parse_kv_file(path)
    kwargs = {}
    for key, raw in entries.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        kwargs[key] = _parse_value(key, raw)
    return ExperimentConfig(**kwargs)


def _load_feature_file(path):
    try:
        if str(path).endswith(".csv"):
            return read_features_csv(path)
        return read_features(path)
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc


def _resolve_data(args, config: ExperimentConfig):
    """Build (train, id_pool, ood_pool) from --features or --synth."""
    if args.features:
        if len(args.features) != 2:
            raise ConfigError(
                "--features takes exactly two paths: TRAIN and a labeled POOL"
            )
        train = _load_feature_file(args.features[0]).features_only()
        pool = _load_feature_file(args.features[1])
        if pool.labels is None:
            raise DataError(
                f"pool file {args.features[1]} must carry ID/OOD labels"
            )
        id_idx = (pool.labels == 0).nonzero()[0]
        ood_idx = (pool.labels == 1).nonzero()[0]
        if id_idx.size == 0 or ood_idx.size == 0:
            raise DataError("the labeled pool needs both ID and OOD samples")
        return train, pool.subset(id_idx).features_only(), pool.subset(
            ood_idx
        ).features_only()
    if args.synth:
        spec = args.synth
        if Path(spec).is_file():
            entries = parse_kv_file(spec)
            if "preset" not in entries:
                raise ConfigError(f"synth spec {spec} must set 'preset = <name>'")
            name = entries.pop("preset")
            overrides = {}
            for key, raw in entries.items():
                try:
                    overrides[key] = int(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"synth spec key {key!r} must be an integer"
                    ) from exc
            return make_preset(name, seed=config.seed, **overrides)
        return make_preset(spec, seed=config.seed)
    raise ConfigError("one of --features or --synth is required")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    train, id_pool, ood_pool = _resolve_data(args, config)
    report = run_experiment(
        config, train, id_pool, ood_pool, out_dir=args.out, trials=args.trials
    )
    print(
        f"wrote {args.out}/curves.csv and report.json "
        f"(AUF {report.auf_mean:.4f}, AUA {report.aua_mean:.4f}, "
        f"{args.trials} trial(s))"
    )
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    train, id_pool, ood_pool = _resolve_data(args, config)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants:
        raise ConfigError("--variants must name at least one variant")
    rows = ablate_experiment(
        config, train, id_pool, ood_pool, variants, trials=args.trials, out_dir=args.out
    )
    for row in rows:
        print(
            f"{row['variant']:>8s} ({row['family']}): "
            f"AUC {row['auc_mean']:.4f} +- {row['auc_std']:.4f}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="continual-ood",
        description="Continual out-of-distribution detection experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute the T-step continual protocol")
    run_p.add_argument("--config", required=True, help="key=value config file")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--trials", type=int, default=1)
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument(
        "--features",
        nargs="+",
        default=None,
        metavar="PATH",
        help="TRAIN and labeled POOL feature files (.oodf or .csv)",
    )
    run_p.add_argument(
        "--synth", default=None, help="synthetic preset name or spec file"
    )
    run_p.set_defaults(func=_cmd_run)

    ab_p = sub.add_parser("ablate", help="compare scoring variants")
    ab_p.add_argument("--config", required=True)
    ab_p.add_argument("--out", required=True)
    ab_p.add_argument("--variants", required=True, help="comma-separated names")
    ab_p.add_argument("--trials", type=int, default=1)
    ab_p.add_argument("--seed", type=int, default=None)
    ab_p.add_argument("--features", nargs="+", default=None, metavar="PATH")
    ab_p.add_argument("--synth", default=None)
    ab_p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

Three verbs:

    gradsched run       simulate one experiment, write results
    gradsched sweep     run a one-axis grid and print a comparison table
    gradsched validate  parse and echo the effective config, run nothing

Flags override config-file values. Exit codes: 0 success, 2 for config
errors (bad flags, bad file, bad values), 1 for runtime failures.
"""

import argparse
import json
import os
import sys

from .config import OUTPUT_ROOT_ENV, ConfigError, parse_config
from .engine import run_experiment
from .metrics import emit, improvement, stability_gain


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON experiment config")
    p.add_argument("--policy", help="gsgm | gsgm_svrg | async | async_lm | ssp:<t> | ssp_lm:<t> | asvrg | dvrg:<t>")
    p.add_argument("--learners", "-K", type=int, dest="num_learners", help="number of learners")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--outer-loops", type=int, dest="outer_loops")
    p.add_argument("--inner-loops", type=int, dest="inner_loops")
    p.add_argument("--noniid-fraction", type=float, dest="noniid_fraction",
                   help="label-sorted share of the training data, 1.0 = fully sorted")
    p.add_argument("--model", dest="model_kind", help="softmax_regression | mlp1")
    p.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    p.add_argument("--eta0", type=float, help="base learning rate")
    p.add_argument("--alpha", type=float, help="momentum coefficient")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--decay-epochs", dest="decay_epochs",
                   help="comma-separated epoch numbers, e.g. 50,80")
    p.add_argument("--decay-factor", type=float, dest="decay_factor")
    p.add_argument("--speed", dest="speed_kind", help="uniform | lognormal | straggler")
    p.add_argument("--speed-sigma", type=float, dest="speed_sigma")
    p.add_argument("--stragglers", help="comma-separated learner ids")
    p.add_argument("--slowdown", type=float)
    p.add_argument("--output-dir", dest="output_dir",
                   help=f"where to write results (relative paths land under ${OUTPUT_ROOT_ENV} when set)")


def _overrides_from_args(args) -> dict:
    simple = (
        "policy", "num_learners", "seed", "epochs", "outer_loops", "inner_loops",
        "noniid_fraction", "model_kind", "hidden_dim", "output_dir",
    )
    nested = {
        "eta0": "hyperparams.eta0",
        "alpha": "hyperparams.alpha",
        "batch_size": "hyperparams.batch_size",
        "decay_factor": "hyperparams.decay_factor",
        "speed_kind": "speed_model.kind",
        "speed_sigma": "speed_model.sigma",
        "slowdown": "speed_model.slowdown",
    }
    out = {}
    for name in simple:
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    for name, path in nested.items():
        v = getattr(args, name, None)
        if v is not None:
            out[path] = v
    if getattr(args, "decay_epochs", None) is not None:
        out["hyperparams.decay_epochs"] = _int_list(args.decay_epochs, "--decay-epochs")
    if getattr(args, "stragglers", None) is not None:
        out["speed_model.stragglers"] = _int_list(args.stragglers, "--stragglers")
    return out


def _int_list(text: str, flag: str) -> list:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise ConfigError(flag, f"expected comma-separated integers, got {text!r}") from None


def _cmd_run(args) -> int:
    cfg = parse_config(args.config, _overrides_from_args(args))
    result = run_experiment(cfg)
    if cfg.output_dir is not None:
        emit(result, "json", os.path.join(cfg.output_dir, "result.json"))
        emit(result, "csv", os.path.join(cfg.output_dir, "series.csv"))
    print(f"policy={cfg.policy} K={cfg.num_learners} seed={cfg.seed} "
          f"peak={result.peak_accuracy:.4f} stability={result.stability:.6f}")
    if cfg.output_dir is not None:
        print(f"results written to {cfg.output_dir}")
    return 0


_VARY_KEYS = {"policy": "policy", "K": "num_learners", "noniid_fraction": "noniid_fraction"}


def _parse_vary(text: str):
    key, sep, values = text.partition("=")
    if not sep or key not in _VARY_KEYS:
        raise ConfigError(
            "--vary", f"expected policy=...|K=...|noniid_fraction=..., got {text!r}"
        )
    parts = [v.strip() for v in values.split(",") if v.strip()]
    if len(parts) < 2:
        raise ConfigError("--vary", "need at least two values to sweep")
    if key == "K":
        parsed = [int(v) for v in parts]
    elif key == "noniid_fraction":
        parsed = [float(v) for v in parts]
    else:
        parsed = parts
    return key, parsed


def _cell_name(key: str, value) -> str:
    return f"{key}={value}".replace(":", "-").replace("/", "-")


def _cmd_sweep(args) -> int:
    base_overrides = _overrides_from_args(args)
    key, values = _parse_vary(args.vary)
    baseline = values[0] if args.baseline is None else args.baseline
    if key == "K":
        baseline = int(baseline)
    elif key == "noniid_fraction":
        baseline = float(baseline)
    if baseline not in values:
        raise ConfigError("--baseline", f"{baseline!r} is not among the swept values")

    results = {}
    for value in values:
        overrides = dict(base_overrides)
        overrides[_VARY_KEYS[key]] = value
        if args.output_dir is not None:
            overrides["output_dir"] = os.path.join(
                args.output_dir, _cell_name(key, value)
            )
        cfg = parse_config(args.config, overrides)
        results[value] = (cfg, run_experiment(cfg))
        if cfg.output_dir is not None:
            emit(results[value][1], "json", os.path.join(cfg.output_dir, "result.json"))
            emit(results[value][1], "csv", os.path.join(cfg.output_dir, "series.csv"))

    base_res = results[baseline][1]

    def gain_vs_base(res):
        # undefined when the baseline never wobbled at all
        if base_res.stability == 0.0:
            return None
        return stability_gain(res.stability, base_res.stability)

    header = f"{key:<20} {'peak':>8} {'stability':>11} {'vs_base_pts':>12} {'stab_gain_%':>12}"
    lines = [header, "-" * len(header)]
    for value in values:
        res = results[value][1]
        pts = improvement(res.peak_accuracy, base_res.peak_accuracy)
        gain = gain_vs_base(res)
        gain_cell = "n/a" if gain is None else f"{gain:+.1f}"
        lines.append(
            f"{str(value):<20} {res.peak_accuracy:>8.4f} {res.stability:>11.6f} "
            f"{pts:>+12.2f} {gain_cell:>12}"
        )
    table = "\n".join(lines)
    print(table)
    if args.output_dir is not None:
        os.makedirs(args.output_dir, exist_ok=True)
        path = os.path.join(args.output_dir, "comparison.csv")
        with open(path, "w", newline="") as f:
            f.write(f"{key},peak_accuracy,stability,improvement_pts,stability_gain_pct\n")
            for value in values:
                res = results[value][1]
                gain = gain_vs_base(res)
                f.write(
                    f"{value},{res.peak_accuracy!r},{res.stability!r},"
                    f"{improvement(res.peak_accuracy, base_res.peak_accuracy)!r},"
                    f"{'' if gain is None else repr(gain)}\n"
                )
        print(f"comparison written to {path}")
    return 0


def _cmd_validate(args) -> int:
    cfg = parse_config(args.config, _overrides_from_args(args))
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradsched",
        description="Simulate asynchronous distributed training policies on non-IID shards.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="simulate one experiment")
    _add_common_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a one-axis grid of experiments")
    _add_common_flags(p_sweep)
    p_sweep.add_argument(
        "--vary", required=True,
        help="axis to sweep: policy=a,b,... | K=2,5,10 | noniid_fraction=0.25,0.5",
    )
    p_sweep.add_argument(
        "--baseline", help="swept value to compare against (default: first)"
    )
    p_sweep.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="parse a config and echo it, run nothing")
    _add_common_flags(p_val)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage, 0 on --help; keep those codes.
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

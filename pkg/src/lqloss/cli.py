"""Command-line entry points.

Subcommands: ``synth`` (generate blob CSVs), ``inject`` (corrupt labels),
``train`` / ``acs-train`` (run experiments from a JSON config), ``sweep``
(noise-rate x loss grid), ``verify`` (numerical check suite), and
``gradcheck``. Configuration comes from a single JSON file plus repeatable
``--set dotted.key=value`` overrides.

Exit codes: 0 success, 1 check or assertion failure, 2 configuration
error, 3 I/O error.
"""

import argparse
import json
import os
import sys

from .data import load_csv, save_csv, synth_blobs
from .errors import ConfigError, DataError, SizeError
from .experiment import (atomic_write_json, atomic_write_text, parse_config,
                         run_experiment, sweep, sweep_to_csv)
from .noise import (NoiseModel, OutlierSpec, inject_noise, inject_open_set,
                    preset_circular_flip, preset_pair_flip)
from .verify import CHECKS, check_gradients, run_suite


def _set_override(doc: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(f"override must look like dotted.key=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = doc
    keys = path.split(".")
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value


def _load_config(args):
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
    for assignment in args.set or []:
        _set_override(doc, assignment)
    return parse_config(doc)


def cmd_synth(args) -> int:
    ds = synth_blobs(args.n, args.d, args.c, args.separation, args.seed)
    save_csv(args.out, ds)
    print(f"wrote {ds.n} x {ds.dim} samples, {ds.num_classes} classes -> {args.out}")
    return 0


def _noise_from_flags(args, c: int) -> NoiseModel:
    if args.kind == "uniform":
        return NoiseModel.uniform(args.eta)
    if args.kind == "circular":
        return preset_circular_flip(args.eta, c)
    if args.kind == "pair":
        if not args.pairs:
            raise ConfigError("pair noise needs --pairs like '9:1,3~5'")
        pairs = []
        for token in args.pairs.split(","):
            if "~" in token:
                s, t = token.split("~")
                pairs.append((int(s), int(t), True))
            elif ":" in token:
                s, t = token.split(":")
                pairs.append((int(s), int(t), False))
            else:
                raise ConfigError(f"bad pair token {token!r}; use src:dst or src~dst")
        return preset_pair_flip(pairs, args.eta, c)
    raise ConfigError(f"unsupported noise kind {args.kind!r}")


def cmd_inject(args) -> int:
    ds = load_csv(args.input)
    if not hasattr(ds, "labels"):
        raise DataError("input CSV already carries noise bookkeeping")
    if args.kind == "open-set":
        noisy = inject_open_set(ds, args.fraction, OutlierSpec(margin=args.margin), args.seed)
    else:
        noisy = inject_noise(ds, _noise_from_flags(args, ds.num_classes), args.seed)
    save_csv(args.out, noisy)
    frac = float(noisy.corrupted.mean())
    print(f"wrote {noisy.n} rows ({frac:.3f} corrupted) -> {args.out}")
    return 0


def _run_config(args, want_acs: bool) -> int:
    config = _load_config(args)
    if want_acs and config.acs is None:
        raise ConfigError("acs-train needs an 'acs' section in the config")
    if not want_acs and config.acs is not None:
        raise ConfigError("config has an 'acs' section; use acs-train")
    records, summary = run_experiment(config)
    print(json.dumps({k: v for k, v in summary.items() if k != "failures"} |
                     {"failures": summary["failures"]}, sort_keys=True, indent=2))
    return 0 if records else 1


def cmd_train(args) -> int:
    return _run_config(args, want_acs=False)


def cmd_acs_train(args) -> int:
    return _run_config(args, want_acs=True)


def cmd_sweep(args) -> int:
    config = _load_config(args)
    q_grid = [float(q) for q in args.q_grid.split(",")] if args.q_grid else []
    eta_grid = [float(e) for e in args.eta_grid.split(",")]
    losses = args.losses.split(",")
    table = sweep(config, q_grid, eta_grid, losses)
    csv_text = sweep_to_csv(table)
    if config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
        atomic_write_text(os.path.join(config.output_dir, "sweep.csv"), csv_text)
        atomic_write_json(os.path.join(config.output_dir, "sweep.json"), table)
    sys.stdout.write(csv_text)
    failed = any("failed" in row["cells"][col] for row in table["rows"]
                 for col in table["columns"])
    return 1 if failed else 0


def cmd_verify(args) -> int:
    selectors = args.suite.split(",") if args.suite else None
    trials = None
    if args.trials is not None:
        trials = {name: args.trials for name in (selectors or CHECKS)}
    passed, reports = run_suite(selectors, seed=args.seed, out_dir=args.out, trials=trials)
    for report in reports:
        status = "PASS" if report["passed"] else "FAIL"
        print(f"{status} {report['check']}")
    return 0 if passed else 1


def cmd_gradcheck(args) -> int:
    report = check_gradients(seed=args.seed, trials=args.cases)
    for kind, entry in report["by_kind"].items():
        status = "PASS" if entry["passed"] else "FAIL"
        print(f"{status} {kind}: logit {entry['max_logit_rel_err']:.3e} "
              f"param {entry['max_param_rel_err']:.3e}")
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lqloss",
                                     description="Noise-robust loss experiments and verification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic blob dataset CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inject", help="corrupt the labels of a clean CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["uniform", "circular", "pair", "open-set"],
                   default="uniform")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--pairs", help="pair spec like '9:1,3~5' (~ means symmetric)")
    p.add_argument("--fraction", type=float, default=0.0, help="open-set fraction")
    p.add_argument("--margin", type=float, default=6.0, help="open-set outlier margin")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inject)

    for name, func, help_text in (
            ("train", cmd_train, "train per a JSON experiment config"),
            ("acs-train", cmd_acs_train, "alternating prune-train per a JSON config")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set train.epochs=20")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="noise-rate x loss-variant grid")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--q-grid", help="comma list; 0 dispatches to cce")
    p.add_argument("--eta-grid", required=True, help="comma list of noise rates")
    p.add_argument("--losses", default="cce,lq", help="comma list of loss kinds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the numerical verification suite")
    p.add_argument("--suite", help=f"comma list from: {','.join(CHECKS)}")
    p.add_argument("--seed", type=int, default=20240913)
    p.add_argument("--out", help="directory for per-check JSON reports")
    p.add_argument("--trials", type=int, help="override sample/instance counts")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p.add_argument("--seed", type=int, default=20240913)
    p.add_argument("--cases", type=int, default=100)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, SizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

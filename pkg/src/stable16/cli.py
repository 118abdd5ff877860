"""Command-line harness: train, sweep, check-fp16, analyze, make-data.

Exit codes: 0 success (a numerical collapse is a recorded outcome, not a
failure), 1 conformance mismatches, 2 config or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import conformance, data, optim
from . import experiment as E
from .stability import StabilityReport

EPSILON_LADDER = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# ------------------------------------------------------------ arg plumbing

def _parse_dims(text: str) -> tuple:
    try:
        dims = tuple(int(d) for d in text.replace(" ", "").split(",") if d)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}; want e.g. 784,256,256,10")
    if len(dims) < 2:
        raise argparse.ArgumentTypeError("dims needs at least input and output sizes")
    return dims


def _parse_floats(text: str) -> list:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}")


def _parse_guards(text: str) -> list:
    out = []
    for tok in text.replace(" ", "").split(","):
        if not tok:
            continue
        if tok in ("on", "true", "1"):
            out.append(True)
        elif tok in ("off", "false", "0"):
            out.append(False)
        else:
            raise argparse.ArgumentTypeError(f"guard values are on/off, got {tok!r}")
    return out


def _parse_names(text: str) -> list:
    return [t for t in text.replace(" ", "").split(",") if t]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run config (flags > --config file > --preset > defaults)")
    g.add_argument("--precision", choices=E.PRECISIONS)
    g.add_argument("--optimizer", choices=sorted(optim.ALGOS))
    g.add_argument("--guard", action=argparse.BooleanOptionalAction,
                   help="replace sqrt(v)+eps with sqrt(max(v, floor))")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--beta1", type=float)
    g.add_argument("--beta2", type=float,
                   help="adam second-moment beta, and rmsprop's smoothing beta")
    g.add_argument("--loss-scale", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--train-limit", type=int,
                   help="train on the first N examples (0 = full split)")
    g.add_argument("--dims", type=_parse_dims, help="layer sizes, e.g. 784,256,256,10")
    g.add_argument("--out-path", help="CSV destination; report JSON lands beside it")
    g.add_argument("--guard-floor", type=float,
                   help="guard floor; defaults to the run's epsilon")
    g.add_argument("--config", help="JSON file of RunConfig fields")
    g.add_argument("--preset", choices=("desk", "paper-dnn"),
                   help="desk: [784,256,256,10] x 10k x 5 epochs, eta 0.1; "
                        "paper-dnn: [784,2048,2048,10]")
    g.add_argument("--data-dir", help=f"IDX directory (or ${data.DATA_ENV_VAR})")


_CONFIG_FIELDS = ("precision", "optimizer", "guard", "epsilon", "eta", "beta1",
                  "beta2", "loss_scale", "batch_size", "epochs", "seed",
                  "train_limit", "dims", "out_path", "guard_floor")


def assemble_config(args) -> E.RunConfig:
    merged = {}
    if getattr(args, "preset", None) == "desk":
        merged.update(E.desk_config().to_dict())
    elif getattr(args, "preset", None) == "paper-dnn":
        merged["dims"] = list(E.FULL_DIMS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{args.config}: invalid JSON ({exc})")
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        merged.update(loaded)
    for name in _CONFIG_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    cfg = E.RunConfig.from_dict(merged)
    E.validate_config(cfg)
    return cfg


def _load_corpus(args):
    d = data.resolve_data_dir(args.data_dir)
    if d is None:
        raise ValueError(
            f"no data directory: pass --data-dir or set ${data.DATA_ENV_VAR} "
            "(stable16 make-data generates a synthetic corpus)")
    return data.load_split(d, "train"), data.load_split(d, "test")


# -------------------------------------------------------------- subcommands

def cmd_train(args) -> int:
    cfg = assemble_config(args)
    if not cfg.out_path:
        cfg = replace(cfg, out_path="run.csv")
    train, test = _load_corpus(args)
    res = E.run_training(cfg, train, test,
                         collect_grad_series=bool(args.grad_series))
    for r in res.records:
        print(f"epoch {r.epoch}: loss {E._fmt6(r.train_loss)} "
              f"acc {E._fmt6(r.test_accuracy)} nan {r.nan_count} "
              f"inf {r.inf_count} ({r.wall_time_s:.1f}s)")
    if args.grad_series:
        E.write_grad_series(res.grad_series, args.grad_series)
        print(f"wrote gradient series to {args.grad_series}")
    rep = res.report
    if rep.first_inf_step or rep.first_nan_step:
        onset = []
        if rep.first_inf_step:
            onset.append(f"first inf at step {rep.first_inf_step}")
        if rep.first_nan_step:
            onset.append(f"first NaN at step {rep.first_nan_step}")
        print("numerical collapse recorded: " + ", ".join(onset))
    else:
        print("no instability events")
    print(f"wrote {cfg.out_path} and {E.report_path_for(cfg.out_path)}")
    return 0


def cmd_sweep(args) -> int:
    base = assemble_config(args)
    out = base.out_path or "sweep.csv"
    train, test = _load_corpus(args)
    precisions = args.precisions or [base.precision]
    recs, results = E.run_sweep(
        replace(base, out_path=""), args.epsilons, args.guards,
        precisions, train, test, optimizers=args.optimizers,
        out_path=out)
    for res in sorted(results, key=lambda r: E.record_sort_key(r.records[0])):
        c, last, rep = res.config, res.records[-1], res.report
        tail = (f"first NaN step {rep.first_nan_step}"
                if rep.first_nan_step else "clean")
        print(f"{c.precision} {c.optimizer:8s} guard={'on ' if c.guard else 'off'} "
              f"eps={c.epsilon:<6g} acc {last.test_accuracy:.3f}  {tail}")
    print(f"wrote {out} and {E.reports_path_for(out)}")
    return 0


def cmd_check_fp16(args) -> int:
    reports = conformance.run_suite(args.binary_cases, args.seed)
    failed = 0
    for r in reports:
        status = "ok" if r.ok else "FAIL"
        print(f"{r.op:10s} {r.cases:8d} cases  {r.mismatches:6d} mismatches  {status}")
        for ex in r.examples:
            *ins, got, want = ex
            shown = ", ".join(_fmt_operand(v) for v in ins)
            print(f"    {r.op}({shown}) -> got {_fmt_operand(got)} "
                  f"want {_fmt_operand(want)}")
        failed += r.mismatches
    print("conformance: " + ("all ops match the oracle" if failed == 0
                             else f"{failed} mismatches"))
    return 0 if failed == 0 else 1


def _fmt_operand(v) -> str:
    if isinstance(v, (int, np.integer)):
        return f"0x{int(v):04x}"
    return str(v)


def cmd_analyze(args) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError:
        raise ValueError(f"{args.report}: not a text file (want report JSON)")
    try:
        blob = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{args.report}: invalid JSON ({exc})")
    if isinstance(blob, list):  # sweep bundle: [{config, report}, ...]
        for entry in blob:
            try:
                rep = StabilityReport.from_json(json.dumps(entry["report"]))
            except (TypeError, KeyError) as exc:
                raise ValueError(f"{args.report}: malformed sweep bundle ({exc})")
            _print_report(rep)
    else:
        rep = StabilityReport.from_json(text)
        _print_report(rep)
    return 0


def _print_report(rep: StabilityReport) -> None:
    print(f"{rep.precision} {rep.optimizer} guard={'on' if rep.guard else 'off'} "
          f"eps={rep.epsilon:g}")
    clean = (rep.first_inf_step is None and rep.first_nan_step is None
             and rep.first_violation is None and rep.overflow_to_inf == 0
             and rep.nan_created == 0)
    if clean:
        print("  no instability events")
        return
    if rep.first_inf_step is not None:
        print(f"  first inf: step {rep.first_inf_step}")
    if rep.first_nan_step is not None:
        print(f"  first NaN: step {rep.first_nan_step}")
    if rep.first_inf_step is not None and rep.first_nan_step is not None \
            and rep.first_inf_step < rep.first_nan_step:
        print("  order: overflow to inf first, NaN follows from inf arithmetic")
    print(f"  events: {rep.overflow_to_inf} inf, {rep.nan_created} NaN, "
          f"{rep.underflow_to_zero} underflow-to-zero")
    v = rep.first_violation
    if v is not None:
        print(f"  first predicate failure: {v['assumption']} at step {v['step']} "
              f"({v['reason']})")
        detail = v.get("detail") or {}
        if detail:
            shown = " ".join(f"{k}={detail[k]}" for k in sorted(detail))
            print(f"    {shown}")


def cmd_make_data(args) -> int:
    data.generate_synthetic(args.out, train_n=args.train_n,
                            test_n=args.test_n, seed=args.seed)
    print(f"wrote synthetic corpus ({args.train_n} train / {args.test_n} test) "
          f"to {args.out}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stable16",
        description="Pure 16-bit training runs with guarded optimizers, "
                    "plus binary16 conformance and stability analysis.")
    sub = p.add_subparsers(required=True, metavar="command")

    t = sub.add_parser("train", help="one training run; writes CSV + report")
    _add_config_flags(t)
    t.add_argument("--grad-series", metavar="PATH",
                   help="also write per-step gradient extrema CSV")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="Cartesian sweep; merged sorted CSV")
    _add_config_flags(s)
    s.add_argument("--epsilons", type=_parse_floats,
                   default=list(EPSILON_LADDER),
                   help="comma list (default 1e-1..1e-7)")
    s.add_argument("--guards", type=_parse_guards, default=[False, True],
                   help="comma list of on/off (default off,on)")
    s.add_argument("--precisions", type=_parse_names, default=None,
                   help="comma list (default: the configured precision)")
    s.add_argument("--optimizers", type=_parse_names, default=None,
                   help="comma list (default: the configured optimizer)")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check-fp16",
                       help="binary16 conformance vs the round-once oracle")
    c.add_argument("--binary-cases", type=int, default=1_000_000,
                   help="random cases per binary op (default 1e6)")
    c.add_argument("--seed", type=int, default=2024)
    c.set_defaults(func=cmd_check_fp16)

    a = sub.add_parser("analyze", help="summarize a stability report JSON")
    a.add_argument("report", help="*.report.json or sweep *.reports.json")
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("make-data", help="generate the synthetic digit corpus")
    m.add_argument("--out", required=True, help="destination directory")
    m.add_argument("--train-n", type=int, default=12000)
    m.add_argument("--test-n", type=int, default=2000)
    m.add_argument("--seed", type=int, default=20240801)
    m.set_defaults(func=cmd_make_data)
    return p


if __name__ == "__main__":
    sys.exit(main())

"""Training runs, sweeps, and their CSV/report outputs.

A run is fully determined by its RunConfig plus the dataset bytes: model
init, batch order, and every arithmetic op are seeded and round-once, so a
rerun reproduces the CSV bit for bit except the wall_time_s column.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import data, nn, optim, rng
from . import tensor as T
from .optim import HyperParams
from .stability import RunMonitor, StabilityReport
from .tensor import Kind

PRECISIONS = ("fp16", "fp32", "fp64")

CSV_COLUMNS = (
    "precision", "optimizer", "guard", "epsilon", "epoch",
    "train_loss", "test_accuracy", "nan_count", "inf_count",
    "grad_abs_max", "grad_abs_min_nonzero", "wall_time_s",
)

# The full-scale 2048-wide net (the paper-dnn preset; slow in software F16)
# vs the desk-scale recipe that reproduces the same epsilon collapse
# boundary in minutes on a laptop.
FULL_DIMS = (784, 2048, 2048, 10)
DESK_DIMS = (784, 256, 256, 10)
DESK_TRAIN_LIMIT = 10000
DESK_EPOCHS = 5
# At eta=0.1 the first-step kick eta*|g|/eps from a flushed second moment
# either overflows outright (collapse) or stays small enough to train
# through, cleanly on either side of the epsilon boundary at this scale.
DESK_ETA = 0.1
DESK_SEED = 1234


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run depends on. beta2 None resolves per
    optimizer (0.999 for adam, 0.9 for rmsprop's single smoothing beta);
    train_limit 0 means the full split; guard_floor None floors at epsilon."""
    precision: str = "fp16"
    optimizer: str = "adam"
    guard: bool = False
    epsilon: float = 1e-7
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = None
    loss_scale: float = 1.0
    batch_size: int = 512
    epochs: int = 5
    seed: int = 1234
    train_limit: int = 0
    dims: tuple = FULL_DIMS
    out_path: str = ""
    guard_floor: float = None

    @property
    def kind(self) -> Kind:
        return Kind.from_name(self.precision)

    def resolved_beta2(self) -> float:
        if self.beta2 is not None:
            return float(self.beta2)
        return 0.9 if self.optimizer == "rmsprop" else 0.999

    def hyperparams(self) -> HyperParams:
        return HyperParams(
            eta=self.eta, beta1=self.beta1, beta2=self.resolved_beta2(),
            epsilon=self.epsilon, loss_scale=self.loss_scale,
            guard=self.guard, guard_floor=self.guard_floor,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = [int(x) for x in self.dims]
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        names = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        if "dims" in d:
            d["dims"] = tuple(int(x) for x in d["dims"])
        return RunConfig(**d)


def desk_config(**overrides) -> RunConfig:
    """The validated desk-scale recipe: the full collapse/rescue grid in minutes."""
    base = dict(dims=DESK_DIMS, train_limit=DESK_TRAIN_LIMIT,
                epochs=DESK_EPOCHS, eta=DESK_ETA, batch_size=512,
                seed=DESK_SEED)
    base.update(overrides)
    return RunConfig(**base)


def validate_config(cfg: RunConfig) -> None:
    if cfg.precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}, got {cfg.precision!r}")
    if cfg.optimizer not in optim.ALGOS:
        raise ValueError(f"optimizer must be one of {optim.ALGOS}, got {cfg.optimizer!r}")
    if not isinstance(cfg.batch_size, int) or cfg.batch_size < 1:
        raise ValueError("batch_size must be a positive integer")
    if not isinstance(cfg.epochs, int) or cfg.epochs < 1:
        raise ValueError("epochs must be a positive integer")
    if not isinstance(cfg.train_limit, int) or cfg.train_limit < 0:
        raise ValueError("train_limit must be a non-negative integer (0 = full split)")
    if len(cfg.dims) < 2 or any(int(d) != d or d < 1 for d in cfg.dims):
        raise ValueError(f"dims must be >=2 positive layer sizes, got {cfg.dims!r}")
    cfg.hyperparams()  # numeric ranges validated by HyperParams


@dataclass(frozen=True)
class RunRecord:
    """One CSV row: per-epoch metrics of one run."""
    precision: str
    optimizer: str
    guard: bool
    epsilon: float
    epoch: int
    train_loss: float
    test_accuracy: float
    nan_count: int
    inf_count: int
    grad_abs_max: float
    grad_abs_min_nonzero: float
    wall_time_s: float

    def csv_row(self) -> list:
        return [_fmt6(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt6(x) -> str:
    # floats carry 6 significant digits; absent extrema serialize as nan
    if x is None:
        return "nan"
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return "on" if x else "off"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".6g")


@dataclass
class RunResult:
    config: RunConfig
    records: list
    report: StabilityReport
    model: nn.MlpModel
    grad_series: list = None


def run_training(cfg: RunConfig, train: data.Dataset, test: data.Dataset,
                 collect_grad_series: bool = False) -> RunResult:
    """Train per the config. Numerical collapse is a recorded outcome, not
    an exception: the loop always completes cfg.epochs epochs and the CSV
    rows plus StabilityReport tell the story.

    With collect_grad_series the result carries one
    (step, epoch, train_loss, grad_abs_max, grad_abs_min_nonzero) tuple per
    optimizer step, for external plotting of gradient-range curves.
    """
    validate_config(cfg)
    if train.x.shape[0] != cfg.dims[0] or test.x.shape[0] != cfg.dims[0]:
        raise ValueError(
            f"model input width {cfg.dims[0]} != data rows "
            f"{train.x.shape[0]}/{test.x.shape[0]}")
    if cfg.train_limit:
        train = data.subset(train, cfg.train_limit)
    kind = cfg.kind
    hp = cfg.hyperparams()
    model = nn.init_mlp(cfg.dims, kind, cfg.seed)
    state = optim.init_state(model.params(), cfg.optimizer)
    monitor = RunMonitor(cfg.optimizer, hp, kind)
    test_x = T.make(test.x.data, kind)  # round test pixels to the run kind once

    records = []
    series = [] if collect_grad_series else None
    step_no = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        losses = []
        shuffle_seed = rng.derive_seed(cfg.seed, epoch)
        for bx, by in data.batches(train, cfg.batch_size, shuffle_seed):
            x = T.make(bx.data, kind)  # batch assembly rounds F64 pixels once
            if hp.loss_scale > 1:
                loss, grads = optim.scaled_backward(
                    hp.loss_scale,
                    lambda s: nn.loss_and_backward(model, x, by, loss_scale=s))
            else:
                loss, grads = nn.loss_and_backward(model, x, by)
            params = model.params()
            new_params, new_state = optim.step(
                cfg.optimizer, params, grads.params(), state, hp)
            step_no += 1
            monitor.observe_step(step_no, params, grads, state,
                                 new_params, new_state)
            model = model.replace_params(new_params)
            state = new_state
            losses.append(loss)
            if series is not None:
                series.append((step_no, epoch, loss,
                               grads.abs_max, grads.abs_min_nonzero))
        acc = nn.evaluate(model, test_x, test.labels, batch_size=cfg.batch_size)
        mrow = monitor.end_epoch(epoch, model.params())
        with np.errstate(all="ignore"):
            train_loss = float(np.mean(losses))
        records.append(RunRecord(
            precision=cfg.precision, optimizer=cfg.optimizer,
            guard=cfg.guard, epsilon=cfg.epsilon, epoch=epoch,
            train_loss=train_loss, test_accuracy=acc,
            nan_count=mrow["nan_count"], inf_count=mrow["inf_count"],
            grad_abs_max=mrow["grad_abs_max"],
            grad_abs_min_nonzero=mrow["grad_abs_min_nonzero"],
            wall_time_s=time.perf_counter() - t0))

    result = RunResult(cfg, records, monitor.report(), model, series)
    if cfg.out_path:
        write_csv(records, cfg.out_path)
        write_report(result.report, report_path_for(cfg.out_path))
    return result


# ------------------------------------------------------------------ sweeps

def record_sort_key(r: RunRecord):
    return (r.precision, r.optimizer, r.guard, r.epsilon, r.epoch)


def sweep_configs(base: RunConfig, epsilons, guards, precisions,
                  optimizers=None) -> list:
    """Cartesian product over the base config. Every combination is
    validated before any run launches, so a bad corner aborts the sweep
    up front rather than hours in."""
    opts = list(optimizers) if optimizers else [base.optimizer]
    combos = [
        replace(base, precision=str(prec), optimizer=str(opt),
                guard=bool(guard), epsilon=float(eps), out_path="")
        for prec, opt, guard, eps
        in itertools.product(precisions, opts, guards, epsilons)
    ]
    for c in combos:
        validate_config(c)
    return combos


def run_sweep(base: RunConfig, epsilons, guards, precisions,
              train: data.Dataset, test: data.Dataset,
              optimizers=None, out_path: str = "") -> tuple:
    """Run the full product sequentially; sub-runs are independent, so the
    merged rows are sorted by (precision, optimizer, guard, epsilon, epoch)
    rather than completion order. Returns (records, results)."""
    combos = sweep_configs(base, epsilons, guards, precisions, optimizers)
    results = [run_training(c, train, test) for c in combos]
    records = sorted((rec for res in results for rec in res.records),
                     key=record_sort_key)
    if out_path:
        write_csv(records, out_path)
        ordered = sorted(results, key=lambda r: record_sort_key(r.records[0]))
        write_reports([(res.config, res.report) for res in ordered],
                      reports_path_for(out_path))
    return records, results


# ----------------------------------------------------------------- outputs

def write_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.csv_row())


def write_grad_series(series, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step", "epoch", "train_loss",
                    "grad_abs_max", "grad_abs_min_nonzero"))
        for row in series:
            w.writerow([_fmt6(v) for v in row])


def report_path_for(csv_path) -> str:
    root, _ = os.path.splitext(str(csv_path))
    return root + ".report.json"


def reports_path_for(csv_path) -> str:
    root, _ = os.path.splitext(str(csv_path))
    return root + ".reports.json"


def write_report(report: StabilityReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")


def write_reports(pairs, path) -> None:
    """Sweep bundle: [{config: {...}, report: {...}}, ...] in sorted order."""
    blob = [{"config": cfg.to_dict(), "report": asdict(rep)}
            for cfg, rep in pairs]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")

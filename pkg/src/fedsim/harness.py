"""End-to-end experiment execution and metrics I/O.

An experiment is: build the synthetic population, withhold a pooled IID
eval split, train (federated rounds or centralized steps), and record a
metrics row at round 0, every ``eval_every`` rounds, and at the end.
The whole pipeline is a pure function of the config, so re-running a
config reproduces the metrics CSV byte for byte.
"""

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .cost import BYTES_PER_TERABYTE
from .data import generate_population, pooled_batch, split_eval
from .fedavg import CentralizedTrainer, FedAvgTrainer
from .models import Batch, ModelSpec, accuracy, loss
from .optim import fvn_std_at, lr_at

__all__ = [
    "MetricsRow",
    "run_experiment",
    "emit_csv",
    "read_metrics_csv",
    "ExperimentSummary",
    "compare_experiments",
    "format_comparison",
    "write_comparison_csv",
    "CSV_HEADER",
]

CSV_HEADER = "round,train_loss,eval_loss,eval_accuracy,cfmq_terabytes,fvn_std,lr_server,clients_selected"


@dataclass
class MetricsRow:
    round: int
    train_loss: float
    eval_loss: float
    eval_accuracy: float
    cfmq_terabytes: float
    fvn_std: float
    lr_server: float
    clients_selected: int


def _quality(spec: ModelSpec, w: np.ndarray, train: Batch, eval_set: Batch) -> tuple[float, float, float]:
    train_loss = loss(spec, w, train)
    eval_loss = loss(spec, w, eval_set)
    acc = accuracy(spec, w, eval_set) if spec.kind != "linear" else float("nan")
    return train_loss, eval_loss, acc


def build_population(config: ExperimentConfig):
    return generate_population(
        config.num_clients,
        config.input_dim,
        config.num_classes,
        config.count_distribution(),
        config.cluster_spread,
        config.seed,
        center_scale=config.center_scale,
    )


def run_experiment(config: ExperimentConfig, max_workers: int | None = None) -> list[MetricsRow]:
    """Execute one config and return its full metrics trace."""
    spec = config.spec()
    population = build_population(config)
    train_pop, eval_set = split_eval(population, config.eval_fraction, config.seed)
    train_pool = pooled_batch(train_pop)
    constants = config.cost_constants()

    rows: list[MetricsRow] = []

    def eval_points(total: int):
        for r in range(1, total + 1):
            if r % config.eval_every == 0 or r == total:
                yield r

    if config.mode == "federated":
        trainer = FedAvgTrainer(
            spec, train_pop, config.sampling_policy(),
            local_epochs=config.local_epochs,
            batch_size=config.batch_size,
            client_lr=config.client_lr,
            server_schedule=config.server_lr_schedule(),
            constants=constants,
            seed=config.seed,
            server_opt=config.server_opt,
            adam_beta1=config.adam_beta1,
            adam_beta2=config.adam_beta2,
            adam_epsilon=config.adam_epsilon,
            fvn=config.fvn(),
            weighting=config.aggregate_weighting,
            shard_size=config.shard_size,
            max_workers=max_workers,
        )
        rows.append(_initial_row(config, spec, trainer.weights, train_pool, eval_set))
        marks = set(eval_points(config.rounds))
        for r in range(config.rounds):
            report = trainer.run_round(r)
            if (r + 1) in marks:
                tl, el, acc = _quality(spec, trainer.weights, train_pool, eval_set)
                rows.append(MetricsRow(
                    round=r + 1,
                    train_loss=tl,
                    eval_loss=el,
                    eval_accuracy=acc,
                    cfmq_terabytes=report.cfmq_cumulative / BYTES_PER_TERABYTE,
                    fvn_std=report.fvn_std,
                    lr_server=report.lr_server,
                    clients_selected=len(report.selected),
                ))
        return rows

    # centralized control arm: "rounds" counts optimizer steps, and the
    # federated cost model does not apply (cost stays zero)
    trainer = CentralizedTrainer(
        spec, train_pool,
        batch_size=config.batch_size,
        schedule=config.server_lr_schedule(),
        seed=config.seed,
        optimizer=config.server_opt,
        adam_beta1=config.adam_beta1,
        adam_beta2=config.adam_beta2,
        adam_epsilon=config.adam_epsilon,
        vn=config.fvn(),
    )
    rows.append(_initial_row(config, spec, trainer.weights, train_pool, eval_set))
    marks = set(eval_points(config.rounds))
    for s in range(config.rounds):
        trainer.step(s)
        if (s + 1) in marks:
            tl, el, acc = _quality(spec, trainer.weights, train_pool, eval_set)
            rows.append(MetricsRow(
                round=s + 1,
                train_loss=tl,
                eval_loss=el,
                eval_accuracy=acc,
                cfmq_terabytes=0.0,
                fvn_std=fvn_std_at(config.fvn(), s),
                lr_server=lr_at(config.server_lr_schedule(), s),
                clients_selected=0,
            ))
    return rows


def _initial_row(config, spec, weights, train_pool, eval_set) -> MetricsRow:
    tl, el, acc = _quality(spec, weights, train_pool, eval_set)
    return MetricsRow(
        round=0,
        train_loss=tl,
        eval_loss=el,
        eval_accuracy=acc,
        cfmq_terabytes=0.0,
        fvn_std=fvn_std_at(config.fvn(), 0),
        lr_server=lr_at(config.server_lr_schedule(), 0),
        clients_selected=0,
    )


def _fmt(v: float) -> str:
    return format(v, ".17g")


def emit_csv(rows: list[MetricsRow], path) -> None:
    """Write the metrics trace: fixed header, LF endings, 17 significant
    digits for reals, so identical rows produce identical bytes."""
    if not rows:
        raise ValueError("refusing to emit an empty metrics CSV")
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            str(r.round),
            _fmt(r.train_loss),
            _fmt(r.eval_loss),
            _fmt(r.eval_accuracy),
            _fmt(r.cfmq_terabytes),
            _fmt(r.fvn_std),
            _fmt(r.lr_server),
            str(r.clients_selected),
        ]))
    payload = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(payload)


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty metrics file") from None
        if header != CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = []
        for rec in reader:
            if len(rec) != 8:
                raise ValueError(f"{path}: malformed row {rec!r}")
            rows.append(MetricsRow(
                round=int(rec[0]),
                train_loss=float(rec[1]),
                eval_loss=float(rec[2]),
                eval_accuracy=float(rec[3]),
                cfmq_terabytes=float(rec[4]),
                fvn_std=float(rec[5]),
                lr_server=float(rec[6]),
                clients_selected=int(rec[7]),
            ))
    if not rows:
        raise ValueError(f"{path}: metrics file has a header but no rows")
    return rows


@dataclass
class ExperimentSummary:
    experiment: str
    rounds: int
    final_eval_loss: float
    final_eval_accuracy: float
    cfmq_terabytes: float


def compare_experiments(paths) -> list[ExperimentSummary]:
    """Final quality and total cost per metrics CSV, cheapest first."""
    paths = list(paths)
    if not paths:
        raise ValueError("no metrics files to compare")
    summaries = []
    for p in paths:
        rows = read_metrics_csv(p)
        last = rows[-1]
        name = os.path.splitext(os.path.basename(str(p)))[0]
        summaries.append(ExperimentSummary(
            experiment=name,
            rounds=last.round,
            final_eval_loss=last.eval_loss,
            final_eval_accuracy=last.eval_accuracy,
            cfmq_terabytes=last.cfmq_terabytes,
        ))
    summaries.sort(key=lambda s: (s.cfmq_terabytes, s.experiment))
    return summaries


def format_comparison(summaries: list[ExperimentSummary]) -> str:
    """Aligned text table of a comparison."""
    header = ("experiment", "rounds", "eval_loss", "eval_acc", "cfmq_tb")
    rows = [header] + [
        (s.experiment, str(s.rounds), f"{s.final_eval_loss:.6g}",
         f"{s.final_eval_accuracy:.4g}", f"{s.cfmq_terabytes:.6g}")
        for s in summaries
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    out = io.StringIO()
    for r in rows:
        out.write("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() + "\n")
    return out.getvalue()


def write_comparison_csv(summaries: list[ExperimentSummary], path) -> None:
    lines = ["experiment,rounds,final_eval_loss,final_eval_accuracy,cfmq_terabytes"]
    for s in summaries:
        lines.append(",".join([
            s.experiment, str(s.rounds), _fmt(s.final_eval_loss),
            _fmt(s.final_eval_accuracy), _fmt(s.cfmq_terabytes),
        ]))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")

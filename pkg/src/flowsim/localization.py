"""End-to-end localization pipelines for the two neural solutions.

Training data comes from per-region simulation runs with the event pinned
at each region's centroid: every event-positive report contributes one
(elapsed time, region) sample. Solution 1 classifies 24 loops (no heart
class); Solution 2 all 25 regions. Inference aggregates per-report class
probabilities by summation and maps the winning region to its centroid.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng
from .engine import ReportRecord
from .neural import (
    AdamState,
    ConvergenceReport,
    MlpModel,
    adam_step,
    lbfgs_fit,
    loss_and_grad,
    solution1_model,
    solution2_model,
)
from .topology import VascularTopology, region_centroid

log = logging.getLogger(__name__)


@dataclass
class TrainingSet:
    samples: list[tuple[float, int]]      # (elapsed s, class index)
    class_names: list[str]                # index -> region id
    normalization: tuple[float, float]    # (mean, std) of elapsed
    solution: int

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.array([[e] for e, _ in self.samples])
        y = np.array([c for _, c in self.samples], dtype=np.int64)
        return x, y


@dataclass
class LocalizationEstimate:
    region: str | None
    point: tuple[float, float, float] | None
    n_reports_used: int
    available: bool


class TrainingDataError(ValueError):
    """A region contributed no positive samples and the config forbids gaps."""


def class_order(topo: VascularTopology, solution: int) -> list[str]:
    """Deterministic label order: topology file region order, heart dropped for Solution 1."""
    names = list(topo.regions)
    if solution == 1:
        names = [n for n in names if n != topo.heart_region]
    return names


def build_training_set(
    runs: dict[str, list[ReportRecord]],
    topo: VascularTopology,
    solution: int,
    max_per_class: int | None = 1000,
    seed: int = 0,
    allow_missing: bool = True,
) -> TrainingSet:
    """Collect (elapsed, region) samples from event-positive records.

    `runs` maps each region id to the raw records of its centroid-event run.
    Solution 1 drops the heart run entirely. Per-class subsampling (when a
    cap is set) is deterministic in the seed.
    """
    if solution not in (1, 2):
        raise ValueError("solution must be 1 or 2")
    names = class_order(topo, solution)
    missing = [r for r in names if r not in runs]
    if missing:
        raise ValueError(f"missing training runs for regions: {missing}")
    rng = _rng.stream(seed, "ml_init:subsample")
    samples: list[tuple[float, int]] = []
    for idx, region in enumerate(names):
        positives = [r.elapsed for r in runs[region] if r.event_bit == 1]
        if not positives:
            msg = f"region '{region}' produced no event-positive records"
            if not allow_missing:
                raise TrainingDataError(msg)
            log.warning("%s; training proceeds without it", msg)
            continue
        if max_per_class is not None and len(positives) > max_per_class:
            chosen = rng.choice(len(positives), size=max_per_class, replace=False)
            positives = [positives[i] for i in sorted(chosen)]
        samples.extend((e, idx) for e in positives)
    if not samples:
        raise TrainingDataError("no event-positive records in any training run")
    values = np.array([e for e, _ in samples])
    std = float(values.std())
    normalization = (float(values.mean()), std if std > 0 else 1.0)
    return TrainingSet(samples=samples, class_names=names,
                       normalization=normalization, solution=solution)


@dataclass
class TrainingSummary:
    solution: int
    n_samples: int
    class_count: int
    final_loss: float
    train_accuracy: float
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def train(
    ts: TrainingSet,
    solution: int | None = None,
    seed: int = 0,
    epochs: int = 40,
    batch_size: int = 256,
    lr: float = 1e-3,
    lbfgs_max_iter: int = 200,
) -> tuple[MlpModel, TrainingSummary]:
    """Train the chosen solution on a TrainingSet; deterministic in the seed."""
    solution = ts.solution if solution is None else solution
    if not ts.samples:
        raise TrainingDataError("empty training set")
    rng = _rng.stream(seed, "ml_init")
    x, y = ts.arrays()
    xn = (x - ts.normalization[0]) / ts.normalization[1]

    if solution == 1:
        model = solution1_model(rng, class_count=ts.class_count, class_names=ts.class_names)
        model.normalization = ts.normalization
        model, report = lbfgs_fit(model, xn, y, loss="cross_entropy",
                                  max_iter=lbfgs_max_iter, normalized=True)
        final_loss = report.final_loss
        details = {
            "optimizer": "lbfgs",
            "iterations": report.iterations,
            "stop_reason": report.stop_reason,
            "grad_norm": report.grad_norm,
        }
    elif solution == 2:
        model = solution2_model(rng, class_count=ts.class_count, class_names=ts.class_names)
        model.normalization = ts.normalization
        model.train()
        params = model.parameters()
        state = AdamState.for_params(params)
        n = xn.shape[0]
        final_loss = math.inf
        for _ in range(epochs):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                value, grads = loss_and_grad(model, xn[idx], y[idx], "nll", normalized=True)
                adam_step(params, grads, state, lr=lr)
                losses.append(value)
            final_loss = float(np.mean(losses))
            if not math.isfinite(final_loss):
                raise FloatingPointError("training diverged to a non-finite loss")
        model.eval()
        details = {"optimizer": "adam", "epochs": epochs, "batch_size": batch_size, "lr": lr}
    else:
        raise ValueError("solution must be 1 or 2")

    pred = model.probabilities(xn, normalized=True).argmax(axis=1)
    accuracy = float((pred == y).mean())
    summary = TrainingSummary(
        solution=solution,
        n_samples=len(ts.samples),
        class_count=ts.class_count,
        final_loss=final_loss,
        train_accuracy=accuracy,
        details=details,
    )
    log.info("solution %d trained: loss %.4f acc %.3f", solution, final_loss, accuracy)
    return model, summary


def infer_stream(
    model: MlpModel,
    records: list[ReportRecord],
    topo: VascularTopology,
    up_to: float | None = None,
) -> LocalizationEstimate:
    """Aggregate event-positive reports into one region/point estimate.

    Per positive report the model emits a class-probability vector; vectors
    are summed elementwise and the argmax region wins (ties break to the
    lowest class index). No positive reports means no estimate.
    """
    elapsed = [
        r.elapsed for r in records
        if r.event_bit == 1 and (up_to is None or r.t_sim <= up_to)
    ]
    if not elapsed:
        return LocalizationEstimate(region=None, point=None, n_reports_used=0,
                                    available=False)
    probs = model.probabilities(np.array(elapsed).reshape(-1, 1))
    total = probs.sum(axis=0)
    winner = int(np.argmax(total))  # argmax returns the first (lowest) index on ties
    region = model.class_names[winner]
    return LocalizationEstimate(
        region=region,
        point=point_estimate(region, topo),
        n_reports_used=len(elapsed),
        available=True,
    )


def point_estimate(region: str, topo: VascularTopology) -> tuple[float, float, float]:
    """The estimated point for a region is its centroid."""
    return region_centroid(topo, region)

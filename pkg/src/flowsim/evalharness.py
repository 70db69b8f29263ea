"""Metrics, Table-2 design-space sweeps, and the training protocol.

A sweep varies one parameter axis at a time around the baseline
(64 devices, 3 samples/s, 1 cm threshold). Each sweep point runs 25 test
scenarios, one event per region, placed uniformly at random within the
region via a per-region stream of the master seed, so every sweep point
sees the same 25 test events. Estimates are evaluated at checkpoints
120..960 s for both solutions.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng
from .engine import (
    EventSpec,
    ReportRecord,
    ScenarioConfig,
    persist_raw,
    random_point_in_region,
    run_scenario,
)
from .localization import (
    LocalizationEstimate,
    build_training_set,
    infer_stream,
    train,
)
from .neural import MlpModel, load_model, save_model
from .topology import VascularTopology, load_and_validate, default_body_path

log = logging.getLogger(__name__)

CHECKPOINTS = tuple(range(120, 961, 120))
METRICS_HEADER = (
    "sweep_axis,sweep_value,solution,checkpoint_s,event_region,"
    "predicted_region,available,point_error_cm"
)


@dataclass
class DesignSpace:
    devices: list[int] = field(default_factory=lambda: [32, 64, 128])
    sampling: list[float] = field(default_factory=lambda: [2.0, 3.0, 5.0, 10.0])
    thresholds: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0])
    baseline: tuple[int, float, float] = (64, 3.0, 1.0)
    sim_time: float = 1100.0
    train_time: float = 5000.0
    topology: str | Path | None = None
    regions: list[str] | None = None  # None = all 25 (reduced sets for smoke runs)

    def axes(self) -> list[tuple[str, float]]:
        """Labeled sweep groups in deterministic order."""
        out = [("devices", v) for v in self.devices]
        out += [("sampling", v) for v in self.sampling]
        out += [("thresholds", v) for v in self.thresholds]
        return out

    def config_of(self, axis: str, value: float) -> tuple[int, float, float]:
        dev, samp, thr = self.baseline
        if axis == "devices":
            dev = int(value)
        elif axis == "sampling":
            samp = float(value)
        elif axis == "thresholds":
            thr = float(value)
        else:
            raise ValueError(f"unknown sweep axis '{axis}'")
        return dev, samp, thr

    def distinct_points(self) -> list[tuple[int, float, float]]:
        seen = []
        for axis, value in self.axes():
            cfg = self.config_of(axis, value)
            if cfg not in seen:
                seen.append(cfg)
        return seen

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpace":
        base = data.get("baseline", {})
        return cls(
            devices=[int(v) for v in data.get("devices", [32, 64, 128])],
            sampling=[float(v) for v in data.get("sampling_per_s", [2, 3, 5, 10])],
            thresholds=[float(v) for v in data.get("thresholds_cm", [0.5, 1, 2, 3])],
            baseline=(
                int(base.get("devices", 64)),
                float(base.get("sampling_per_s", 3)),
                float(base.get("threshold_cm", 1)),
            ),
            sim_time=float(data.get("sim_time_s", 1100.0)),
            train_time=float(data.get("train_time_s", 5000.0)),
            topology=data.get("topology"),
            regions=data.get("regions"),
        )


@dataclass
class MetricsRow:
    sweep_axis: str
    sweep_value: float
    solution: int
    checkpoint_s: int
    event_region: str
    true_point: tuple[float, float, float]
    predicted_region: str | None
    available: int
    point_error_cm: float | None

    def csv_value(self) -> str:
        val = self.sweep_value
        val_str = str(int(val)) if float(val).is_integer() else repr(float(val))
        return ",".join([
            self.sweep_axis,
            val_str,
            str(self.solution),
            str(self.checkpoint_s),
            self.event_region,
            self.predicted_region or "",
            str(self.available),
            repr(float(self.point_error_cm)) if self.point_error_cm is not None else "",
        ])


def quartiles(values: list[float]) -> tuple[float, float, float, float, float]:
    """(min, q1, median, q3, max) with linear interpolation at h=(n-1)p.

    The even-n median is the midpoint of the two central values; the figure
    component implements the identical definition.
    """
    arr = np.asarray(values, dtype=float)
    q = np.percentile(arr, [0, 25, 50, 75, 100], method="linear")
    return tuple(float(v) for v in q)


def compute_metrics(rows: list[MetricsRow]) -> dict[int, dict]:
    """Per-checkpoint region accuracy, reliability, and point-error stats.

    Expects the rows of one (sweep group, solution). Unavailable estimates
    count as incorrect for accuracy but do not enter the error distribution.
    """
    by_cp: dict[int, list[MetricsRow]] = {}
    for row in rows:
        by_cp.setdefault(row.checkpoint_s, []).append(row)
    if not by_cp:
        raise ValueError("no metrics rows")
    out = {}
    for cp in sorted(by_cp):
        group = by_cp[cp]
        n = len(group)
        correct = sum(
            1 for r in group if r.available and r.predicted_region == r.event_region
        )
        available = sum(r.available for r in group)
        errors = [r.point_error_cm for r in group if r.available]
        out[cp] = {
            "n_events": n,
            "region_accuracy": correct / n,
            "reliability": available / n,
            "point_errors": quartiles(errors) if errors else None,
        }
    return out


# ---------------------------------------------------------------------------
# Test-event placement and scenario construction
# ---------------------------------------------------------------------------

def draw_test_events(
    topo: VascularTopology, master_seed: int, regions: list[str] | None = None
) -> dict[str, tuple[float, float, float]]:
    """One random event per region, identical across all sweep points."""
    out = {}
    for region in regions or list(topo.regions):
        rng = _rng.stream(master_seed, f"event_placement:{region}")
        out[region] = random_point_in_region(topo, region, rng)
    return out


def _scenario_seed(master_seed: int, tag: str) -> int:
    return _rng.substream_seed(master_seed, f"scenario:{tag}")


def _run_one(args) -> tuple[str, list[ReportRecord]]:
    key, config = args
    result = run_scenario(config)
    return key, result.records


def run_scenarios(configs: dict[str, ScenarioConfig]) -> dict[str, list[ReportRecord]]:
    """Run scenarios, optionally in parallel (FLOWSIM_THREADS), results keyed."""
    workers = int(os.environ.get("FLOWSIM_THREADS", "1"))
    items = sorted(configs.items())
    if workers <= 1 or len(items) <= 1:
        return {k: run_scenario(c).records for k, c in items}
    out: dict[str, list[ReportRecord]] = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for key, records in pool.map(_run_one, items):
            out[key] = records
    return out


# ---------------------------------------------------------------------------
# Training protocol
# ---------------------------------------------------------------------------

def train_models(
    topo_path: str | Path,
    master_seed: int,
    out_dir: str | Path,
    train_time: float = 5000.0,
    baseline: tuple[int, float, float] = (64, 3.0, 1.0),
    max_per_class: int | None = 1000,
    epochs: int = 40,
    raw_dir: str | Path | None = None,
) -> dict[int, Path]:
    """Run the 25 centroid-event training scenarios and fit both solutions."""
    topo = load_and_validate(topo_path)
    dev, samp, thr = baseline
    configs = {}
    for region in topo.regions:
        configs[region] = ScenarioConfig(
            topology=topo_path,
            n_devices=dev,
            sampling_rate=samp,
            detection_threshold=thr,
            sim_time=train_time,
            event=EventSpec(region=region, placement="centroid"),
            seed=_scenario_seed(master_seed, f"train:{region}"),
        )
    log.info("running %d training scenarios of %.0f s", len(configs), train_time)
    runs = run_scenarios(configs)
    if raw_dir is not None:
        raw_path = Path(raw_dir)
        raw_path.mkdir(parents=True, exist_ok=True)
        for region, records in runs.items():
            persist_raw(records, raw_path / f"train_{region}.csv")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for solution in (1, 2):
        ts = build_training_set(runs, topo, solution, max_per_class=max_per_class,
                                seed=master_seed)
        model, summary = train(ts, seed=master_seed, epochs=epochs)
        path = out / f"solution{solution}.json"
        save_model(model, path)
        (out / f"solution{solution}_summary.json").write_text(
            summary.to_json(), encoding="utf-8"
        )
        paths[solution] = path
        log.info("solution %d: train accuracy %.3f", solution, summary.train_accuracy)
    return paths


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def run_sweep(
    space: DesignSpace,
    master_seed: int,
    out_dir: str | Path,
    models: dict[int, MlpModel] | None = None,
    model_dir: str | Path | None = None,
    do_train: bool = False,
    keep_raw: bool = True,
) -> Path:
    """Run the design-space sweep and write metrics.csv; returns its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    topo_path = Path(space.topology) if space.topology else default_body_path()
    topo = load_and_validate(topo_path)

    if models is None:
        if do_train:
            paths = train_models(topo_path, master_seed, Path(model_dir or out / "models"),
                                 train_time=space.train_time, baseline=space.baseline)
        elif model_dir is not None:
            paths = {s: Path(model_dir) / f"solution{s}.json" for s in (1, 2)}
        else:
            raise ValueError("run_sweep needs trained models (models=, model_dir=, or do_train=True)")
        for s, p in paths.items():
            if not Path(p).exists():
                raise FileNotFoundError(f"model file missing: {p}")
        models = {s: load_model(p) for s, p in paths.items()}

    regions = space.regions or list(topo.regions)
    events = draw_test_events(topo, master_seed, regions)

    # simulate each distinct parameter combination once
    configs: dict[str, ScenarioConfig] = {}
    for dev, samp, thr in space.distinct_points():
        for region in regions:
            tag = f"{dev}:{samp}:{thr}:{region}"
            configs[tag] = ScenarioConfig(
                topology=topo_path,
                n_devices=dev,
                sampling_rate=samp,
                detection_threshold=thr,
                sim_time=space.sim_time,
                event=EventSpec(point=events[region]),
                seed=_scenario_seed(master_seed, tag),
            )
    log.info("running %d sweep scenarios", len(configs))
    runs = run_scenarios(configs)

    if keep_raw:
        raw_root = out / "raw"
        raw_root.mkdir(exist_ok=True)
        for tag, records in runs.items():
            persist_raw(records, raw_root / (tag.replace(":", "_") + ".csv"))

    rows: list[MetricsRow] = []
    for axis, value in space.axes():
        dev, samp, thr = space.config_of(axis, value)
        for solution in (1, 2):
            model = models[solution]
            for region in regions:
                tag = f"{dev}:{samp}:{thr}:{region}"
                records = runs[tag]
                truth = events[region]
                for cp in CHECKPOINTS:
                    est = infer_stream(model, records, topo, up_to=float(cp))
                    err = (
                        math.dist(truth, est.point) if est.available else None
                    )
                    rows.append(MetricsRow(
                        sweep_axis=axis,
                        sweep_value=value,
                        solution=solution,
                        checkpoint_s=cp,
                        event_region=region,
                        true_point=truth,
                        predicted_region=est.region,
                        available=int(est.available),
                        point_error_cm=err,
                    ))

    csv_path = out / "metrics.csv"
    write_metrics_csv(rows, csv_path)
    return csv_path


def write_metrics_csv(rows: list[MetricsRow], path: str | Path) -> None:
    lines = [METRICS_HEADER] + [r.csv_value() for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_metrics_csv(path: str | Path) -> list[MetricsRow]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise ValueError(f"unexpected metrics header in {path}")
    rows = []
    for line in lines[1:]:
        axis, value, sol, cp, region, pred, avail, err = line.split(",")
        rows.append(MetricsRow(
            sweep_axis=axis,
            sweep_value=float(value),
            solution=int(sol),
            checkpoint_s=int(cp),
            event_region=region,
            true_point=(math.nan, math.nan, math.nan),
            predicted_region=pred or None,
            available=int(avail),
            point_error_cm=float(err) if err else None,
        ))
    return rows


def select_rows(
    rows: list[MetricsRow],
    axis: str | None = None,
    value: float | None = None,
    solution: int | None = None,
    checkpoint: int | None = None,
) -> list[MetricsRow]:
    out = rows
    if axis is not None:
        out = [r for r in out if r.sweep_axis == axis]
    if value is not None:
        out = [r for r in out if r.sweep_value == value]
    if solution is not None:
        out = [r for r in out if r.solution == solution]
    if checkpoint is not None:
        out = [r for r in out if r.checkpoint_s == checkpoint]
    return out

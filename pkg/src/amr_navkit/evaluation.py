"""Closed-loop benchmark runner and metrics reporting.

Episodes are fanned out over tasks (optionally across worker processes) and
aggregated into a report of final-pose error distributions: overall medians,
collision/success rates, and per-bucket summaries split by initial target
distance, FFR mode, and initial visibility. Failed episodes contribute
their terminal errors; collision episodes are additionally counted apart.
"""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .controller import (
    CodecRoundtripPolicy,
    EpisodeResult,
    ExecutorConfig,
    OraclePolicy,
    run_episode,
)
from .errors import IoFailure
from .geometry import CameraModel
from .planner import CostWeights, PlannerBudget
from .pipeline import Task
from .scene import Scene

CSV_SCHEMA = "# amr-navkit-report-v1"
CSV_COLUMNS = (
    "bucket",
    "ffr",
    "visible",
    "count",
    "median_distance_m",
    "p90_distance_m",
    "max_distance_m",
    "median_angle_deg",
    "p90_angle_deg",
    "max_angle_deg",
)

_BUCKET_EDGES = (2.0, 4.0, 6.0)
BUCKET_LABELS = ("0-2", "2-4", "4-6", "6+")


def bucket_label(start_target_dist: float) -> str:
    """Initial-distance bucket; boundary values fall in the lower bucket."""
    for edge, label in zip(_BUCKET_EDGES, BUCKET_LABELS):
        if start_target_dist <= edge:
            return label
    return BUCKET_LABELS[-1]


@dataclass(frozen=True)
class PolicySpec:
    """Named built-in policy configuration (picklable for worker pools)."""

    kind: str = "oracle"  # oracle | codec_roundtrip
    use_residual: bool = True
    weights: CostWeights = CostWeights()
    budget: PlannerBudget = PlannerBudget()
    v_ref: float = 0.5
    omega_ref: float = 1.0
    safety_margin: float = 0.1
    seed: int = 0

    def build(self, scene: Scene, cfg: ExecutorConfig, camera: CameraModel):
        oracle = OraclePolicy(
            scene=scene,
            weights=self.weights,
            budget=self.budget,
            camera=camera,
            horizon_n=cfg.horizon_n,
            dt=cfg.dt,
            v_ref=self.v_ref,
            omega_ref=self.omega_ref,
            safety_margin=self.safety_margin,
            seed=self.seed,
        )
        if self.kind == "oracle":
            return oracle
        if self.kind == "codec_roundtrip":
            return CodecRoundtripPolicy(inner=oracle, use_residual=self.use_residual)
        raise ValueError(f"unknown policy kind {self.kind!r}")


@dataclass
class BucketStats:
    count: int = 0
    median_distance: float = 0.0
    p90_distance: float = 0.0
    max_distance: float = 0.0
    median_angle: float = 0.0
    p90_angle: float = 0.0
    max_angle: float = 0.0


@dataclass
class MetricsReport:
    n_episodes: int
    median_distance_error: float
    median_angle_error: float
    collision_rate: float
    success_rate: float
    success_pos_tol: float
    success_ang_tol_deg: float
    median_distance_error_success_only: float
    median_angle_error_success_only: float
    outcomes: dict[str, int]
    buckets: dict[str, BucketStats]


@dataclass(frozen=True)
class EpisodeSummary:
    """Per-episode metrics row feeding the aggregate report."""

    task_index: int
    outcome: str
    distance_error: float
    angle_error: float
    steps: int
    min_clearance: float
    start_target_dist: float
    ffr: bool
    initially_visible: bool


def _episode_summary(
    index: int, scene: Scene, task: Task, result: EpisodeResult
) -> EpisodeSummary:
    target = scene.object_by_id(task.target_id)
    dist0 = math.hypot(target.box.cx - task.start.x, target.box.cy - task.start.y)
    return EpisodeSummary(
        task_index=index,
        outcome=result.outcome,
        distance_error=result.distance_error,
        angle_error=result.angle_error,
        steps=result.steps,
        min_clearance=result.min_clearance,
        start_target_dist=dist0,
        ffr=task.ffr,
        initially_visible=task.initially_visible,
    )


def run_task(
    index: int,
    scene: Scene,
    task: Task,
    policy_spec: PolicySpec,
    cfg: ExecutorConfig,
    camera: CameraModel,
    num_rays: int = 360,
    max_range: float = 10.0,
) -> tuple[EpisodeSummary, EpisodeResult]:
    policy = policy_spec.build(scene, cfg, camera)
    result = run_episode(scene, task, policy, cfg, camera, num_rays, max_range)
    return _episode_summary(index, scene, task, result), result


def _worker(args) -> EpisodeSummary:
    return run_task(*args)[0]


def summarize(
    summaries: list[EpisodeSummary],
    success_pos_tol: float = 0.1,
    success_ang_tol_deg: float = 10.0,
) -> MetricsReport:
    """Aggregate per-episode summaries into a metrics report."""
    dists = np.array([s.distance_error for s in summaries])
    angs = np.array([s.angle_error for s in summaries])
    n = len(summaries)
    collisions = sum(1 for s in summaries if s.outcome == "collision")
    success = sum(
        1
        for s in summaries
        if s.outcome != "collision"
        and s.distance_error <= success_pos_tol
        and s.angle_error <= success_ang_tol_deg
    )
    ok = [s for s in summaries if s.outcome != "collision"]
    outcomes: dict[str, int] = {}
    for s in summaries:
        outcomes[s.outcome] = outcomes.get(s.outcome, 0) + 1

    buckets: dict[str, BucketStats] = {}
    for label in BUCKET_LABELS:
        for ffr in (True, False):
            for vis in (True, False):
                key = f"{label}/{'ffr' if ffr else 'nonffr'}/{'visible' if vis else 'hidden'}"
                rows = [
                    s
                    for s in summaries
                    if bucket_label(s.start_target_dist) == label
                    and s.ffr == ffr
                    and s.initially_visible == vis
                ]
                if rows:
                    bd = np.array([s.distance_error for s in rows])
                    ba = np.array([s.angle_error for s in rows])
                    buckets[key] = BucketStats(
                        count=len(rows),
                        median_distance=float(np.median(bd)),
                        p90_distance=float(np.percentile(bd, 90)),
                        max_distance=float(bd.max()),
                        median_angle=float(np.median(ba)),
                        p90_angle=float(np.percentile(ba, 90)),
                        max_angle=float(ba.max()),
                    )
                else:
                    buckets[key] = BucketStats()

    return MetricsReport(
        n_episodes=n,
        median_distance_error=float(np.median(dists)) if n else 0.0,
        median_angle_error=float(np.median(angs)) if n else 0.0,
        collision_rate=collisions / n if n else 0.0,
        success_rate=success / n if n else 0.0,
        success_pos_tol=success_pos_tol,
        success_ang_tol_deg=success_ang_tol_deg,
        median_distance_error_success_only=(
            float(np.median([s.distance_error for s in ok])) if ok else 0.0
        ),
        median_angle_error_success_only=(
            float(np.median([s.angle_error for s in ok])) if ok else 0.0
        ),
        outcomes=outcomes,
        buckets=buckets,
    )


def evaluate(
    tasks: list[Task],
    scenes: Mapping[int, Scene],
    policy_spec: PolicySpec,
    cfg: ExecutorConfig = ExecutorConfig(),
    camera: CameraModel = CameraModel.pinhole(),
    workers: int = 1,
    num_rays: int = 360,
    max_range: float = 10.0,
    success_pos_tol: float = 0.1,
    success_ang_tol_deg: float = 10.0,
) -> MetricsReport:
    """Run one episode per task and aggregate the error distributions."""
    if not tasks:
        raise ValueError("tasks must be nonempty")
    jobs = [
        (i, scenes[t.scene_seed], t, policy_spec, cfg, camera, num_rays, max_range)
        for i, t in enumerate(tasks)
    ]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            summaries = pool.map(_worker, jobs)
    else:
        summaries = [_worker(j) for j in jobs]
    return summarize(summaries, success_pos_tol, success_ang_tol_deg)


# ---------------------------------------------------------------------------
# export


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


def report_to_dict(report: MetricsReport) -> dict:
    d = asdict(report)
    for key, val in d.items():
        if isinstance(val, float):
            d[key] = _sig6(val)
    d["buckets"] = {
        k: {f: (_sig6(v) if isinstance(v, float) else v) for f, v in b.items()}
        for k, b in d["buckets"].items()
    }
    return d


def report_from_dict(d: dict) -> MetricsReport:
    buckets = {k: BucketStats(**b) for k, b in d["buckets"].items()}
    kwargs = {k: v for k, v in d.items() if k != "buckets"}
    return MetricsReport(buckets=buckets, **kwargs)


def report_to_csv(report: MetricsReport) -> str:
    """Bucket table as CSV with a fixed, versioned header."""
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for key, b in report.buckets.items():
        label, ffr, vis = key.split("/")
        writer.writerow(
            [
                label,
                int(ffr == "ffr"),
                int(vis == "visible"),
                b.count,
                f"{b.median_distance:.6g}",
                f"{b.p90_distance:.6g}",
                f"{b.max_distance:.6g}",
                f"{b.median_angle:.6g}",
                f"{b.p90_angle:.6g}",
                f"{b.max_angle:.6g}",
            ]
        )
    return buf.getvalue()


def report_export(report: MetricsReport, fmt: str, path: str) -> None:
    """Write a report as JSON or CSV; field order is deterministic."""
    try:
        if fmt == "json":
            with open(path, "w") as fh:
                json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
                fh.write("\n")
        elif fmt == "csv":
            with open(path, "w") as fh:
                fh.write(report_to_csv(report))
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as err:
        raise IoFailure(f"cannot write report to {path}: {err}") from err

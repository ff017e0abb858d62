"""Scoring of published occlusion regions against simulator ground truth.

Counting convention: every published region is scored once per tick it is
published, so a region that survives k ticks contributes k predictions.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import PipelineConfig, Vec2
from .costmap import CostedObstacle
from .pipeline import OcclusionPipeline
from .sim import EpisodeLog, SimConfig, WorldTruth, generate_scenario, run_episode

log = logging.getLogger(__name__)

COUNTING_NOTE = "percentages count every published prediction once per tick it is published"


class Category(str, enum.Enum):
    AGENT = "agent"
    OBSTACLE = "obstacle"
    INCORRECT = "incorrect"
    UNSEEN = "unseen"


CATEGORIES = (Category.AGENT, Category.OBSTACLE, Category.INCORRECT, Category.UNSEEN)


@dataclass(frozen=True)
class EvalConfig:
    horizon_s: float = 30.0
    incorrect_threshold: float = 0.40
    bin_width: float = 0.5
    max_range: float = 3.0
    error_mode: str = "center"  # or "boundary"
    exclude_sources: bool = True
    workers: int = 0  # 0 -> os.cpu_count()
    seed_base: int = 0

    def __post_init__(self):
        if self.error_mode not in ("center", "boundary"):
            raise ValueError(f"error_mode must be 'center' or 'boundary', got {self.error_mode!r}")
        if self.horizon_s < 0 or self.bin_width <= 0 or self.max_range <= 0:
            raise ValueError("horizon_s >= 0, bin_width > 0 and max_range > 0 required")


@dataclass(frozen=True)
class ExperimentConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def horizon_ticks(self) -> int:
        return int(round(self.eval.horizon_s / self.sim.dt))


@dataclass(frozen=True)
class Nearest:
    error: float
    kind: str | None  # "agent", "obstacle" or None for an empty world
    index: int = -1
    visible: bool = False


def nearest_entity(
    position: Vec2, truth: WorldTruth, exclude_agents: Iterable = (), mode: str = "center"
) -> Nearest:
    """Closest static obstacle or agent, skipping the agents that produced the estimate."""
    excluded = set(exclude_agents)
    offset = truth.footprint_radius if mode == "boundary" else 0.0
    best = Nearest(math.inf, None)
    for i, c in enumerate(truth.obstacle_centers):
        d = max(0.0, position.dist(c) - offset)
        if d < best.error:
            best = Nearest(d, "obstacle", i, truth.obstacle_visible[i])
    for i, (aid, c) in enumerate(zip(truth.agent_ids, truth.agent_positions)):
        if aid in excluded:
            continue
        d = max(0.0, position.dist(c) - offset)
        if d < best.error:
            best = Nearest(d, "agent", i, truth.agent_visible[i])
    return best


def prediction_error(
    prediction: CostedObstacle | Vec2, truth: WorldTruth, exclude_agents: Iterable = (), mode: str = "center"
) -> float:
    pos = prediction if isinstance(prediction, Vec2) else prediction.obstacle.mean
    return nearest_entity(pos, truth, exclude_agents, mode).error


def category_of(nearest: Nearest, threshold: float = 0.40) -> Category:
    if not nearest.error <= threshold:
        return Category.INCORRECT
    if not nearest.visible:
        return Category.UNSEEN
    return Category.AGENT if nearest.kind == "agent" else Category.OBSTACLE


def classify(
    prediction: CostedObstacle | Vec2,
    truth: WorldTruth,
    threshold: float = 0.40,
    exclude_agents: Iterable = (),
    mode: str = "center",
) -> Category:
    pos = prediction if isinstance(prediction, Vec2) else prediction.obstacle.mean
    return category_of(nearest_entity(pos, truth, exclude_agents, mode), threshold)


@dataclass(frozen=True)
class ScoredPrediction:
    prediction: CostedObstacle
    error: float
    category: Category
    robot_distance: float
    tick: int

    @property
    def cost(self) -> float:
        return self.prediction.cost


def score_prediction(pred: CostedObstacle, truth: WorldTruth, tick: int, cfg: EvalConfig) -> ScoredPrediction:
    exclude = pred.obstacle.contributors if cfg.exclude_sources else ()
    near = nearest_entity(pred.obstacle.mean, truth, exclude, cfg.error_mode)
    return ScoredPrediction(
        prediction=pred,
        error=near.error,
        category=category_of(near, cfg.incorrect_threshold),
        robot_distance=pred.obstacle.mean.dist(truth.robot.position),
        tick=tick,
    )


# -- distance bins -----------------------------------------------------------


@dataclass(frozen=True)
class BinRow:
    lo: float
    hi: float
    counts: dict
    n: int

    def pct(self, cat: Category) -> float | None:
        if self.n == 0:
            return None
        return 100.0 * self.counts.get(cat, 0) / self.n

    @property
    def label(self) -> str:
        return f"{self.lo:.1f}-{self.hi:.1f}"


@dataclass(frozen=True)
class DistanceBinReport:
    rows: tuple[BinRow, ...]
    out_of_range: int = 0

    @property
    def total(self) -> int:
        return sum(r.n for r in self.rows)


def bin_edges(bin_width: float = 0.5, max_range: float = 3.0) -> list[float]:
    n = int(round(max_range / bin_width))
    return [round(k * bin_width, 9) for k in range(n + 1)]


def bin_index(distance: float, edges: Sequence[float]) -> int | None:
    """Half-open bins except the last, which also takes its upper edge."""
    if distance < edges[0] or distance > edges[-1]:
        return None
    for k in range(len(edges) - 1):
        if distance < edges[k + 1]:
            return k
    return len(edges) - 2


def bin_report(scored: Iterable[ScoredPrediction], bin_width: float = 0.5, max_range: float = 3.0) -> DistanceBinReport:
    edges = bin_edges(bin_width, max_range)
    counts = [Counter() for _ in range(len(edges) - 1)]
    outside = 0
    for s in scored:
        k = bin_index(s.robot_distance, edges)
        if k is None:
            outside += 1
        else:
            counts[k][s.category] += 1
    rows = tuple(
        BinRow(edges[k], edges[k + 1], {c: counts[k].get(c, 0) for c in CATEGORIES}, sum(counts[k].values()))
        for k in range(len(counts))
    )
    return DistanceBinReport(rows, outside)


# -- cost scatter --------------------------------------------------------------


@dataclass(frozen=True)
class ScatterRecord:
    cost: float
    error: float
    category: Category
    robot_distance: float


@dataclass(frozen=True)
class ScatterData:
    records: tuple[ScatterRecord, ...]
    # category -> ten entries (mean error per 0.1-wide cost bin, None when empty)
    decile_means: dict


def cost_decile(cost: float) -> int:
    return min(max(int(math.floor(cost * 10.0)), 0), 9)


def scatter_data(scored: Iterable[ScoredPrediction]) -> ScatterData:
    records = tuple(ScatterRecord(s.cost, s.error, s.category, s.robot_distance) for s in scored)
    sums = {c: [0.0] * 10 for c in CATEGORIES}
    counts = {c: [0] * 10 for c in CATEGORIES}
    for r in records:
        k = cost_decile(r.cost)
        sums[r.category][k] += r.error
        counts[r.category][k] += 1
    means = {
        c: [sums[c][k] / counts[c][k] if counts[c][k] else None for k in range(10)] for c in CATEGORIES
    }
    return ScatterData(records, means)


# -- episodes and trials -------------------------------------------------------


@dataclass
class EpisodeResult:
    seed: int
    scored: list[ScoredPrediction]
    published: list[tuple[int, float, tuple[CostedObstacle, ...]]]
    n_raw: int = 0
    n_cleared: int = 0


def evaluate_log(episode: EpisodeLog, pipeline_cfg: PipelineConfig, eval_cfg: EvalConfig) -> EpisodeResult:
    """Run the pipeline over a recorded episode and score every published region."""
    pipe = OcclusionPipeline(pipeline_cfg)
    result = EpisodeResult(episode.seed, [], [])
    for rec in episode.records:
        out = pipe.step(rec.scan, rec.observations)
        result.n_raw += len(out.raw)
        result.n_cleared += len(out.cleared)
        result.published.append((rec.tick, rec.t, out.published))
        for pred in out.published:
            result.scored.append(score_prediction(pred, rec.truth, rec.tick, eval_cfg))
    return result


def run_seed(seed: int, cfg: ExperimentConfig) -> EpisodeResult:
    scenario = generate_scenario(seed, cfg.sim)
    episode = run_episode(scenario, cfg.sim, cfg.horizon_ticks)
    return evaluate_log(episode, cfg.pipeline, cfg.eval)


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def summarize(scored: Sequence[ScoredPrediction], bins: DistanceBinReport, n_seeds: int, failed: Sequence) -> dict:
    by_cat = {c: [s for s in scored if s.category is c] for c in CATEGORIES}
    unseen = by_cat[Category.UNSEEN]
    return {
        "n_seeds": n_seeds,
        "failed_seeds": [f[0] for f in failed],
        "total_predictions": len(scored),
        "category_counts": {c.value: len(v) for c, v in by_cat.items()},
        "mean_error_by_category": {
            c.value: _mean([s.error for s in v if math.isfinite(s.error)]) for c, v in by_cat.items()
        },
        "mean_unseen_error": _mean([s.error for s in unseen]),
        "incorrect_rate_by_bin": {r.label: r.pct(Category.INCORRECT) for r in bins.rows},
        "unseen_pct_by_bin": {r.label: r.pct(Category.UNSEEN) for r in bins.rows},
        "unseen_high_cost_fraction": _mean([1.0 if s.cost >= 0.9 else 0.0 for s in unseen]),
        "unseen_low_cost_fraction": _mean([1.0 if s.cost <= 0.15 else 0.0 for s in unseen]),
        "out_of_range_predictions": bins.out_of_range,
        "counting": COUNTING_NOTE,
    }


@dataclass
class TrialReport:
    bins: DistanceBinReport
    scatter: ScatterData
    summary: dict
    episodes: list[EpisodeResult]
    failures: list[tuple[int, str]]

    @property
    def scored(self) -> list[ScoredPrediction]:
        return [s for ep in self.episodes for s in ep.scored]


def _worker_count(requested: int, n_jobs: int) -> int:
    n = requested if requested > 0 else (os.cpu_count() or 1)
    return max(1, min(n, n_jobs))


def run_trials(n_seeds: int, cfg: ExperimentConfig | None = None, seeds: Sequence[int] | None = None) -> TrialReport:
    """Run independent seeded episodes and aggregate their scores.

    A seed whose scenario cannot be generated is recorded as a failure and
    the rest of the batch continues.
    """
    cfg = cfg or ExperimentConfig()
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    seeds = list(seeds) if seeds is not None else [cfg.eval.seed_base + k for k in range(n_seeds)]
    workers = _worker_count(cfg.eval.workers, len(seeds))

    episodes, failures = [], []
    if workers == 1:
        outcomes = []
        for s in seeds:
            try:
                outcomes.append((s, run_seed(s, cfg), None))
            except Exception as exc:  # noqa: BLE001 - per-seed isolation
                outcomes.append((s, None, exc))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(s, pool.submit(run_seed, s, cfg)) for s in seeds]
            outcomes = []
            for s, fut in futures:
                try:
                    outcomes.append((s, fut.result(), None))
                except Exception as exc:  # noqa: BLE001
                    outcomes.append((s, None, exc))
    for s, res, exc in outcomes:
        if exc is not None:
            log.warning("seed %s failed: %s", s, exc)
            failures.append((s, f"{type(exc).__name__}: {exc}"))
        else:
            episodes.append(res)

    scored = [sp for ep in episodes for sp in ep.scored]
    bins = bin_report(scored, cfg.eval.bin_width, cfg.eval.max_range)
    summary = summarize(scored, bins, len(seeds), failures)
    return TrialReport(bins, scatter_data(scored), summary, episodes, failures)

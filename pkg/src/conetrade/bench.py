"""Randomized scenario generation and the batch experiment harness.

Scenarios mix two random concave quadratics through a mixing constant rho:
rho near 0 gives both agents (almost) the same utility, large rho decouples
them. All algorithms in a batch consume the identical scenario list, and
curves report mean cumulative benefit per offer index, normalized by the
best algorithm's peak.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (
    GreedyConcessionEngine,
    MomentumTradingEngine,
    RandomTradingEngine,
)
from .discrete import DiscreteConeEngine
from .engine import NegotiationParams, NegotiationTranscript, drive, greedy_responder
from .refine import ConeTradingEngine
from .trading import QuadraticUtility, TradingError

BENEFIT_KINDS = ("societal", "offering", "responding")
ALGORITHMS = ("stcr", "stcr-noheur", "random", "random-prev", "random-momentum", "gca")

DEFAULT_ANGLE_THRESHOLD = 1e-5
DEFAULT_PER_CATEGORY_CAP = 5.0
DEFAULT_INITIAL = 100.0


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    rho: float
    seed: int
    initial_per_category: float = DEFAULT_INITIAL
    per_category_cap: float = DEFAULT_PER_CATEGORY_CAP
    mode: str = "continuous"

    def __post_init__(self):
        if self.n < 2 or self.rho < 0:
            raise TradingError("scenario needs n >= 2 and rho >= 0")
        if self.mode not in ("continuous", "discrete"):
            raise TradingError(f"unknown mode {self.mode!r}")

    @property
    def offer_norm(self) -> float:
        return 5.0 * float(np.sqrt(self.n))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "rho": self.rho,
            "seed": self.seed,
            "initial_per_category": self.initial_per_category,
            "per_category_cap": self.per_category_cap,
            "mode": self.mode,
        }


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    f_A: QuadraticUtility
    f_B: QuadraticUtility
    S_A: np.ndarray
    S_B: np.ndarray

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.f_A.Q, self.f_A.u, self.f_B.Q, self.f_B.u, self.S_A, self.S_B):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Draw the mixed-quadratic scenario for one seed.

    Base matrices have U[0,1] entries and become NSD as -M M^T; base linear
    terms are integers drawn uniformly from 1..200. Agent A weights its own
    base by (rho+1)/(rho+2), agent B symmetrically.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    M_A = rng.random((n, n))
    M_B = rng.random((n, n))
    Q_A = -M_A @ M_A.T
    Q_B = -M_B @ M_B.T
    u_A = rng.integers(1, 201, size=n).astype(float)
    u_B = rng.integers(1, 201, size=n).astype(float)
    rho = cfg.rho
    f_A = QuadraticUtility(((rho + 1) * Q_A + Q_B) / (rho + 2), ((rho + 1) * u_A + u_B) / (rho + 2))
    f_B = QuadraticUtility((Q_A + (rho + 1) * Q_B) / (rho + 2), (u_A + (rho + 1) * u_B) / (rho + 2))
    S = np.full(n, cfg.initial_per_category)
    return Scenario(cfg, f_A, f_B, S.copy(), S.copy())


def default_params(cfg: ScenarioConfig, budget: int) -> NegotiationParams:
    return NegotiationParams(
        offer_budget=budget,
        offer_norm=cfg.offer_norm,
        angle_threshold=DEFAULT_ANGLE_THRESHOLD,
        per_category_cap=cfg.per_category_cap,
    )


def make_engine(
    algorithm: str,
    scenario: Scenario,
    budget: int,
    rng: np.random.Generator,
    gca_update_interval: int = 10,
):
    """Build a fresh engine for one run; params are per-engine, never shared."""
    cfg = scenario.config
    discrete = cfg.mode == "discrete"
    params = default_params(cfg, budget)
    if algorithm in ("stcr", "stcr-noheur"):
        if algorithm == "stcr-noheur":
            params.use_prev_trade_heuristic = False
            params.use_cone_warm_start = False
        if discrete:
            return DiscreteConeEngine(scenario.S_A, scenario.S_B, scenario.f_A, params)
        return ConeTradingEngine(scenario.S_A, scenario.S_B, scenario.f_A, params)
    if algorithm == "random":
        return RandomTradingEngine(scenario.S_A, scenario.S_B, scenario.f_A, params, rng, discrete=discrete)
    if algorithm == "random-prev":
        return RandomTradingEngine(
            scenario.S_A, scenario.S_B, scenario.f_A, params, rng, discrete=discrete, with_prev_heuristic=True
        )
    if algorithm == "random-momentum":
        return MomentumTradingEngine(scenario.S_A, scenario.S_B, scenario.f_A, params, rng, discrete=discrete)
    if algorithm == "gca":
        if not discrete:
            raise TradingError("gca requires discrete mode (integer candidate enumeration)")
        return GreedyConcessionEngine(
            scenario.S_A, scenario.S_B, scenario.f_A, params, rng, update_interval=gca_update_interval
        )
    raise TradingError(f"unknown algorithm {algorithm!r}")


def run_scenario(
    algorithm: str,
    scenario: Scenario,
    budget: int,
    base_seed: int,
    index: int,
    gca_update_interval: int = 10,
) -> NegotiationTranscript:
    rng = np.random.default_rng([base_seed, index, 1])
    engine = make_engine(algorithm, scenario, budget, rng, gca_update_interval)
    transcript = drive(engine, greedy_responder(scenario.f_B), f_B=scenario.f_B)
    transcript.metadata.update(
        {
            "algorithm": algorithm,
            "scenario_seed": scenario.config.seed,
            "scenario_index": index,
            "scenario_hash": scenario.digest,
            "config": scenario.config.to_json(),
            "utilities": {"f_A": scenario.f_A.to_json(), "f_B": scenario.f_B.to_json()},
        }
    )
    return transcript


@dataclass
class CurvePoint:
    offer_index: int
    mean_benefit: float
    normalized: float


@dataclass
class CurveSeries:
    algorithm: str
    benefit_kind: str
    points: list[CurvePoint] = field(default_factory=list)


def _run_one(args) -> tuple[str, int, list[list[float]]]:
    algorithm, cfg, budget, base_seed, index, interval = args
    scenario = generate_scenario(cfg)
    transcript = run_scenario(algorithm, scenario, budget, base_seed, index, interval)
    return (
        algorithm,
        index,
        [transcript.cumulative(kind, budget).tolist() for kind in BENEFIT_KINDS],
    )


def run_batch(
    algorithms: list[str],
    base_cfg: ScenarioConfig,
    n_scenarios: int,
    budget: int,
    gca_update_interval: int = 10,
    transcript_sink=None,
) -> dict:
    """Run every algorithm on the identical scenario list.

    Returns per-algorithm mean cumulative curves and their normalized
    versions (per benefit kind, divided by the maximum mean cumulative value
    any algorithm attains for that kind). ``transcript_sink(algorithm, index,
    transcript)`` receives every transcript when provided.
    """
    base_seed = base_cfg.seed
    configs = [
        ScenarioConfig(
            base_cfg.n,
            base_cfg.rho,
            base_seed + i,
            base_cfg.initial_per_category,
            base_cfg.per_category_cap,
            base_cfg.mode,
        )
        for i in range(n_scenarios)
    ]
    hashes = [generate_scenario(c).digest for c in configs]
    curves = {algo: {kind: np.zeros((n_scenarios, budget)) for kind in BENEFIT_KINDS} for algo in algorithms}

    workers = int(os.environ.get("TRADE_THREADS", "1"))
    jobs = [
        (algo, configs[i], budget, base_seed, i, gca_update_interval)
        for algo in algorithms
        for i in range(n_scenarios)
    ]
    if workers > 1 and transcript_sink is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for algo, i, rows in pool.map(_run_one, jobs, chunksize=4):
                for kind, row in zip(BENEFIT_KINDS, rows):
                    curves[algo][kind][i] = row
    else:
        for algo in algorithms:
            for i, cfg in enumerate(configs):
                scenario = generate_scenario(cfg)
                assert scenario.digest == hashes[i], "scenario list diverged between algorithms"
                transcript = run_scenario(algo, scenario, budget, base_seed, i, gca_update_interval)
                if transcript_sink is not None:
                    transcript_sink(algo, i, transcript)
                for kind in BENEFIT_KINDS:
                    curves[algo][kind][i] = transcript.cumulative(kind, budget)

    means = {algo: {kind: curves[algo][kind].mean(axis=0) for kind in BENEFIT_KINDS} for algo in algorithms}
    series: list[CurveSeries] = []
    for kind in BENEFIT_KINDS:
        peak = max(float(np.max(means[algo][kind], initial=0.0)) for algo in algorithms)
        scale = peak if peak > 0 else 1.0
        for algo in algorithms:
            pts = [
                CurvePoint(j + 1, float(means[algo][kind][j]), float(means[algo][kind][j] / scale))
                for j in range(budget)
            ]
            series.append(CurveSeries(algo, kind, pts))
    return {
        "config": base_cfg.to_json(),
        "n_scenarios": n_scenarios,
        "budget": budget,
        "scenario_hashes": hashes,
        "gca_update_interval": gca_update_interval,
        "series": series,
    }


def emit_results(results: dict, out_dir, fmt: str = "both") -> list[Path]:
    """Write the curve series as CSV and/or a JSON mirror with the full config
    header; parsing either reproduces the series exactly."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = results["config"]
    stem = f"bench_n{cfg['n']}_rho{cfg['rho']}_{cfg['mode']}_seed{cfg['seed']}"
    written: list[Path] = []
    if fmt in ("csv", "both"):
        path = out / f"{stem}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["algorithm", "benefit_kind", "offer_index", "mean", "normalized", "n_scenarios", "seed"])
            for s in results["series"]:
                for p in s.points:
                    writer.writerow(
                        [s.algorithm, s.benefit_kind, p.offer_index, repr(p.mean_benefit), repr(p.normalized), results["n_scenarios"], cfg["seed"]]
                    )
        written.append(path)
    if fmt in ("json", "both"):
        path = out / f"{stem}.json"
        payload = {
            "config": cfg,
            "n_scenarios": results["n_scenarios"],
            "budget": results["budget"],
            "scenario_hashes": results["scenario_hashes"],
            "gca_update_interval": results["gca_update_interval"],
            "series": [
                {
                    "algorithm": s.algorithm,
                    "benefit_kind": s.benefit_kind,
                    "points": [
                        {"offer_index": p.offer_index, "mean": p.mean_benefit, "normalized": p.normalized}
                        for p in s.points
                    ],
                }
                for s in results["series"]
            ],
        }
        path.write_text(json.dumps(payload))
        written.append(path)
    return written


def load_results(path) -> dict:
    """Parse a JSON results file back into the run_batch return shape."""
    payload = json.loads(Path(path).read_text())
    payload["series"] = [
        CurveSeries(
            s["algorithm"],
            s["benefit_kind"],
            [CurvePoint(p["offer_index"], p["mean"], p["normalized"]) for p in s["points"]],
        )
        for s in payload["series"]
    ]
    return payload

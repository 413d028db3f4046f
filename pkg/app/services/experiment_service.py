import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.config import get_settings
from app.errors import ConfigError, FileAccessError
from app.models import DelayKind, ScenarioConfig
from app.services.delay_service import load_trace_file, make_schedule
from app.services.graph_service import Digraph, build_push_weights, load_edge_file
from app.services.protocol_service import Trajectory, run_rppac, validate_gamma
from app.utils.db import db
from app.utils.metrics import consensus_error, iterations_to_tolerance

logger = logging.getLogger(__name__)

CONVERGENCE_TOLERANCE = 1e-6

__all__ = ["ErrorCurve", "ScenarioResult", "ExperimentService", "consensus_error", "initial_values"]


@dataclass
class ErrorCurve:
    """Mean consensus error per iteration over `runs` Monte Carlo runs"""

    mean_error: np.ndarray
    runs: int

    @property
    def final(self) -> float:
        return float(self.mean_error[-1])


@dataclass
class ScenarioResult:
    trajectory: Trajectory
    curve: ErrorCurve
    converged_at: Optional[int]


def initial_values(init: str, n: int, seed: int = 0) -> np.ndarray:
    """
    index      x_j(0) = j (1-based)
    const:<v>  every node starts at v
    file:<p>   whitespace-separated values, one per node
    random     uniform on [0, n), drawn from (seed)
    """
    if init == "index":
        return np.arange(1, n + 1, dtype=float)
    if init == "random":
        return np.random.default_rng([seed]).uniform(0.0, float(n), size=n)
    if init.startswith("const:"):
        try:
            return np.full(n, float(init[len("const:"):]))
        except ValueError:
            raise ConfigError(f"Non-numeric constant in init mode {init!r}")
    if init.startswith("file:"):
        path = init[len("file:"):]
        try:
            with open(path, "r") as f:
                values = np.array([float(v) for v in f.read().split()])
        except OSError as e:
            raise FileAccessError(f"Cannot read initial values {path}: {e}")
        except ValueError:
            raise ConfigError(f"Non-numeric initial value in {path}")
        if values.size != n:
            raise ConfigError(f"{path} holds {values.size} values for {n} nodes")
        return values
    raise ConfigError(f"Unknown init mode {init!r}")


class ExperimentService:
    """Runs scenarios and Monte Carlo batches of the node-level protocol"""

    def __init__(self, max_workers: Optional[int] = None):
        settings = get_settings()
        self.max_workers = max_workers or settings.max_workers
        self.data_dir = settings.data_dir

    def load_graph(self, cfg: ScenarioConfig) -> Digraph:
        """Paths that do not exist as given are looked up under the data directory"""
        if not cfg.graph:
            raise ConfigError("No graph file given")
        path = cfg.graph
        if not os.path.exists(path) and os.path.exists(os.path.join(self.data_dir, path)):
            path = os.path.join(self.data_dir, path)
        return load_edge_file(path)

    def _trace(self, cfg: ScenarioConfig) -> Optional[dict]:
        if cfg.delay_kind != DelayKind.TRACE:
            return None
        if not cfg.trace:
            raise ConfigError("delay kind 'trace' needs a trace file")
        return load_trace_file(cfg.trace)

    def check_gamma(self, cfg: ScenarioConfig, g: Digraph) -> None:
        validate_gamma(cfg.gamma, build_push_weights(g), cfg.force_gamma)

    def _single_run(self, cfg: ScenarioConfig, g: Digraph, seed: int, trace: Optional[dict]) -> Trajectory:
        schedule = make_schedule(cfg.delay_spec(seed=seed, trace=trace), g)
        x0 = initial_values(cfg.init, g.n, seed)
        return run_rppac(g, schedule, cfg.gamma, x0, cfg.iters, force_gamma=cfg.force_gamma)

    def run_scenario(self, cfg: ScenarioConfig, graph: Optional[Digraph] = None) -> ScenarioResult:
        g = graph or self.load_graph(cfg)
        self.check_gamma(cfg, g)

        traj = self._single_run(cfg, g, cfg.seed, self._trace(cfg))
        converged_at = iterations_to_tolerance(traj.error, CONVERGENCE_TOLERANCE)
        db.increment_metric("total_runs")

        logger.info(
            "run: n=%d tau_bar=%d gamma=%g K=%d final_error=%.3e converged_at=%s",
            g.n, cfg.tau_bar, cfg.gamma, cfg.iters, traj.error[-1], converged_at,
        )
        return ScenarioResult(
            trajectory=traj,
            curve=ErrorCurve(mean_error=traj.error.copy(), runs=1),
            converged_at=converged_at,
        )

    def run_trajectories(
        self,
        cfg: ScenarioConfig,
        graph: Optional[Digraph] = None,
        progress: Optional[Callable[[int, float], None]] = None,
    ) -> List[Trajectory]:
        """Full per-run trajectories in run-index order; run i uses seed + i"""
        g = graph or self.load_graph(cfg)
        self.check_gamma(cfg, g)
        trace = self._trace(cfg)

        def one(run_index: int) -> Trajectory:
            traj = self._single_run(cfg, g, cfg.seed + run_index, trace)
            logger.debug("run %d/%d final_error=%.3e", run_index + 1, cfg.runs, traj.error[-1])
            if progress is not None:
                progress(run_index, float(traj.error[-1]))
            return traj

        if self.max_workers > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                return list(pool.map(one, range(cfg.runs)))
        return [one(i) for i in range(cfg.runs)]

    def run_curves(
        self,
        cfg: ScenarioConfig,
        graph: Optional[Digraph] = None,
        progress: Optional[Callable[[int, float], None]] = None,
    ) -> List[np.ndarray]:
        return [traj.error for traj in self.run_trajectories(cfg, graph, progress)]

    def monte_carlo(
        self,
        cfg: ScenarioConfig,
        graph: Optional[Digraph] = None,
        progress: Optional[Callable[[int, float], None]] = None,
    ) -> ErrorCurve:
        curves = self.run_curves(cfg, graph, progress)
        # stacked in run-index order so the mean does not depend on scheduling
        mean = np.stack(curves).mean(axis=0)
        db.increment_metric("total_monte_carlo")
        logger.info("monte carlo: runs=%d tau_bar=%d gamma=%g final_mean_error=%.3e",
                    cfg.runs, cfg.tau_bar, cfg.gamma, mean[-1])
        return ErrorCurve(mean_error=mean, runs=cfg.runs)

    def compare_curves(
        self,
        cfg: ScenarioConfig,
        parameter: str,
        values: Sequence[float],
        graph: Optional[Digraph] = None,
    ) -> Dict[str, ErrorCurve]:
        """Monte Carlo curves for several values of tau_bar or gamma, keyed "<param>=<value>" """
        if parameter not in ("tau_bar", "gamma"):
            raise ConfigError(f"Can only compare over tau_bar or gamma, not {parameter!r}")
        g = graph or self.load_graph(cfg)

        curves = {}
        for value in values:
            value = int(value) if parameter == "tau_bar" else float(value)
            variant = cfg.model_copy(update={parameter: value})
            curves[f"{parameter}={value}"] = self.monte_carlo(variant, g)
        return curves

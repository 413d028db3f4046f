"""
Acceptance run
Checks the simulators on the ten-agent reference network against the criteria in acceptance_set.json
"""

import json
import os
import sys
import time
from typing import Dict, List

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.config import configure_logging  # noqa: E402
from app.models import DelayKind, DelaySpec, ScenarioConfig  # noqa: E402
from app.services.augmented_service import (  # noqa: E402
    build_snapshot_matrices,
    random_snapshot,
    run_matrix_form,
    snapshot_from_schedule,
    split_M0_M1,
    word_products,
)
from app.services.delay_service import make_schedule  # noqa: E402
from app.services.experiment_service import ExperimentService  # noqa: E402
from app.services.graph_service import (  # noqa: E402
    build_push_weights,
    from_edge_list,
    load_edge_file,
    min_push_weight,
    random_strongly_connected,
)
from app.services.protocol_service import run_ppac, run_rppac  # noqa: E402
from app.services.spectral_service import (  # noqa: E402
    eigen_moduli,
    eigenvalues,
    mean_gap_vs_delay,
    spectra_match,
    spectral_radius,
    sweep_gamma,
)

EVAL_DIR = os.path.dirname(os.path.abspath(__file__))
GRAPH_PATH = os.path.join(os.path.dirname(EVAL_DIR), "data", "fig1.edges")
GAMMA = 0.1
ITERS = 300
RUNS = 100


def load_acceptance_set(filepath: str = os.path.join(EVAL_DIR, "acceptance_set.json")) -> Dict[str, Dict]:
    """Load criteria keyed by name"""
    with open(filepath, "r") as f:
        return {item["name"]: item for item in json.load(f)}


def x0_index(n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=float)


def uniform(g, tau_bar: int, seed: int):
    return make_schedule(DelaySpec(kind=DelayKind.UNIFORM, tau_bar=tau_bar, seed=seed), g)


class Acceptance:
    def __init__(self, criteria: Dict[str, Dict]):
        self.criteria = criteria
        self.g = load_edge_file(GRAPH_PATH)
        self.service = ExperimentService()
        self._runs = {}

    def monte_carlo_runs(self, tau_bar: int, gamma: float = GAMMA):
        """Cached 100-run batches, shared between criteria"""
        key = (tau_bar, gamma)
        if key not in self._runs:
            cfg = ScenarioConfig(graph=GRAPH_PATH, tau_bar=tau_bar, gamma=gamma, iters=ITERS, runs=RUNS, seed=0)
            self._runs[key] = self.service.run_trajectories(cfg, self.g)
        return self._runs[key]

    def final_mean_error(self, tau_bar: int, gamma: float = GAMMA) -> float:
        return float(np.mean([traj.error[-1] for traj in self.monte_carlo_runs(tau_bar, gamma)]))

    def cross_oracle(self, c):
        worst = 0.0
        for tau_bar in c["tau_bars"]:
            for seed in c["seeds"]:
                schedule = uniform(self.g, tau_bar, seed)
                node = run_rppac(self.g, schedule, GAMMA, x0_index(self.g.n), ITERS)
                matrix = run_matrix_form(self.g, schedule, GAMMA, x0_index(self.g.n), ITERS)
                worst = max(worst, np.abs(node.x - matrix.x).max(), np.abs(node.s - matrix.s).max())
        return worst < c["tolerance"], f"max_diff={worst:.2e}"

    def average_convergence(self, c):
        finals = {t: self.final_mean_error(t) for t in c["tau_bars"]}
        below = all(finals[t] < c["thresholds"][str(t)] for t in c["tau_bars"])
        ordered = all(finals[a] <= finals[b] for a, b in zip(c["tau_bars"], c["tau_bars"][1:]))
        surplus = max(
            float(np.abs(traj.s[-1]).max()) for t in c["tau_bars"] for traj in self.monte_carlo_runs(t)
        )
        passed = below and ordered and surplus < c["surplus_bound"]
        detail = " ".join(f"tau_bar={t}:{e:.2e}" for t, e in finals.items()) + f" max_surplus={surplus:.2e}"
        return passed, detail

    def mass_conservation(self, c):
        worst = 0.0
        for t in self.criteria["average_convergence"]["tau_bars"]:
            for traj in self.monte_carlo_runs(t):
                worst = max(worst, float(np.abs(traj.mass() - traj.x[0].sum()).max()))
        return worst < c["tolerance"], f"max_dev={worst:.2e}"

    def stochasticity(self, c):
        worst = 0.0
        single_layer = True
        for tau_bar in c["tau_bars"]:
            rng = np.random.default_rng([0, tau_bar])
            for _ in range(c["samples"]):
                sm = build_snapshot_matrices(self.g, random_snapshot(self.g, tau_bar, rng), GAMMA)
                worst = max(worst, np.abs(sm.R_tilde.sum(axis=1) - 1).max(), np.abs(sm.C_tilde.sum(axis=0) - 1).max())
                layers = sum((layer != 0).astype(int) for layer in sm.C_layers)
                single_layer &= all(layers[j, i] == 1 for j, i in self.g.edges)
        return worst <= c["tolerance"] and single_layer, f"max_dev={worst:.2e} single_layer={single_layer}"

    def decomposition_algebra(self, c):
        nilpotent = spectrum = True
        rho_r = []
        rho_e = []
        for tau_bar in c["tau_bars"]:
            beta = tau_bar + 1
            schedule = uniform(self.g, tau_bar, 1)
            rng = np.random.default_rng([1, tau_bar])
            for w in range(c["windows"]):
                sm = build_snapshot_matrices(self.g, random_snapshot(self.g, tau_bar, rng), GAMMA)
                M0, M1 = split_M0_M1(sm)
                nilpotent &= not (M1 @ M1).any()
                union = np.concatenate([eigenvalues(sm.R_tilde), eigenvalues(sm.C_tilde - sm.H)])
                spectrum &= spectra_match(eigenvalues(M0), union, tol=c["tolerance"])
                R_bar, E_bar = word_products(self.g, schedule, GAMMA, w * beta, beta)
                rho_r.append(spectral_radius(R_bar))
                rho_e.append(spectral_radius(E_bar))
        words = max(abs(r - 1) for r in rho_r) <= 1e-9 and max(rho_e) < 1
        detail = f"m1_nilpotent={nilpotent} m0_spectrum={spectrum} max_rho_E={max(rho_e):.4f}"
        return nilpotent and spectrum and words, detail

    def delay_free_reduction(self, c):
        rng = np.random.default_rng(6)
        graphs = [self.g] + [random_strongly_connected(int(rng.integers(2, 9)), 0.3, rng) for _ in range(c["random_graphs"])]
        worst = 0.0
        for g in graphs:
            gamma = 0.5 * min_push_weight(build_push_weights(g))
            zero = make_schedule(DelaySpec(kind=DelayKind.ZERO), g)
            x0 = rng.uniform(0, g.n, size=g.n)
            a = run_rppac(g, zero, gamma, x0, ITERS)
            b = run_ppac(g, gamma, x0, ITERS)
            worst = max(worst, np.abs(a.x - b.x).max(), np.abs(a.s - b.s).max())
        return worst < c["tolerance"], f"graphs={len(graphs)} max_diff={worst:.2e}"

    def spectral_trends(self, c):
        by_delay = [row.mean_gap for row in mean_gap_vs_delay(self.g, GAMMA, [0, 2, 5]).rows]
        by_gamma = [row.mean_gap for row in sweep_gamma(self.g, 0, [0.01, 0.1]).rows]
        zero = make_schedule(DelaySpec(kind=DelayKind.ZERO), self.g)
        second = []
        for gamma in c["gammas"]:
            M = build_snapshot_matrices(self.g, snapshot_from_schedule(self.g, zero, 0), gamma).M
            moduli = eigen_moduli(M).moduli
            second.append(moduli[1] if abs(moduli[0] - 1) < 1e-9 else float("inf"))
        passed = by_delay[0] > by_delay[1] > by_delay[2] and by_gamma[1] > by_gamma[0] and max(second) < 1 - 1e-6
        detail = "gaps=" + ",".join(f"{v:.4f}" for v in by_delay) + f" max_second_modulus={max(second):.6f}"
        return passed, detail

    def gamma_ordering(self, c):
        finals = {gamma: self.final_mean_error(2, gamma) for gamma in c["gammas"]}
        passed = finals[0.1] < finals[0.01] and finals[0.1] < finals[0.3]
        return passed, " ".join(f"gamma={g}:{e:.2e}" for g, e in finals.items())

    def hand_traces(self, c):
        tol = c["tolerance"]
        pair = from_edge_list(2, [(1, 2), (2, 1)])
        zero = make_schedule(DelaySpec(kind=DelayKind.ZERO), pair)
        delayed = make_schedule(
            DelaySpec(kind=DelayKind.CONSTANT, tau_bar=1, per_link_bounds={(0, 1): 1, (1, 0): 0}), pair
        )
        a = run_rppac(pair, zero, GAMMA, [0.0, 2.0], 2)
        b = run_rppac(pair, delayed, GAMMA, [0.0, 2.0], 2)
        checks = [
            np.allclose(a.x[1], [1, 1], atol=tol) and np.allclose(a.s[1], [-1, 1], atol=tol),
            np.allclose(a.x[2], [0.9, 1.1], atol=tol) and np.allclose(a.s[2], [0.1, -0.1], atol=tol),
            np.allclose(b.x[1], [0, 1], atol=tol) and np.allclose(b.s[1], [0, 1], atol=tol),
            np.allclose(b.x[2], [1, 0.6], atol=tol) and np.allclose(b.s[2], [-1, 0.9], atol=tol),
            abs(b.inflight_surplus[2] - 0.5) <= tol,
        ]
        return all(checks), f"{sum(checks)}/{len(checks)} hand values"


def run_acceptance():
    """Run every criterion and write eval/acceptance_results.json"""
    configure_logging("WARNING")
    print("=" * 60)
    print("Delay-Robust Consensus Lab - Acceptance Run")
    print("=" * 60)

    criteria = load_acceptance_set()
    acceptance = Acceptance(criteria)
    print(f"\nLoaded {len(criteria)} criteria, graph n={acceptance.g.n} m={acceptance.g.m}\n")

    results: List[Dict] = []
    for name, criterion in criteria.items():
        started = time.perf_counter()
        passed, detail = getattr(acceptance, name)(criterion)
        elapsed = time.perf_counter() - started
        print(f"  {'PASS' if passed else 'FAIL'}  {criterion['id']}. {name}: {detail} ({elapsed:.1f}s)")
        results.append({"id": criterion["id"], "name": name, "passed": bool(passed), "detail": detail,
                        "seconds": round(elapsed, 2)})

    passed_count = sum(1 for r in results if r["passed"])
    print("\n" + "=" * 60)
    print("SUMMARY")
    print("=" * 60)
    print(f"Passed: {passed_count}/{len(results)}")

    out_path = os.path.join(EVAL_DIR, "acceptance_results.json")
    with open(out_path, "w") as f:
        json.dump({"passed": passed_count, "total": len(results), "results": results}, f, indent=2)
    print(f"\nDetailed results saved to: {out_path}")
    return 0 if passed_count == len(results) else 1


if __name__ == "__main__":
    sys.exit(run_acceptance())

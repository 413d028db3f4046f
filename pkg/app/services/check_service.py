import logging
from functools import cached_property
from typing import Callable, List, Tuple

import numpy as np
from pydantic import ValidationError

from app.errors import ConfigError
from app.models import CheckReport, CheckResult, DelayKind, DelaySpec
from app.services.augmented_service import (
    build_snapshot_matrices,
    run_matrix_form,
    snapshot_from_schedule,
    split_M0_M1,
    word_products,
)
from app.services.delay_service import make_schedule
from app.services.graph_service import (
    Digraph,
    build_pull_weights,
    build_push_weights,
    is_strongly_connected,
)
from app.services.protocol_service import run_ppac, run_rppac, validate_gamma
from app.services.spectral_service import eigenvalues, spectra_match, spectral_radius
from app.utils.db import db

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
MASS_TOL = 1e-9
ORACLE_TOL = 1e-10
REDUCTION_TOL = 1e-12
SPECTRUM_TOL = 1e-8


class CheckService:
    """Invariant suite behind the `check` command"""

    def __init__(self, g: Digraph, tau_bar: int, gamma: float, seed: int, iters: int, force_gamma: bool = False):
        self.g = g
        self.tau_bar = tau_bar
        self.gamma = gamma
        self.seed = seed
        self.iters = iters
        self.force_gamma = force_gamma
        validate_gamma(gamma, build_push_weights(g), force_gamma)
        try:
            spec = DelaySpec(kind=DelayKind.UNIFORM, tau_bar=tau_bar, seed=seed)
        except ValidationError as e:
            raise ConfigError(f"Invalid check parameters: {e}")
        self.schedule = make_schedule(spec, g)
        self.x0 = np.arange(1, g.n + 1, dtype=float)

    def run_suite(self) -> CheckReport:
        checks: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
            ("strong_connectivity", self.check_strong_connectivity),
            ("static_weights_stochastic", self.check_static_weights),
            ("augmented_stochastic", self.check_augmented_stochastic),
            ("mass_conservation", self.check_conservation),
            ("oracle_equivalence", self.check_oracle),
            ("delay_free_reduction", self.check_delay_free_reduction),
            ("m1_nilpotent", self.check_m1_nilpotent),
            ("m0_spectrum_union", self.check_m0_spectrum),
            ("word_products", self.check_word_products),
        ]
        results = []
        for name, check in checks:
            passed, detail = check()
            level = logging.INFO if passed else logging.ERROR
            logger.log(level, "check %s: %s %s", name, "ok" if passed else "FAILED", detail)
            results.append(CheckResult(name=name, passed=passed, detail=detail))

        db.increment_metric("total_checks")
        return CheckReport(passed=all(r.passed for r in results), results=results)

    def _realized(self):
        for k in range(self.iters):
            yield build_snapshot_matrices(self.g, snapshot_from_schedule(self.g, self.schedule, k), self.gamma)

    def check_strong_connectivity(self) -> Tuple[bool, str]:
        connected = is_strongly_connected(self.g)
        return connected, f"strongly_connected={str(connected).lower()}"

    def check_static_weights(self) -> Tuple[bool, str]:
        R = build_pull_weights(self.g)
        C = build_push_weights(self.g)
        row_dev = float(np.abs(R.sum(axis=1) - 1).max())
        col_dev = float(np.abs(C.sum(axis=0) - 1).max())
        diag_ok = bool((np.diag(R) > 0).all() and (np.diag(C) > 0).all())
        ok = row_dev <= STOCHASTIC_TOL and col_dev <= STOCHASTIC_TOL and diag_ok
        return ok, f"max_row_dev={row_dev:.2e} max_col_dev={col_dev:.2e}"

    def check_augmented_stochastic(self) -> Tuple[bool, str]:
        worst_row = worst_col = 0.0
        single_layer = True
        edges = list(self.g.edges)
        for sm in self._realized():
            worst_row = max(worst_row, float(np.abs(sm.R_tilde.sum(axis=1) - 1).max()))
            worst_col = max(worst_col, float(np.abs(sm.C_tilde.sum(axis=0) - 1).max()))
            for j, i in edges:
                if sum(layer[j, i] != 0 for layer in sm.C_layers) != 1:
                    single_layer = False
        ok = worst_row <= STOCHASTIC_TOL and worst_col <= STOCHASTIC_TOL and single_layer
        return ok, f"max_row_dev={worst_row:.2e} max_col_dev={worst_col:.2e} single_delay_layer={single_layer}"

    @cached_property
    def trajectories(self):
        """Node-level and matrix-form runs on the same schedule"""
        node = run_rppac(self.g, self.schedule, self.gamma, self.x0, self.iters, self.force_gamma)
        matrix = run_matrix_form(self.g, self.schedule, self.gamma, self.x0, self.iters, self.force_gamma)
        return node, matrix

    def check_conservation(self) -> Tuple[bool, str]:
        node, matrix = self.trajectories
        total = self.x0.sum()
        node_dev = float(np.abs(node.mass() - total).max())
        matrix_dev = float(np.abs(matrix.augmented_mass() - total).max())
        ok = node_dev < MASS_TOL and matrix_dev < MASS_TOL
        return ok, f"node_dev={node_dev:.2e} matrix_dev={matrix_dev:.2e}"

    def check_oracle(self) -> Tuple[bool, str]:
        node, matrix = self.trajectories
        dx = float(np.abs(node.x - matrix.x).max())
        ds = float(np.abs(node.s - matrix.s).max())
        return dx < ORACLE_TOL and ds < ORACLE_TOL, f"max_dx={dx:.2e} max_ds={ds:.2e}"

    def check_delay_free_reduction(self) -> Tuple[bool, str]:
        zero = make_schedule(DelaySpec(kind=DelayKind.ZERO), self.g)
        a = run_rppac(self.g, zero, self.gamma, self.x0, self.iters, self.force_gamma)
        b = run_ppac(self.g, self.gamma, self.x0, self.iters, self.force_gamma)
        diff = float(max(np.abs(a.x - b.x).max(), np.abs(a.s - b.s).max()))
        return diff < REDUCTION_TOL, f"max_diff={diff:.2e}"

    def check_m1_nilpotent(self) -> Tuple[bool, str]:
        worst = 0
        count = 0
        for sm in self._realized():
            _, M1 = split_M0_M1(sm)
            worst = max(worst, int(np.count_nonzero(M1 @ M1)))
            count += 1
        return worst == 0, f"snapshots={count} max_nonzero_of_M1_squared={worst}"

    def check_m0_spectrum(self) -> Tuple[bool, str]:
        ok = True
        count = delayed = 0
        for k, sm in enumerate(self._realized()):
            M0, _ = split_M0_M1(sm)
            union = np.concatenate([eigenvalues(sm.R_tilde), eigenvalues(sm.C_tilde - sm.H)])
            if not spectra_match(eigenvalues(M0), union, tol=SPECTRUM_TOL):
                logger.warning("M0 spectrum differs from its blocks at k=%d", k)
                ok = False
            count += 1
            delayed += int(any(layer.any() for layer in sm.R_layers[1:]))
        return ok, f"snapshots={count} delayed_snapshots={delayed}"

    def check_word_products(self) -> Tuple[bool, str]:
        beta = self.tau_bar + 1
        if self.iters < beta + 1:
            return True, "horizon shorter than one word"
        R_bar, E_bar = word_products(self.g, self.schedule, self.gamma, 0, beta)
        rho_r = spectral_radius(R_bar)
        rho_e = spectral_radius(E_bar)
        ok = abs(rho_r - 1) <= 1e-9 and rho_e < 1
        return ok, f"beta={beta} rho_R={rho_r:.12f} rho_E={rho_e:.6f}"

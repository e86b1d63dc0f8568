"""
Shared perturbation loop

Both construction loops follow the same pattern: build a complex from the
current positions, and while some vertex is bad, resample that vertex and
its neighbourhood I(p) from their picking balls and update the complex.
Subclasses provide the complex (build / update) and the badness test.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
from loguru import logger

from .complex import SimplicialComplex
from .errors import InfeasibleParametersError
from .geometry import LandmarkSet, WitnessGrid, sample_in_ball
from .params import FeasibilityReport, feasibility, lll_constants, perturbed_net_params


@dataclass
class EngineConfig:
    """
    Inputs of a perturbation run.

    max_rounds defaults to 50 * |L| when left unset. delta and theta_0 are
    practical overrides; in theory mode they are derived from the analysis.
    """

    rho: float
    max_rounds: Optional[int] = None
    rng_seed: int = 0
    delta: Optional[float] = None
    theta_0: Optional[float] = None
    practical_mode: bool = False
    workers: int = 1

    def rounds_for(self, n: int) -> int:
        rounds = 50 * max(n, 1) if self.max_rounds is None else self.max_rounds
        if rounds < 1:
            raise InfeasibleParametersError(f"max_rounds must be at least 1, got {rounds}")
        return rounds


@dataclass
class RunReport:
    rounds: int = 0
    points_resampled: int = 0
    bad_link_history: List[Tuple[int, int]] = field(default_factory=list)
    event_counts: Dict[int, int] = field(default_factory=dict)
    forced_events: int = 0
    terminated: bool = False
    wall_time: float = 0.0
    expected_rounds_bound: float = 0.0
    theory_certified: bool = False
    delta: Optional[float] = None
    delta_star: Optional[float] = None

    def to_json_dict(self) -> Dict:
        return {
            'rounds': self.rounds,
            'points_resampled': self.points_resampled,
            'bad_link_history': [list(entry) for entry in self.bad_link_history],
            'event_counts': {str(k): v for k, v in sorted(self.event_counts.items())},
            'forced_events': self.forced_events,
            'terminated': self.terminated,
            'wall_time': self.wall_time,
            'expected_rounds_bound': self.expected_rounds_bound,
            'theory_certified': self.theory_certified,
            'delta': self.delta,
            'delta_star': self.delta_star,
        }


def neighborhood_I(p_index: int, L: LandmarkSet) -> Set[int]:
    """Anchors within 5*lambda + 3*mu_bar*lambda/2 of anchor p (p included)"""
    radius = 5 * L.lambda_ + 3 * L.mu_bar * L.lambda_ / 2
    found = L.anchor_grid.query_sq(L.anchors[p_index], L.precision.sq_radius(radius))
    return set(found.tolist()) | {p_index}


def resample_event(p_index: int, L: LandmarkSet, rng: np.random.Generator) -> Tuple[LandmarkSet, List[int]]:
    """
    Redraw p and every q in I(p) uniformly from B(anchor_q, rho).

    Returns:
        Tuple[LandmarkSet, List[int]]: new landmark set and the resampled indices
    """
    moved = sorted(neighborhood_I(p_index, L))
    current = L.current.copy()
    for q in moved:
        current[q] = sample_in_ball(L.anchor(q), L.rho, rng, L.precision).as_array()
    return L.with_current(current), moved


class PerturbationEngine:
    """Base class for the resampling loops"""

    mode = 'witness'

    def __init__(self, L: LandmarkSet, W: WitnessGrid, config: EngineConfig):
        if W.precision != L.precision:
            raise ValueError("Landmarks and witness grid use different precision settings")
        self.config = config
        self.W = W
        self.epsilon = W.epsilon
        self.lambda_prime, self.mu_bar_prime = perturbed_net_params(L.lambda_, L.mu_bar, config.rho / L.lambda_)
        L.precision.check_resolution(self.epsilon)
        self.max_rounds = config.rounds_for(L.n)
        self.lll = lll_constants(L.mu_bar, L.d)
        self.feasibility = self._check_feasibility(L)
        # L' <- L
        self.L = L.with_current(L.anchors, rho=config.rho)
        self.rng = np.random.default_rng(config.rng_seed)
        self.K: Optional[SimplicialComplex] = None

    def _check_feasibility(self, L: LandmarkSet) -> FeasibilityReport:
        report = feasibility(L.lambda_, L.mu_bar, self.epsilon, self.config.rho, L.d, self.mode,
                             self.config.delta, self.config.theta_0)
        if report.feasible:
            return report
        names = ", ".join(c.name for c in report.failures())
        if not self.config.practical_mode:
            logger.error(f"Infeasible parameters for a certified run: {names}")
            raise InfeasibleParametersError(f"Parameters violate: {names} (use practical mode to override)")
        logger.warning(f"Practice mode: run is not theory-certified ({names})")
        return report

    # -- hooks -------------------------------------------------------------

    def build(self) -> SimplicialComplex:
        raise NotImplementedError

    def update(self, moved: List[int]) -> SimplicialComplex:
        raise NotImplementedError

    def forced_vertices(self) -> List[int]:
        """Landmarks whose event is active regardless of the complex (exact ties)"""
        return []

    def is_bad(self, p: int) -> bool:
        return not self.K.has_good_link(p, self.L.d)

    def finalize(self, report: RunReport) -> None:
        pass

    # -- loop --------------------------------------------------------------

    def find_event(self) -> Optional[Tuple[int, bool]]:
        """Lowest-index active event: (vertex, forced)"""
        forced = set(self.forced_vertices())
        for p in sorted(set(self.K.vertices) | forced):
            if p in forced:
                return p, True
            if self.is_bad(p):
                return p, False
        return None

    def run(self) -> Tuple[LandmarkSet, SimplicialComplex, RunReport]:
        started = time.perf_counter()
        report = RunReport(
            expected_rounds_bound=self.L.n / self.lll.Gamma if math.isfinite(self.lll.Gamma) else 0.0,
            theory_certified=self.feasibility.theory_certified and self.feasibility.feasible,
            delta=self.config.delta,
        )
        counts: Counter = Counter()
        self.K = self.build()

        while True:
            event = self.find_event()
            if event is None:
                report.terminated = True
                break
            if report.rounds >= self.max_rounds:
                logger.warning(f"Stopped after {report.rounds} rounds without termination")
                break
            p, forced = event
            self.L, moved = resample_event(p, self.L, self.rng)
            report.rounds += 1
            report.points_resampled += len(moved)
            report.bad_link_history.append((report.rounds, p))
            report.forced_events += int(forced)
            counts[p] += 1
            logger.debug(f"Round {report.rounds}: event at {p}{' (tie)' if forced else ''}, "
                         f"resampled {len(moved)} points")
            self.K = self.update(moved)

        report.event_counts = dict(counts)
        self.finalize(report)
        report.wall_time = time.perf_counter() - started
        logger.info(f"{type(self).__name__} finished: rounds={report.rounds}, "
                    f"resampled={report.points_resampled}, terminated={report.terminated}")
        return self.L, self.K, report

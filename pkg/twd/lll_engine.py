"""
Witness-complex perturbation loop

Resamples landmarks until every vertex of Wit(L', W) has a good link, at
which point the witness complex is the Delaunay triangulation of L'.
"""

from typing import List, Tuple

from loguru import logger

from .base_engine import EngineConfig, PerturbationEngine, RunReport, neighborhood_I, resample_event
from .complex import SimplicialComplex
from .geometry import LandmarkSet, WitnessGrid
from .witness import WitnessComplex

__all__ = [
    'EngineConfig',
    'RunReport',
    'WitnessEngine',
    'neighborhood_I',
    'resample_event',
    'run_algorithm1',
]


class WitnessEngine(PerturbationEngine):
    """Moser-Tardos loop over Wit(L', W), events are bad links and exact witness ties"""

    mode = 'witness'

    def build(self) -> SimplicialComplex:
        self.state = WitnessComplex(self.L, self.W, workers=self.config.workers)
        return self.state.build()

    def update(self, moved: List[int]) -> SimplicialComplex:
        return self.state.update(self.L, moved)

    def forced_vertices(self) -> List[int]:
        ties = self.state.tie_landmarks()
        if ties:
            logger.warning(f"Exact witness ties at landmarks {ties[:5]}{'...' if len(ties) > 5 else ''}")
        return ties


def run_algorithm1(L: LandmarkSet, W: WitnessGrid,
                   config: EngineConfig) -> Tuple[LandmarkSet, SimplicialComplex, RunReport]:
    """
    Delaunay triangulation of a perturbation of L from its witness complex.

    Args:
        L (LandmarkSet): the net; its current positions are reset to the anchors
        W (WitnessGrid): witness grid
        config (EngineConfig): picking radius, seed, round cap and mode

    Returns:
        Tuple[LandmarkSet, SimplicialComplex, RunReport]: perturbed set, complex and run statistics.
        When the round cap is hit the state is partial and report.terminated is False.
    """
    return WitnessEngine(L, W, config).run()

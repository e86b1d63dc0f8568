"""
Relaxed Delaunay complex Del^{2eps}_0(L', W)

A candidate d-simplex is searched with a pyramid of axis-aligned cells over
an enclosing hypercube that is snapped to the witness grid, so the leaf
cells are exactly grid cells and full-leaf-points are grid witnesses. A
cell is full when every vertex-pair bisector crosses it, decided from the
sign of squared-distance differences at the cell corners. A simplex is kept
when the traversal stays under the full-cell cap and some full-leaf-point
is a 2*eps-witness.

All predicates here are exact integer comparisons of squared distances,
with one guarded squaring step for additive offsets.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
from loguru import logger

from .base_engine import EngineConfig, PerturbationEngine, RunReport
from .complex import Simplex, SimplicialComplex, make_simplex
from .errors import LiftError
from .geometry import (
    LandmarkSet,
    Ordering,
    PrecisionConfig,
    TorusPoint,
    WitnessGrid,
    canonical_lift,
    order_sqrt_offset,
    pairwise_sq_dists,
    range_query,
    sq_dists_to,
)
from .params import delta_star, full_cell_caps, perturbed_net_params, practical_delta, theta_0

DIAMETER_CHUNK = 256


@dataclass(frozen=True)
class EnclosingBox:
    """Hypercube [origin, origin + side]^d in the lifted frame of a simplex"""

    origin: Tuple[int, ...]
    side: int
    levels: int
    grid_side: int

    def cell_side(self, level: int) -> int:
        return self.side >> level

    def cell_lo(self, level: int, index: Iterable[int]) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.int64) + np.asarray(index, dtype=np.int64) * self.cell_side(level)


@dataclass(frozen=True)
class PyramidCell:
    level: int
    index: Tuple[int, ...]
    simplex_ref: Simplex


@dataclass
class FullCellResult:
    simplex: Simplex
    leaf_centers: np.ndarray
    cells_visited: int
    cells_tested: int
    aborted: bool
    leaf_diameter_sq: int
    precision: PrecisionConfig

    @property
    def full_leaf_points(self) -> List[TorusPoint]:
        return [TorusPoint.from_array(c) for c in self.leaf_centers]

    @property
    def leaf_diameter(self) -> float:
        return self.leaf_diameter_sq ** 0.5 / self.precision.scale


def _pyramid_depth(lambda_prime: float, alpha: float, W: WitnessGrid) -> int:
    g = W.cell_side
    need = math.ceil(W.precision.fixed(4 * lambda_prime + 4 * alpha)) + 2 * g
    return (-(-need // g) - 1).bit_length()


def enclosing_box(sigma: Simplex, L: LandmarkSet, W: WitnessGrid, lambda_prime: float,
                  alpha: float, lifted: Optional[np.ndarray] = None) -> EnclosingBox:
    """
    Hypercube centered at the bounding-box center of the lifted simplex with side
    grid_side * 2^levels >= 4 lambda' + 4 alpha + 2 grid_side, origin on the grid.

    Raises:
        LiftError: if the simplex spans half the torus along some axis
    """
    if lifted is None:
        lifted = canonical_lift(sigma, L.current, L.precision)
    g = W.cell_side
    levels = _pyramid_depth(lambda_prime, alpha, W)
    side = g << levels
    center = (lifted.min(axis=0) + lifted.max(axis=0)) // 2
    origin = ((center - side // 2) // g) * g
    return EnclosingBox(tuple(origin.tolist()), side, levels, g)


_CORNERS: Dict[int, np.ndarray] = {}


def _corner_offsets(d: int) -> np.ndarray:
    if d not in _CORNERS:
        _CORNERS[d] = np.asarray(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
    return _CORNERS[d]


def _full_mask(lo: np.ndarray, side: int, lifted: np.ndarray) -> np.ndarray:
    """For each cell [lo, lo + side]^d: no bisector has all corners strictly on one side"""
    corners = lo[:, None, :] + _corner_offsets(lo.shape[1])[None, :, :] * side
    diff = corners[:, :, None, :] - lifted[None, None, :, :]
    sq = (diff * diff).sum(axis=-1)
    full = np.ones(len(lo), dtype=bool)
    for i, j in itertools.combinations(range(len(lifted)), 2):
        s = sq[:, :, i] - sq[:, :, j]
        full &= (s >= 0).any(axis=1) & (s <= 0).any(axis=1)
    return full


def is_full_cell(cell: PyramidCell, sigma: Simplex, L: LandmarkSet, box: EnclosingBox) -> bool:
    lifted = canonical_lift(sigma, L.current, L.precision)
    lo = box.cell_lo(cell.level, cell.index)[None, :]
    return bool(_full_mask(lo, box.cell_side(cell.level), lifted)[0])


def max_pairwise_sq(points: np.ndarray, precision: PrecisionConfig) -> int:
    best = 0
    for start in range(0, len(points), DIAMETER_CHUNK):
        block = pairwise_sq_dists(points[start:start + DIAMETER_CHUNK], points, precision)
        best = max(best, int(block.max()))
    return best


def traverse_pyramid(sigma: Simplex, lifted: np.ndarray, box: EnclosingBox, cap: Optional[int],
                     precision: PrecisionConfig) -> FullCellResult:
    """Level-by-level expansion of full cells; aborts once the total full-cell count exceeds cap"""
    d = lifted.shape[1]
    offsets = _corner_offsets(d)
    origin = np.asarray(box.origin, dtype=np.int64)
    index = np.zeros((1, d), dtype=np.int64)
    visited = tested = 0

    for level in range(box.levels + 1):
        side = box.cell_side(level)
        full = _full_mask(origin + index * side, side, lifted)
        tested += len(index)
        index = index[full]
        visited += len(index)
        if cap is not None and visited > cap:
            return FullCellResult(sigma, np.empty((0, d), dtype=np.int64), visited, tested, True, 0, precision)
        if not len(index) or level == box.levels:
            break
        index = (index[:, None, :] * 2 + offsets[None, :, :]).reshape(-1, d)

    leaves = origin + index * box.grid_side + box.grid_side // 2
    leaves = leaves & (precision.scale - 1)
    diameter_sq = max_pairwise_sq(leaves, precision) if len(leaves) > 1 else 0
    return FullCellResult(sigma, leaves, visited, tested, False, diameter_sq, precision)


def pyramid_full_cells(sigma: Simplex, L: LandmarkSet, W: WitnessGrid, cap: Optional[int],
                       lambda_prime: Optional[float] = None) -> FullCellResult:
    """
    Full leaf cells of sigma's pyramid.

    Args:
        sigma (Simplex): d-simplex of landmark indices
        L (LandmarkSet): current positions are used
        W (WitnessGrid): the grid the leaves align with
        cap (int, optional): abort once more than cap full cells were met
        lambda_prime (float, optional): defaults to lambda + rho of L

    Returns:
        FullCellResult: leaf centers (torus coordinates), counts and abort flag
    """
    if cap is not None and cap < 1:
        raise ValueError(f"Full-cell cap must be at least 1, got {cap}")
    lambda_prime = L.lambda_ + L.rho if lambda_prime is None else lambda_prime
    lifted = canonical_lift(sigma, L.current, L.precision)
    box = enclosing_box(sigma, L, W, lambda_prime, 2 * W.epsilon, lifted=lifted)
    return traverse_pyramid(sigma, lifted, box, cap, L.precision)


def _farthest_vertex_sq(w: np.ndarray, sigma: Simplex, L: LandmarkSet) -> int:
    return int(sq_dists_to(L.current[list(sigma)], w, L.precision).max())


def _nearest_other_sq(w: np.ndarray, sigma: Simplex, L: LandmarkSet, r_sq: int) -> Optional[int]:
    found = L.current_grid.query_sq(w, r_sq)
    others = np.setdiff1d(found, np.asarray(sigma, dtype=np.int64))
    if not len(others):
        return None
    return int(sq_dists_to(L.current[others], w, L.precision).min())


def alpha_witness_fixed(w: np.ndarray, sigma: Simplex, L: LandmarkSet, alpha: Fraction) -> bool:
    """||w - p|| <= ||w - q|| + alpha for every p in sigma and q outside, alpha in fixed-point units"""
    far = _farthest_vertex_sq(w, sigma, L)
    # only q strictly closer than the farthest vertex can violate
    near = _nearest_other_sq(w, sigma, L, far)
    if near is None:
        return True
    return order_sqrt_offset(far, near, alpha) != Ordering.GREATER


def protected_point_fixed(w: np.ndarray, sigma: Simplex, L: LandmarkSet, offset: Fraction, strict: bool) -> bool:
    """||w - q|| > ||w - p|| + offset for all p in sigma, q outside (>= when not strict)"""
    far = _farthest_vertex_sq(w, sigma, L)
    reach = math.isqrt(far) + math.ceil(offset) + 1
    near = _nearest_other_sq(w, sigma, L, reach * reach)
    if near is None:
        return True
    order = order_sqrt_offset(near, far, offset)
    return order == Ordering.GREATER if strict else order != Ordering.LESS


def is_alpha_witness(w: TorusPoint, sigma: Simplex, L: LandmarkSet, alpha: float) -> bool:
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return alpha_witness_fixed(w.as_array(), tuple(sigma), L, L.precision.fixed(alpha))


@dataclass
class SimplexCertificate:
    result: FullCellResult
    witnessed: bool
    small_leaves: Optional[bool] = None
    protected: Optional[bool] = None

    @property
    def accepted(self) -> bool:
        return not self.result.aborted and self.witnessed


class RelaxedDelaunay:
    """
    Del^{2eps}_0 of one landmark configuration, plus the check() conditions.

    Pyramid results depend on the vertex positions only and are kept in a cache
    that survives across configurations (pass it to `with_landmarks`); the
    witness and protection tests also see the other landmarks and are cached
    per configuration.
    """

    def __init__(self, L: LandmarkSet, W: WitnessGrid, theta0: float, delta: float,
                 mu_bar_prime: Optional[float] = None, lambda_prime: Optional[float] = None,
                 cap: Optional[int] = None, use_cap: bool = True, workers: int = 1,
                 pyramid_cache: Optional[Dict] = None):
        if W.precision != L.precision:
            raise ValueError("Landmarks and witness grid use different precision settings")
        if theta0 <= 0:
            raise ValueError(f"theta_0 must be positive, got {theta0}")
        self.L, self.W = L, W
        self.d = L.d
        self.precision = L.precision
        self.epsilon = W.epsilon
        if lambda_prime is None or mu_bar_prime is None:
            lp, mp = perturbed_net_params(L.lambda_, L.mu_bar, L.rho / L.lambda_)
            lambda_prime = lp if lambda_prime is None else lambda_prime
            mu_bar_prime = mp if mu_bar_prime is None else mu_bar_prime
        self.lambda_prime, self.mu_bar_prime = lambda_prime, mu_bar_prime
        self.theta0, self.delta = theta0, delta
        self.workers = max(1, int(workers))

        g = W.cell_side
        scale = self.precision.scale
        # 2*eps = 2*sqrt(d)*g in fixed units, rounded up
        self.alpha = Fraction(math.isqrt(4 * self.d * g * g - 1) + 1)
        excess = Fraction(delta) * scale - self.alpha
        self.strict_protection = excess > 0
        self.protection_offset = Fraction(math.ceil(excess)) if excess > 0 else Fraction(0)
        # (16 sqrt(d) eps / (theta_0 mu_bar'))^2 with eps^2 = d g^2 / scale^2
        self.leaf_bound_sq = Fraction(256 * self.d * self.d * g * g) / Fraction(theta0 * mu_bar_prime) ** 2
        reach = self.precision.fixed(2 * lambda_prime) + 4 * self.alpha / 2
        self.diameter_limit_sq = math.ceil(reach * reach) - 1

        if cap is None and use_cap:
            _, n0 = full_cell_caps(theta0, mu_bar_prime, lambda_prime, self.epsilon, self.d)
            cap = math.ceil(n0) if math.isfinite(n0) else None
        self.cap = max(cap, 1) if cap is not None else None
        self.pyramid_cache = {} if pyramid_cache is None else pyramid_cache
        self.certificates: Dict[Simplex, SimplexCertificate] = {}
        self._complex: Optional[SimplicialComplex] = None

    def with_landmarks(self, L: LandmarkSet) -> "RelaxedDelaunay":
        return RelaxedDelaunay(L, self.W, self.theta0, self.delta, self.mu_bar_prime, self.lambda_prime,
                               cap=self.cap, use_cap=self.cap is not None, workers=self.workers,
                               pyramid_cache=self.pyramid_cache)

    # -- candidates --------------------------------------------------------

    def neighbourhood(self, p: int) -> List[int]:
        """N(p') = L' within 2 lambda' + 4 eps of p'"""
        return range_query(self.L, self.L.point(p), 2 * self.lambda_prime + 4 * self.epsilon)

    def candidates(self) -> List[Simplex]:
        """All d-simplices sigma, p in sigma within N(p), with every vertex pair closer than 2 lambda' + 4 eps"""
        found: Set[Simplex] = set()
        for p in range(self.L.n):
            near = np.asarray(self.neighbourhood(p), dtype=np.int64)
            if len(near) < self.d + 1:
                continue
            close = pairwise_sq_dists(self.L.current[near], self.L.current[near], self.precision) <= self.diameter_limit_sq
            pos = {int(v): k for k, v in enumerate(near)}
            others = [int(v) for v in near if v != p and close[pos[p], pos[int(v)]]]
            for combo in itertools.combinations(others, self.d):
                if all(close[pos[a], pos[b]] for a, b in itertools.combinations(combo, 2)):
                    found.add(make_simplex((p,) + combo))
        return sorted(found)

    # -- per simplex -------------------------------------------------------

    def _key(self, sigma: Simplex):
        return sigma, self.L.current[list(sigma)].tobytes()

    def pyramid(self, sigma: Simplex) -> FullCellResult:
        key = self._key(sigma)
        if key not in self.pyramid_cache:
            lifted = canonical_lift(sigma, self.L.current, self.precision)
            box = enclosing_box(sigma, self.L, self.W, self.lambda_prime, 2 * self.epsilon, lifted=lifted)
            self.pyramid_cache[key] = traverse_pyramid(sigma, lifted, box, self.cap, self.precision)
        return self.pyramid_cache[key]

    def certify(self, sigma: Simplex) -> Optional[SimplexCertificate]:
        if sigma in self.certificates:
            return self.certificates[sigma]
        try:
            result = self.pyramid(sigma)
        except LiftError as e:
            logger.debug(f"Skipping candidate {sigma}: {str(e)}")
            return None
        witnessed = (not result.aborted) and any(
            alpha_witness_fixed(w, sigma, self.L, self.alpha) for w in result.leaf_centers
        )
        cert = SimplexCertificate(result, witnessed)
        self.certificates[sigma] = cert
        return cert

    def build(self) -> SimplicialComplex:
        candidates = self.candidates()
        if self.workers > 1:
            # fill the shared pyramid cache concurrently, certify sequentially
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(self._safe_pyramid, candidates))
        kept = [s for s in candidates if (c := self.certify(s)) is not None and c.accepted]
        self._complex = SimplicialComplex(kept)
        aborted = sum(1 for s in candidates if s in self.certificates and self.certificates[s].result.aborted)
        logger.info(f"Relaxed Delaunay complex: {len(candidates)} candidates, {len(kept)} kept, "
                    f"{aborted} over the full-cell cap")
        return self._complex

    def _safe_pyramid(self, sigma: Simplex) -> None:
        try:
            self.pyramid(sigma)
        except LiftError:
            pass

    @property
    def complex(self) -> SimplicialComplex:
        if self._complex is None:
            raise RuntimeError("Relaxed Delaunay complex has not been built")
        return self._complex

    def simplex_passes_check(self, sigma: Simplex) -> bool:
        cert = self.certify(sigma)
        if cert is None or cert.result.aborted:
            return False
        if cert.small_leaves is None:
            cert.small_leaves = cert.result.leaf_diameter_sq <= self.leaf_bound_sq
        if not cert.small_leaves:
            return False
        if cert.protected is None:
            cert.protected = any(
                protected_point_fixed(w, sigma, self.L, self.protection_offset, self.strict_protection)
                for w in cert.result.leaf_centers
            )
        return cert.protected

    def check_vertex(self, p: int) -> bool:
        """Every d-simplex of star(p) has clustered full leaves and a (delta - 2 eps)-protected full-leaf-point"""
        top = [s for s in self.complex.incident(p) if len(s) == self.d + 1]
        return all(self.simplex_passes_check(s) for s in top)


def build_rdc0(L: LandmarkSet, W: WitnessGrid, epsilon: float, theta0: float,
               delta: Optional[float] = None, cap: Optional[int] = None, use_cap: bool = True) -> SimplicialComplex:
    """
    Closure of the d-simplices kept by the full-cell search.

    epsilon must be the grid's cell diameter; delta only matters for check_vertex.
    """
    if not math.isclose(epsilon, W.epsilon):
        raise ValueError(f"epsilon={epsilon} differs from the grid cell diameter {W.epsilon}")
    return RelaxedDelaunay(L, W, theta0, 0.0 if delta is None else delta, cap=cap, use_cap=use_cap).build()


def check_vertex(p_index: int, K0: SimplicialComplex, L: LandmarkSet, W: WitnessGrid, delta: float,
                 epsilon: float, theta0: float, mu_bar_prime: float) -> bool:
    rdc = RelaxedDelaunay(L, W, theta0, delta, mu_bar_prime=mu_bar_prime)
    rdc._complex = K0
    return rdc.check_vertex(p_index)


class RelaxedDelaunayEngine(PerturbationEngine):
    """Perturbation loop over Del^{2eps}_0: events are bad links and failed checks"""

    mode = 'rdc'

    def __init__(self, L: LandmarkSet, W: WitnessGrid, config: EngineConfig):
        super().__init__(L, W, config)
        delta = config.delta
        if delta is None:
            delta = self.feasibility.delta
            if config.practical_mode and not self.feasibility.feasible:
                delta = practical_delta(L.lambda_, L.mu_bar, self.epsilon, config.rho, L.d)
                logger.warning(f"Practice mode: using protection target delta={delta:.4g}")
        theta0 = config.theta_0 if config.theta_0 is not None else theta_0(delta, self.lambda_prime, L.mu_bar, L.d)
        self.delta, self.theta0 = delta, theta0
        if 4 * 2 * self.epsilon + delta > self.lambda_prime:
            logger.warning(f"4*alpha + delta = {8 * self.epsilon + delta:.4g} exceeds lambda' = {self.lambda_prime:.4g}")
        self.rdc: Optional[RelaxedDelaunay] = None

    def build(self) -> SimplicialComplex:
        self.rdc = RelaxedDelaunay(self.L, self.W, self.theta0, self.delta, self.mu_bar_prime,
                                   self.lambda_prime, workers=self.config.workers)
        return self.rdc.build()

    def update(self, moved: List[int]) -> SimplicialComplex:
        self.rdc = self.rdc.with_landmarks(self.L)
        complex_ = self.rdc.build()
        # pyramids of the current candidates only; stale positions are dropped
        live = {self.rdc._key(s) for s in self.rdc.certificates}
        self.rdc.pyramid_cache = {k: v for k, v in self.rdc.pyramid_cache.items() if k in live}
        return complex_

    def is_bad(self, p: int) -> bool:
        return not self.K.has_good_link(p, self.L.d) or not self.rdc.check_vertex(p)

    def finalize(self, report: RunReport) -> None:
        report.delta = self.delta
        report.delta_star = delta_star(self.delta, self.epsilon, self.theta0, self.mu_bar_prime, self.L.d)


def run_algorithm2(L: LandmarkSet, W: WitnessGrid,
                   config: EngineConfig) -> Tuple[LandmarkSet, SimplicialComplex, float, RunReport]:
    """
    Protected Delaunay triangulation of a perturbation of L from Del^{2eps}_0.

    Returns:
        Tuple[LandmarkSet, SimplicialComplex, float, RunReport]: perturbed set, complex,
        delta_star and run statistics (terminated is False when the round cap was hit)
    """
    engine = RelaxedDelaunayEngine(L, W, config)
    L_out, K, report = engine.run()
    return L_out, K, report.delta_star, report

"""
Torus geometry

Exact fixed-point points of the flat torus T^d = R^d / Z^d. A coordinate is
stored as an integer in [0, 2^Q), read as coordinate * 2^Q, so every
distance comparison used by the construction algorithms is an exact integer
polynomial of degree 2 in the input coordinates.

Also holds the landmark container, the regular witness grid, the wrapped
bucket grid used for range queries, net generation / validation and
picking-ball sampling.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .errors import (
    InfeasibleParametersError,
    InternalError,
    LiftError,
    SparsityUndefinedError,
)

DEFAULT_PRECISION_BITS = 20
INT64_MAX = 2**63 - 1
SAMPLING_ITERATION_CAP = 10**6
PAIRWISE_CHUNK = 4096

Real = Union[int, float, Fraction]


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1

    @classmethod
    def of(cls, value: int) -> "Ordering":
        if value < 0:
            return cls.LESS
        if value > 0:
            return cls.GREATER
        return cls.EQUAL


@dataclass(frozen=True)
class PrecisionConfig:
    """Dimension d and precision exponent Q shared by all points of a run"""

    d: int
    Q: int = DEFAULT_PRECISION_BITS

    def __post_init__(self):
        if self.d < 2:
            raise InfeasibleParametersError(f"Dimension must be at least 2, got {self.d}")
        if self.Q < 2:
            raise InfeasibleParametersError(f"Precision exponent must be at least 2, got {self.Q}")
        # pyramid corners in a lifted frame sit up to 2^(Q+1) away from a vertex
        if self.d * 2 ** (2 * self.Q + 2) > INT64_MAX:
            raise InfeasibleParametersError(
                f"d={self.d}, Q={self.Q}: squared distances overflow 64-bit integers"
            )

    @property
    def scale(self) -> int:
        return 1 << self.Q

    @property
    def half(self) -> int:
        return 1 << (self.Q - 1)

    def quantize(self, x: float) -> int:
        return int(round(x * self.scale)) % self.scale

    def point(self, coords: Sequence[float]) -> "TorusPoint":
        """Quantize real coordinates (torus units) into a TorusPoint"""
        if len(coords) != self.d:
            raise ValueError(f"Expected {self.d} coordinates, got {len(coords)}")
        return TorusPoint(tuple(self.quantize(float(c)) for c in coords))

    def validate(self, point: "TorusPoint") -> "TorusPoint":
        if len(point.coords) != self.d:
            raise ValueError(f"Expected {self.d} coordinates, got {len(point.coords)}")
        for c in point.coords:
            if not 0 <= c < self.scale:
                raise ValueError(f"Coordinate {c} outside [0, 2^{self.Q})")
        return point

    def to_float(self, point: "TorusPoint") -> Tuple[float, ...]:
        return tuple(c / self.scale for c in point.coords)

    def fixed(self, length: Real) -> Fraction:
        """Exact fixed-point value of a length given in torus units"""
        return Fraction(length) * self.scale

    def sq_radius(self, r: Real) -> int:
        """Largest integer squared distance that is still <= r"""
        return math.floor(self.fixed(r) ** 2)

    def sq_radius_above(self, r: Real) -> int:
        """Smallest integer squared distance that is >= r"""
        return math.ceil(self.fixed(r) ** 2)

    def resolution(self) -> float:
        """Worst-case quantization error of a point, in torus units"""
        return math.sqrt(self.d) / (2 * self.scale)

    def check_resolution(self, epsilon: float) -> None:
        if self.resolution() > epsilon / 100:
            raise InfeasibleParametersError(
                f"Quantization error {self.resolution():.3e} exceeds epsilon/100 = {epsilon / 100:.3e}; "
                f"raise the precision exponent Q={self.Q}"
            )


@dataclass(frozen=True)
class TorusPoint:
    coords: Tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=np.int64)

    @classmethod
    def from_array(cls, values) -> "TorusPoint":
        return cls(tuple(int(v) for v in values))


# ---------------------------------------------------------------------------
# Metric and predicates
# ---------------------------------------------------------------------------

def wrap_diff(delta: np.ndarray, precision: PrecisionConfig) -> np.ndarray:
    """Map integer differences to their representative in [-2^(Q-1), 2^(Q-1))"""
    return ((delta + precision.half) & (precision.scale - 1)) - precision.half


def torus_diff(p: TorusPoint, q: TorusPoint, precision: PrecisionConfig) -> Tuple[int, ...]:
    full, half = precision.scale, precision.half
    return tuple(((a - b + half) % full) - half for a, b in zip(p.coords, q.coords))


def sq_dist(p: TorusPoint, q: TorusPoint, precision: PrecisionConfig) -> int:
    return sum(c * c for c in torus_diff(p, q, precision))


def sq_dists_to(points: np.ndarray, center: np.ndarray, precision: PrecisionConfig) -> np.ndarray:
    """Exact squared torus distances from each row of `points` to `center`"""
    diff = wrap_diff(points - center, precision)
    return (diff * diff).sum(axis=-1)


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray, precision: PrecisionConfig) -> np.ndarray:
    diff = wrap_diff(a[:, None, :] - b[None, :, :], precision)
    return (diff * diff).sum(axis=-1)


def nearest_sq_dists(points: np.ndarray, sites: np.ndarray, precision: PrecisionConfig,
                     chunk: int = PAIRWISE_CHUNK) -> np.ndarray:
    """Squared distance from every point to its nearest site (chunked brute force)"""
    out = np.empty(len(points), dtype=np.int64)
    for start in range(0, len(points), chunk):
        block = pairwise_sq_dists(points[start:start + chunk], sites, precision)
        out[start:start + chunk] = block.min(axis=1)
    return out


def cmp_dist(x: TorusPoint, p: TorusPoint, q: TorusPoint, precision: PrecisionConfig) -> Ordering:
    """Order of ||x - p|| against ||x - q||"""
    return Ordering.of(sq_dist(x, p, precision) - sq_dist(x, q, precision))


def order_sqrt_offset(a_sq: int, b_sq: int, offset: Fraction) -> Ordering:
    """
    Exact order of sqrt(a_sq) against sqrt(b_sq) + offset.

    Args:
        a_sq (int): left squared length
        b_sq (int): right squared length
        offset (Fraction): non-negative offset, same fixed-point unit as the lengths

    Returns:
        Ordering: LESS, EQUAL or GREATER
    """
    if offset < 0:
        raise ValueError(f"Offset must be non-negative, got {offset}")
    num, den = offset.numerator, offset.denominator
    a2 = int(a_sq) * den * den
    b2 = int(b_sq) * den * den
    t = a2 - b2 - num * num
    if t < 0:
        return Ordering.LESS
    return Ordering.of(t * t - 4 * num * num * b2)


def cmp_dist_offset(x: TorusPoint, p: TorusPoint, q: TorusPoint, a: Real,
                    precision: PrecisionConfig) -> Ordering:
    """Order of ||x - p|| against ||x - q|| + a, with a >= 0 in torus units"""
    return order_sqrt_offset(sq_dist(x, p, precision), sq_dist(x, q, precision), precision.fixed(a))


def canonical_lift(indices: Sequence[int], points: np.ndarray, precision: PrecisionConfig) -> np.ndarray:
    """
    Unwrap the points `indices` into one chart of R^d, relative to the first one.

    Raises:
        LiftError: if the points span half the torus or more along some axis
    """
    base = points[indices[0]]
    lifted = base + wrap_diff(points[list(indices)] - base, precision)
    spread = lifted.max(axis=0) - lifted.min(axis=0)
    if (spread >= precision.half).any():
        raise LiftError(f"Simplex {tuple(indices)} spans half the torus; no canonical lift")
    return lifted


# ---------------------------------------------------------------------------
# Spatial structures
# ---------------------------------------------------------------------------

class BucketGrid:
    """Wrapped uniform bucket grid over a fixed array of torus points"""

    MAX_CELLS_PER_AXIS = 256

    def __init__(self, points: np.ndarray, cell_side: float, precision: PrecisionConfig):
        self.precision = precision
        self.points = points
        per_axis = int(1.0 / cell_side) if cell_side > 0 else 1
        self.m = max(1, min(per_axis, self.MAX_CELLS_PER_AXIS))
        self.min_side = precision.scale // self.m

        buckets: Dict[Tuple[int, ...], List[int]] = defaultdict(list)
        for i, cell in enumerate(map(tuple, self.cells_of(points).tolist())):
            buckets[cell].append(i)
        self._buckets = {c: np.asarray(ix, dtype=np.int64) for c, ix in buckets.items()}
        self._all = np.arange(len(points), dtype=np.int64)

    def cells_of(self, coords: np.ndarray) -> np.ndarray:
        return (coords * self.m) >> self.precision.Q

    def reach(self, r_sq: int) -> int:
        """Block half-width (in cells) that contains the closed ball of squared radius r_sq"""
        r_upper = math.isqrt(max(r_sq, 0)) + 1
        return max(1, -(-r_upper // self.min_side))

    def covers_all(self, k: int) -> bool:
        return 2 * k + 1 >= self.m

    def block(self, cell: Tuple[int, ...], k: int) -> np.ndarray:
        """Indices of the points in the (2k+1)^d block of cells around `cell`"""
        if self.covers_all(k):
            return self._all
        parts = []
        for offset in itertools.product(range(-k, k + 1), repeat=len(cell)):
            key = tuple((c + o) % self.m for c, o in zip(cell, offset))
            if key in self._buckets:
                parts.append(self._buckets[key])
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(parts)

    def query_sq(self, center: np.ndarray, r_sq: int) -> np.ndarray:
        """Sorted indices of points within squared distance r_sq of center (closed ball)"""
        r_sq = min(int(r_sq), self.precision.d * self.precision.scale ** 2)
        cell = tuple(self.cells_of(center).tolist())
        candidates = self.block(cell, self.reach(r_sq))
        if len(candidates) == 0:
            return candidates
        inside = sq_dists_to(self.points[candidates], center, self.precision) <= r_sq
        return np.sort(candidates[inside])


@dataclass(frozen=True)
class WitnessGrid:
    """Centers of the regular grid with 2^level cells per axis"""

    level: int
    precision: PrecisionConfig

    def __post_init__(self):
        if not 1 <= self.level <= self.precision.Q - 1:
            raise InfeasibleParametersError(
                f"Grid level {self.level} must lie in [1, {self.precision.Q - 1}] for Q={self.precision.Q}"
            )

    @classmethod
    def from_epsilon(cls, epsilon: float, precision: PrecisionConfig) -> "WitnessGrid":
        """Coarsest grid whose cell diameter is at most epsilon"""
        level = max(1, math.ceil(math.log2(math.sqrt(precision.d) / epsilon)))
        return cls(level, precision)

    @property
    def d(self) -> int:
        return self.precision.d

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.level

    @property
    def cell_side(self) -> int:
        return 1 << (self.precision.Q - self.level)

    @property
    def epsilon(self) -> float:
        return math.sqrt(self.d) / self.cells_per_axis

    @property
    def size(self) -> int:
        return self.cells_per_axis ** self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cells_per_axis,) * self.d

    def centers(self, flat: Optional[np.ndarray] = None) -> np.ndarray:
        if flat is None:
            flat = np.arange(self.size, dtype=np.int64)
        multi = np.stack(np.unravel_index(flat, self.shape), axis=-1).astype(np.int64)
        return multi * self.cell_side + self.cell_side // 2

    def center(self, flat: int) -> TorusPoint:
        return TorusPoint.from_array(self.centers(np.asarray([flat]))[0])

    def flat_of(self, coords: np.ndarray) -> np.ndarray:
        """Flat index of the cell containing each (wrapped) fixed-point coordinate row"""
        multi = (np.asarray(coords, dtype=np.int64) & (self.precision.scale - 1)) >> (self.precision.Q - self.level)
        return np.ravel_multi_index(tuple(multi.T), self.shape)

    def iter_blocks(self, chunk: int = 1 << 16) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        for start in range(0, self.size, chunk):
            flat = np.arange(start, min(start + chunk, self.size), dtype=np.int64)
            yield flat, self.centers(flat)

    def centers_in_box(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Flat indices of grid centers inside the closed box [lo, hi] (unwrapped, wraps on the torus)"""
        side, half = self.cell_side, self.cell_side // 2
        axes = []
        for a in range(self.d):
            first = -(-(int(lo[a]) - half) // side)
            last = (int(hi[a]) - half) // side
            if last - first + 1 >= self.cells_per_axis:
                axes.append(np.arange(self.cells_per_axis, dtype=np.int64))
            else:
                axes.append(np.unique(np.arange(first, last + 1, dtype=np.int64) % self.cells_per_axis))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.ravel_multi_index(tuple(m.ravel() for m in mesh), self.shape)


class LandmarkSet:
    """
    Landmarks L (anchors) and their perturbed copy L' (current), same indexing.

    Instances are treated as immutable: `with_current` returns a new set and
    the bucket grids are built lazily per instance.
    """

    def __init__(self, anchors: np.ndarray, lambda_: float, mu_bar: float,
                 precision: PrecisionConfig, current: Optional[np.ndarray] = None, rho: float = 0.0):
        anchors = np.array(anchors, dtype=np.int64, copy=True)
        current = anchors.copy() if current is None else np.array(current, dtype=np.int64, copy=True)
        if anchors.ndim != 2 or anchors.shape[1] != precision.d:
            raise ValueError(f"Anchors must have shape (n, {precision.d}), got {anchors.shape}")
        if current.shape != anchors.shape:
            raise ValueError("Anchor and current arrays must have the same shape")
        if ((anchors < 0) | (anchors >= precision.scale)).any() or ((current < 0) | (current >= precision.scale)).any():
            raise ValueError(f"Coordinates must lie in [0, 2^{precision.Q})")
        if not 0 < lambda_ <= 0.25:
            raise InfeasibleParametersError(f"Sampling radius must lie in (0, 1/4], got {lambda_}")
        if not 0 < mu_bar <= 2:
            raise InfeasibleParametersError(f"Sparsity ratio must lie in (0, 2], got {mu_bar}")
        if rho < 0:
            raise ValueError(f"Picking radius must be non-negative, got {rho}")
        moved = sq_dists_to(current, anchors, precision) if len(anchors) else np.empty(0, dtype=np.int64)
        if len(moved) and moved.max() > precision.sq_radius(rho):
            raise ValueError("A current position lies outside its picking ball")

        anchors.setflags(write=False)
        current.setflags(write=False)
        self.anchors = anchors
        self.current = current
        self.lambda_ = float(lambda_)
        self.mu_bar = float(mu_bar)
        self.rho = float(rho)
        self.precision = precision

    @property
    def n(self) -> int:
        return len(self.anchors)

    @property
    def d(self) -> int:
        return self.precision.d

    def __len__(self) -> int:
        return self.n

    def point(self, i: int) -> TorusPoint:
        return TorusPoint.from_array(self.current[i])

    def anchor(self, i: int) -> TorusPoint:
        return TorusPoint.from_array(self.anchors[i])

    def with_current(self, current: np.ndarray, rho: Optional[float] = None) -> "LandmarkSet":
        return LandmarkSet(self.anchors, self.lambda_, self.mu_bar, self.precision,
                           current=current, rho=self.rho if rho is None else rho)

    @cached_property
    def current_grid(self) -> BucketGrid:
        return BucketGrid(self.current, self.mu_bar * self.lambda_, self.precision)

    @cached_property
    def anchor_grid(self) -> BucketGrid:
        return BucketGrid(self.anchors, self.mu_bar * self.lambda_, self.precision)


def range_query(L: LandmarkSet, center: TorusPoint, r: float) -> List[int]:
    """Indices i with ||current[i] - center|| <= r, sorted"""
    if r < 0:
        raise ValueError(f"Query radius must be non-negative, got {r}")
    return L.current_grid.query_sq(center.as_array(), L.precision.sq_radius(r)).tolist()


# ---------------------------------------------------------------------------
# Nets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetEstimate:
    lambda_hat: float
    mu_bar_hat: float
    min_distance: float
    flags: Tuple[str, ...] = ()

    def __iter__(self):
        return iter((self.lambda_hat, self.mu_bar_hat))


class _DartBoard:
    """Growing point set with an exact separation test, bucketed by cell"""

    def __init__(self, separation_sq: int, precision: PrecisionConfig, separation: float):
        self.precision = precision
        self.separation_sq = separation_sq
        self.m = max(1, min(int(1.0 / separation), BucketGrid.MAX_CELLS_PER_AXIS)) if separation > 0 else 1
        min_side = precision.scale // self.m
        self.k = max(1, -(-(math.isqrt(separation_sq) + 1) // min_side))
        self.cells: Dict[Tuple[int, ...], List[np.ndarray]] = defaultdict(list)
        self.points: List[np.ndarray] = []

    def _cell(self, p: np.ndarray) -> Tuple[int, ...]:
        return tuple(((p * self.m) >> self.precision.Q).tolist())

    def _neighbours(self, p: np.ndarray) -> List[np.ndarray]:
        if 2 * self.k + 1 >= self.m:
            return self.points
        cell = self._cell(p)
        found = []
        for offset in itertools.product(range(-self.k, self.k + 1), repeat=len(cell)):
            found.extend(self.cells.get(tuple((c + o) % self.m for c, o in zip(cell, offset)), ()))
        return found

    def accepts(self, p: np.ndarray) -> bool:
        near = self._neighbours(p)
        if not near:
            return True
        return int(sq_dists_to(np.asarray(near), p, self.precision).min()) >= self.separation_sq

    def add(self, p: np.ndarray) -> None:
        self.points.append(p)
        self.cells[self._cell(p)].append(p)


def _fill_grid(lambda_: float, precision: PrecisionConfig, max_cells: int = 1 << 21) -> WitnessGrid:
    level = max(1, math.ceil(math.log2(32 * math.sqrt(precision.d) / lambda_)))
    level = min(level, max(1, int(math.log2(max_cells)) // precision.d), precision.Q - 1)
    return WitnessGrid(level, precision)


def generate_net(lambda_: float, mu_bar: float, seed: int, precision: PrecisionConfig,
                 max_rejections: int = 2000, max_attempts: int = 16,
                 grid: Optional[WitnessGrid] = None) -> LandmarkSet:
    """
    Generate a (lambda, mu_bar)-net of T^d.

    Dart throwing with exact rejection at spacing mu_bar * lambda until
    `max_rejections` consecutive darts fail, then farthest-point completion
    over the centers of a validation grid until every center is certified to
    lie within lambda (distance + epsilon/2). An attempt that cannot certify
    coverage without breaking the spacing is restarted from a derived seed.

    Args:
        lambda_ (float): sampling radius, at most 1/4
        mu_bar (float): sparsity ratio in (0, 2]
        seed (int): random seed
        precision (PrecisionConfig): dimension and fixed-point precision
        max_rejections (int): consecutive rejections that end dart throwing
        max_attempts (int): restarts allowed before giving up
        grid (WitnessGrid, optional): validation grid, finer is stricter

    Returns:
        LandmarkSet: the net, with current == anchors

    Raises:
        InfeasibleParametersError: if the parameters cannot be met
    """
    if not 0 < lambda_ <= 0.25:
        raise InfeasibleParametersError(f"Sampling radius must lie in (0, 1/4], got {lambda_}")
    if not 0 < mu_bar <= 2:
        raise InfeasibleParametersError(f"Sparsity ratio must lie in (0, 2], got {mu_bar}")
    separation = mu_bar * lambda_
    if separation > math.sqrt(precision.d) / 2:
        raise InfeasibleParametersError(f"Spacing {separation} exceeds the torus diameter")

    grid = grid or _fill_grid(lambda_, precision)
    separation_sq = precision.sq_radius_above(separation)
    coverage_sq = precision.sq_radius(lambda_ - grid.epsilon / 2) if lambda_ > grid.epsilon / 2 else -1
    centers = grid.centers()

    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        board = _DartBoard(separation_sq, precision, separation)

        rejected = 0
        while rejected < max_rejections:
            dart = rng.integers(0, precision.scale, size=precision.d, dtype=np.int64)
            if board.accepts(dart):
                board.add(dart)
                rejected = 0
            else:
                rejected += 1

        nearest = nearest_sq_dists(centers, np.asarray(board.points), precision)
        certified = False
        while True:
            j = int(nearest.argmax())
            if nearest[j] <= coverage_sq:
                certified = True
                break
            if nearest[j] < separation_sq:
                break
            board.add(centers[j].copy())
            nearest = np.minimum(nearest, sq_dists_to(centers, centers[j], precision))

        if certified:
            logger.info(f"Generated ({lambda_}, {mu_bar})-net with {len(board.points)} points "
                        f"(d={precision.d}, attempt {attempt + 1})")
            return LandmarkSet(np.asarray(board.points), lambda_, mu_bar, precision)
        logger.debug(f"Net attempt {attempt + 1} could not certify coverage; retrying")

    raise InfeasibleParametersError(
        f"Could not build a ({lambda_}, {mu_bar})-net in {max_attempts} attempts"
    )


def estimate_net_params(L: LandmarkSet, W: WitnessGrid) -> NetEstimate:
    """
    Certified net parameters of the current positions.

    mu_bar_hat * lambda_hat is the exact minimum pairwise distance; lambda_hat is
    the largest grid-center-to-nearest-landmark distance plus epsilon/2.
    """
    if L.n < 2:
        raise SparsityUndefinedError(f"Sparsity needs at least two landmarks, got {L.n}")
    precision = L.precision
    pts = L.current

    min_sq = None
    for start in range(0, L.n, PAIRWISE_CHUNK):
        block = pairwise_sq_dists(pts[start:start + PAIRWISE_CHUNK], pts, precision)
        rows = np.arange(len(block))
        block[rows, rows + start] = np.iinfo(np.int64).max
        m = int(block.min())
        min_sq = m if min_sq is None else min(min_sq, m)

    max_sq = 0
    for _, centers in W.iter_blocks():
        max_sq = max(max_sq, int(nearest_sq_dists(centers, pts, precision).max()))

    min_distance = math.sqrt(min_sq) / precision.scale
    lambda_hat = math.sqrt(max_sq) / precision.scale + W.epsilon / 2
    mu_bar_hat = min_distance / lambda_hat

    flags = []
    if lambda_hat > 0.25:
        flags.append("lambda_hat exceeds 1/4")
    if mu_bar_hat > 2:
        flags.append("mu_bar_hat exceeds 2")
    if min_sq == 0:
        flags.append("duplicate landmarks")
    for flag in flags:
        logger.warning(f"Net estimate: {flag}")
    return NetEstimate(lambda_hat, mu_bar_hat, min_distance, tuple(flags))


def sample_in_ball(center: TorusPoint, rho: float, rng: np.random.Generator,
                   precision: PrecisionConfig) -> TorusPoint:
    """Uniform lattice point of the closed ball B(center, rho), by rejection in the bounding cube"""
    if not 0 <= rho < 0.25:
        raise ValueError(f"Picking radius must lie in [0, 1/4), got {rho}")
    r_int = math.floor(precision.fixed(rho))
    if r_int == 0:
        return center
    r_sq = precision.sq_radius(rho)
    base = center.as_array()
    for _ in range(SAMPLING_ITERATION_CAP):
        offset = rng.integers(-r_int, r_int + 1, size=precision.d, dtype=np.int64)
        if int((offset * offset).sum()) <= r_sq:
            return TorusPoint.from_array((base + offset) & (precision.scale - 1))
    raise InternalError(f"Ball sampling exceeded {SAMPLING_ITERATION_CAP} iterations")

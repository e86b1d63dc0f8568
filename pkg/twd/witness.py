"""
Witness complex Wit(L', W)

For every grid witness w the landmarks are ranked by exact squared distance.
A simplex is witnessed by w when each of its vertices is at least as close
to w as every non-vertex. Wit(L', W) keeps a k-simplex iff it is witnessed
and all of its (k-1)-faces are kept.

Rows without ties are handled as arrays (the witnessed simplices are the
prefixes of the ranking); rows with a tie in the retained ranking are
recomputed exactly and expanded over the tie group.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, groupby
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
from loguru import logger

from .complex import Simplex, SimplicialComplex, facets
from .geometry import LandmarkSet, TorusPoint, WitnessGrid, sq_dists_to

NO_LANDMARK = -1
FAR = np.iinfo(np.int64).max


@dataclass(frozen=True)
class WitnessRecord:
    """Nearest landmarks of one witness, grouped into tie groups in distance order"""

    witness: TorusPoint
    groups: Tuple[Tuple[int, ...], ...]
    sq_dists: Tuple[int, ...]
    horizon: int

    @property
    def ordered_landmarks(self) -> List[int]:
        return [i for g in self.groups for i in g]

    def has_tie(self, k_max: Optional[int] = None) -> bool:
        """True if some tie group starts within the first k_max+1 ranks"""
        rank = 0
        for g in self.groups:
            if k_max is not None and rank > k_max:
                return False
            if len(g) > 1:
                return True
            rank += len(g)
        return False

    def tie_groups(self, k_max: int) -> List[Tuple[int, ...]]:
        found, rank = [], 0
        for g in self.groups:
            if rank > k_max:
                break
            if len(g) > 1:
                found.append(g)
            rank += len(g)
        return found


def make_record(witness: TorusPoint, indices: np.ndarray, sq: np.ndarray, horizon: int) -> WitnessRecord:
    """Group an exact candidate ranking, keeping `horizon` entries plus the whole boundary group"""
    order = sorted(zip(sq.tolist(), indices.tolist()))
    if len(order) > horizon:
        cut = horizon
        while cut < len(order) and order[cut][0] == order[horizon - 1][0]:
            cut += 1
        order = order[:cut]
    groups, dists = [], []
    for dist, members in groupby(order, key=lambda pair: pair[0]):
        groups.append(tuple(i for _, i in members))
        dists.append(dist)
    return WitnessRecord(witness, tuple(groups), tuple(dists), horizon)


def witnessed_simplices(record: WitnessRecord, k_max: int) -> List[Simplex]:
    """
    Simplices with at most k_max+1 vertices witnessed by the record's witness.

    Each is a union of complete leading tie groups plus a non-empty subset of
    the next group. Without ties these are exactly the prefixes.
    """
    found: List[Simplex] = []
    prefix: Tuple[int, ...] = ()
    for group in record.groups:
        room = k_max + 1 - len(prefix)
        if room <= 0:
            break
        for t in range(1, min(room, len(group)) + 1):
            for subset in combinations(group, t):
                found.append(tuple(sorted(prefix + subset)))
        prefix = prefix + group
    return found


class WitnessComplex:
    """
    Incrementally maintained Wit(L', W).

    Per witness row the table keeps the horizon+1 nearest landmarks, so that a
    tie right after the horizon is still visible. `counts` holds, per simplex,
    the number of witnesses that witness it.
    """

    def __init__(self, L: LandmarkSet, W: WitnessGrid, k_max: Optional[int] = None, workers: int = 1):
        if W.precision != L.precision:
            raise ValueError("Landmarks and witness grid use different precision settings")
        self.L = L
        self.W = W
        self.k_max = L.d if k_max is None else k_max
        if not 0 <= self.k_max <= L.d:
            raise ValueError(f"k_max must lie in [0, {L.d}], got {self.k_max}")
        self.workers = max(1, int(workers))
        self.horizon = min(L.d + 2, L.n)
        self.order: Optional[np.ndarray] = None
        self.sq: Optional[np.ndarray] = None
        self.tied: Dict[int, WitnessRecord] = {}
        self.counts: Counter = Counter()
        self._complex: Optional[SimplicialComplex] = None

    # -- nearest tables ----------------------------------------------------

    def _scan_cell(self, cell: Tuple[int, ...], centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grid = self.L.current_grid
        width = self.horizon + 1
        order = np.full((len(centers), width), NO_LANDMARK, dtype=np.int64)
        sq = np.full((len(centers), width), FAR, dtype=np.int64)
        pending = np.arange(len(centers))
        k = 1
        while len(pending):
            candidates = np.sort(grid.block(cell, k))
            exhaustive = grid.covers_all(k)
            if len(candidates) >= width or exhaustive:
                block = centers[pending]
                diff = block[:, None, :] - self.L.current[candidates][None, :, :]
                diff = ((diff + self.L.precision.half) & (self.L.precision.scale - 1)) - self.L.precision.half
                dist = (diff * diff).sum(axis=-1)
                # stable sort: ties ranked by landmark index
                rank = np.argsort(dist, axis=1, kind="stable")[:, :width]
                top_sq = np.take_along_axis(dist, rank, axis=1)
                top_ix = candidates[rank]
                if exhaustive:
                    done = np.ones(len(pending), dtype=bool)
                else:
                    done = top_sq[:, -1] < (k * grid.min_side) ** 2
                got = top_sq.shape[1]
                order[pending[done], :got] = top_ix[done]
                sq[pending[done], :got] = top_sq[done]
                pending = pending[~done]
            k += 1
        return order, sq

    def _scan(self, flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Nearest horizon+1 landmarks for the witnesses `flat`"""
        centers = self.W.centers(flat)
        cells = self.L.current_grid.cells_of(centers)
        keys, inverse = np.unique(cells, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        members = [np.flatnonzero(inverse == j) for j in range(len(keys))]
        jobs = [(tuple(keys[j].tolist()), centers[members[j]]) for j in range(len(keys))]

        if self.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(lambda job: self._scan_cell(*job), jobs))
        else:
            results = [self._scan_cell(*job) for job in jobs]

        width = self.horizon + 1
        order = np.empty((len(flat), width), dtype=np.int64)
        sq = np.empty((len(flat), width), dtype=np.int64)
        for rows, (o, s) in zip(members, results):
            order[rows] = o
            sq[rows] = s
        return order, sq

    def _tie_mask(self, order: np.ndarray, sq: np.ndarray) -> np.ndarray:
        valid = (order[:, 1:] != NO_LANDMARK) & (order[:, :-1] != NO_LANDMARK)
        return ((sq[:, 1:] == sq[:, :-1]) & valid).any(axis=1)

    def _exact_record(self, flat: int) -> WitnessRecord:
        w = self.W.center(flat)
        sq = sq_dists_to(self.L.current, w.as_array(), self.L.precision)
        return make_record(w, np.arange(self.L.n), sq, self.horizon)

    def record(self, flat: int) -> WitnessRecord:
        if flat in self.tied:
            return self.tied[flat]
        row = self.order[flat]
        ix = row[row != NO_LANDMARK]
        return make_record(self.W.center(flat), ix, self.sq[flat][: len(ix)], self.horizon)

    # -- contributions -----------------------------------------------------

    def _prefix_counts(self, order: np.ndarray, sign: int) -> None:
        for t in range(1, self.k_max + 2):
            prefix = order[:, :t]
            prefix = prefix[(prefix != NO_LANDMARK).all(axis=1)]
            if not len(prefix):
                continue
            simplices, counts = np.unique(np.sort(prefix, axis=1), axis=0, return_counts=True)
            for s, c in zip(map(tuple, simplices.tolist()), counts.tolist()):
                self.counts[s] += sign * c

    def _record_counts(self, records: Iterable[WitnessRecord], sign: int) -> None:
        for rec in records:
            for s in witnessed_simplices(rec, self.k_max):
                self.counts[s] += sign

    def _add_rows(self, flat: np.ndarray, sign: int) -> None:
        tie = self._tie_mask(self.order[flat], self.sq[flat])
        self._prefix_counts(self.order[flat[~tie]], sign)
        tie_rows = flat[tie].tolist()
        if sign > 0:
            for f in tie_rows:
                self.tied[f] = self._exact_record(f)
            self._record_counts((self.tied[f] for f in tie_rows), sign)
        else:
            self._record_counts((self.tied.pop(f) for f in tie_rows), sign)

    def _derive(self) -> SimplicialComplex:
        kept: Set[Simplex] = set()
        by_size: Dict[int, List[Simplex]] = {}
        for s, c in self.counts.items():
            if c > 0:
                by_size.setdefault(len(s), []).append(s)
        for size in sorted(by_size):
            for s in by_size[size]:
                if size == 1 or all(f in kept for f in facets(s)):
                    kept.add(s)
        return SimplicialComplex(kept)

    # -- public ------------------------------------------------------------

    @property
    def complex(self) -> SimplicialComplex:
        if self._complex is None:
            raise RuntimeError("Witness complex has not been built")
        return self._complex

    def build(self) -> SimplicialComplex:
        """Full construction of Wit(L', W)"""
        width = self.horizon + 1
        self.order = np.full((self.W.size, width), NO_LANDMARK, dtype=np.int64)
        self.sq = np.full((self.W.size, width), FAR, dtype=np.int64)
        self.tied, self.counts = {}, Counter()
        if self.L.n and self.W.size:
            for flat, _ in self.W.iter_blocks():
                o, s = self._scan(flat)
                self.order[flat], self.sq[flat] = o, s
            self._add_rows(np.arange(self.W.size, dtype=np.int64), +1)
        self._complex = self._derive()
        logger.info(f"Built witness complex: {self.W.size} witnesses, {self.L.n} landmarks, "
                    f"f-vector {self._complex.f_vector()}, {len(self.tied)} tie rows")
        return self._complex

    def affected_rows(self, L_new: LandmarkSet, moved: Iterable[int]) -> np.ndarray:
        """
        Witness rows whose retained ranking can change when `moved` landmarks
        move to their positions in L_new: rows listing a moved landmark, and
        rows whose last retained distance is >= the distance to a new position.
        """
        moved = np.asarray(sorted(set(moved)), dtype=np.int64)
        hit = np.isin(self.order, moved).any(axis=1)
        reach = self.sq[:, -1]
        max_reach = int(reach.max())
        precision = self.L.precision
        for i in moved.tolist():
            p = L_new.current[i]
            r = math.isqrt(max_reach) + 1
            if 2 * r >= precision.scale:
                flat = np.arange(self.W.size, dtype=np.int64)
            else:
                flat = self.W.centers_in_box(p - r, p + r)
            near = sq_dists_to(self.W.centers(flat), p, precision) <= reach[flat]
            hit[flat[near]] = True
        return np.flatnonzero(hit)

    def update(self, L_new: LandmarkSet, moved: Iterable[int]) -> SimplicialComplex:
        """Wit(L_new, W) after the landmarks `moved` changed position; equal to a full rebuild"""
        moved = set(int(i) for i in moved)
        if L_new.n != self.L.n:
            raise ValueError("Update cannot change the number of landmarks")
        if not moved or self.order is None:
            self.L = L_new
            return self.build() if self.order is None else self.complex
        rows = self.affected_rows(L_new, moved)
        self._add_rows(rows, -1)
        self.L = L_new
        if len(rows):
            o, s = self._scan(rows)
            self.order[rows], self.sq[rows] = o, s
            self._add_rows(rows, +1)
        self.counts = Counter({s: c for s, c in self.counts.items() if c != 0})
        self._complex = self._derive()
        logger.debug(f"Updated witness complex: {len(moved)} moved landmarks, {len(rows)} rows recomputed")
        return self._complex

    def tie_groups(self) -> List[Tuple[int, ...]]:
        """Tie groups that affect witnessed simplices, over all tie rows"""
        found = set()
        for rec in self.tied.values():
            found.update(rec.tie_groups(self.k_max))
        return sorted(found)

    def tie_landmarks(self) -> List[int]:
        """Lowest-index landmark of every relevant tie group"""
        return sorted({min(g) for g in self.tie_groups()})


def build_witness_complex(L: LandmarkSet, W: WitnessGrid, k_max: Optional[int] = None,
                          workers: int = 1) -> SimplicialComplex:
    return WitnessComplex(L, W, k_max=k_max, workers=workers).build()


def update_witness_complex(K: WitnessComplex, L: LandmarkSet, W: WitnessGrid,
                           moved: Iterable[int]) -> SimplicialComplex:
    """Update a built WitnessComplex state in place; W must be the grid it was built on"""
    if W != K.W:
        raise ValueError("Witness grid differs from the one the complex was built on")
    return K.update(L, moved)

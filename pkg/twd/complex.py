"""
Simplicial complexes over landmark indices

A simplex is a strictly increasing tuple of vertex indices. Complexes are
immutable snapshots closed under taking faces; every "mutation" returns a
new complex.

Note: star(p) here is the closure of all simplices meeting {p} (faces
included), not the open star. The pseudo-manifold test has no
connectivity clause.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Set, Tuple

from .errors import UnknownVertexError

Simplex = Tuple[int, ...]


def make_simplex(vertices: Iterable[int]) -> Simplex:
    s = tuple(sorted(int(v) for v in vertices))
    if not s:
        raise ValueError("A simplex needs at least one vertex")
    if len(set(s)) != len(s):
        raise ValueError(f"Repeated vertex in simplex {s}")
    if s[0] < 0:
        raise ValueError(f"Negative vertex index in simplex {s}")
    return s


def faces(s: Simplex) -> Iterable[Simplex]:
    """All non-empty faces of s, s included"""
    for k in range(1, len(s) + 1):
        yield from combinations(s, k)


def facets(s: Simplex) -> Iterable[Simplex]:
    """Codimension-one faces of s"""
    if len(s) < 2:
        return
    yield from combinations(s, len(s) - 1)


class SimplicialComplex:
    """Immutable face-closed set of simplices with a per-vertex incidence map"""

    def __init__(self, simplices: Iterable[Simplex] = ()):
        closed: Set[Simplex] = set()
        for s in simplices:
            s = make_simplex(s)
            if s not in closed:
                closed.update(faces(s))
        self._simplices: FrozenSet[Simplex] = frozenset(closed)
        index: Dict[int, List[Simplex]] = defaultdict(list)
        for s in self._simplices:
            for v in s:
                index[v].append(s)
        self._vertex_index = dict(index)

    @classmethod
    def from_maximal(cls, simplices: Iterable[Iterable[int]]) -> "SimplicialComplex":
        return cls(make_simplex(s) for s in simplices)

    # -- container protocol --------------------------------------------

    @property
    def simplices(self) -> FrozenSet[Simplex]:
        return self._simplices

    def __contains__(self, s) -> bool:
        return tuple(sorted(s)) in self._simplices

    def __iter__(self):
        return iter(sorted(self._simplices, key=lambda s: (len(s), s)))

    def __len__(self) -> int:
        return len(self._simplices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimplicialComplex):
            return NotImplemented
        return self._simplices == other._simplices

    def __hash__(self) -> int:
        return hash(self._simplices)

    def __repr__(self) -> str:
        return f"SimplicialComplex(f_vector={self.f_vector()})"

    def issubset(self, other: "SimplicialComplex") -> bool:
        return self._simplices <= other._simplices

    # -- structure ------------------------------------------------------

    @property
    def dim(self) -> int:
        return max((len(s) - 1 for s in self._simplices), default=-1)

    @property
    def vertices(self) -> List[int]:
        return sorted(self._vertex_index)

    def simplices_of_dim(self, k: int) -> List[Simplex]:
        return sorted(s for s in self._simplices if len(s) == k + 1)

    def f_vector(self) -> List[int]:
        counts = Counter(len(s) - 1 for s in self._simplices)
        return [counts[k] for k in range(self.dim + 1)]

    def maximal_simplices(self) -> List[Simplex]:
        """Simplices that are not a proper face of another member"""
        covered: Set[Simplex] = set()
        for s in self._simplices:
            covered.update(facets(s))
        return sorted((s for s in self._simplices if s not in covered), key=lambda s: (len(s), s))

    def cofacets(self, s: Simplex) -> List[Simplex]:
        s = tuple(sorted(s))
        if not s:
            return []
        return sorted(t for t in self.incident(s[0]) if len(t) == len(s) + 1 and set(s) <= set(t))

    def incident(self, p: int) -> List[Simplex]:
        if p not in self._vertex_index:
            raise UnknownVertexError(p)
        return self._vertex_index[p]

    # -- operations ----------------------------------------------------

    def insert_with_closure(self, s: Iterable[int]) -> "SimplicialComplex":
        s = make_simplex(s)
        if s in self._simplices:
            return self
        return SimplicialComplex(self._simplices | set(faces(s)))

    def star(self, p: int) -> "SimplicialComplex":
        """Closure of all simplices that contain p"""
        return SimplicialComplex(self.incident(p))

    def star_of_set(self, vertices: Iterable[int]) -> "SimplicialComplex":
        found: List[Simplex] = []
        for v in vertices:
            found.extend(self.incident(v))
        return SimplicialComplex(found)

    def star2(self, p: int) -> "SimplicialComplex":
        """star(star(p)): closure of simplices meeting a vertex of star(p)"""
        return self.star_of_set(self.star(p).vertices)

    def link(self, p: int) -> "SimplicialComplex":
        return SimplicialComplex(
            tuple(v for v in s if v != p) for s in self.incident(p) if len(s) > 1
        )

    def is_pseudomanifold(self, k: int) -> bool:
        """
        Pure k-complex in which every (k-1)-simplex has exactly two k-cofacets.

        The empty complex is not a pseudo-manifold. For k = 0 this means
        exactly two vertices (a 0-sphere).
        """
        if not self._simplices or self.dim != k:
            return False
        top = self.simplices_of_dim(k)
        if k == 0:
            return len(top) == 2
        covered = Counter()
        for s in top:
            covered.update(facets(s))
        # purity: every simplex below dimension k lies in some k-simplex
        in_top: Set[Simplex] = set()
        for s in top:
            in_top.update(faces(s))
        if in_top != self._simplices:
            return False
        return all(covered[t] == 2 for t in self.simplices_of_dim(k - 1))

    def has_good_link(self, p: int, d: int) -> bool:
        return self.link(p).is_pseudomanifold(d - 1)

    def euler_characteristic(self) -> int:
        return sum((-1) ** (len(s) - 1) for s in self._simplices)

    def restrict_to_dim(self, k_max: int) -> "SimplicialComplex":
        return SimplicialComplex(s for s in self._simplices if len(s) <= k_max + 1)


def insert_with_closure(K: SimplicialComplex, s: Iterable[int]) -> SimplicialComplex:
    return K.insert_with_closure(s)


def star(p: int, K: SimplicialComplex) -> SimplicialComplex:
    return K.star(p)


def star2(p: int, K: SimplicialComplex) -> SimplicialComplex:
    return K.star2(p)


def link(p: int, K: SimplicialComplex) -> SimplicialComplex:
    return K.link(p)


def is_pseudomanifold(K: SimplicialComplex, k: int) -> bool:
    return K.is_pseudomanifold(k)


def has_good_link(p: int, K: SimplicialComplex, d: int) -> bool:
    return K.has_good_link(p, d)


def euler_characteristic(K: SimplicialComplex) -> int:
    return K.euler_characteristic()

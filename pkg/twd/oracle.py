"""
Brute-force ground truth

The only module allowed to compute circumcenters, solve linear systems or
take square roots. Delaunay simplices are decided by explicit circumball
emptiness in floating point, escalated to exact rational arithmetic when a
point lies within 1e-9 * R^2 of the sphere. Also measures protection,
power-protection and thickness, and checks the protection inheritance and
protection / power-protection conversion bounds on measured data.

Nothing in the construction pipeline imports this module.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from loguru import logger
from scipy.spatial import Delaunay

from .complex import Simplex, SimplicialComplex, make_simplex
from .errors import LiftError
from .geometry import LandmarkSet, canonical_lift, wrap_diff
from .params import perturbed_net_params

MARGIN_TOLERANCE = 1e-9
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class CircumData:
    """Circumcenter of a simplex in the lifted frame of its first vertex, torus units"""

    simplex: Simplex
    base: int
    center: np.ndarray
    radius_sq: float
    degenerate: bool

    @property
    def radius(self) -> float:
        return math.sqrt(self.radius_sq)


def _lift(order: Sequence[int], L: LandmarkSet) -> np.ndarray:
    return canonical_lift(list(order), L.current, L.precision)


def _solve_exact(G: List[List[Fraction]], b: List[Fraction]) -> Optional[List[Fraction]]:
    n = len(b)
    M = [row[:] + [rhs] for row, rhs in zip(G, b)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if M[r][col] != 0), None)
        if pivot is None:
            return None
        M[col], M[pivot] = M[pivot], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [a - f * c for a, c in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def _circumcenter(P: np.ndarray) -> Tuple[Optional[np.ndarray], float]:
    """Circumcenter within aff(P) of the rows of P (float)"""
    A = P[1:] - P[0]
    b = 0.5 * (A * A).sum(axis=1)
    G = A @ A.T
    if len(G) == 0:
        return P[0].copy(), 0.0
    if not np.isfinite(np.linalg.cond(G)) or np.linalg.cond(G) > CONDITION_LIMIT:
        return None, 0.0
    y = np.linalg.solve(G, b)
    c = P[0] + A.T @ y
    return c, float(((c - P[0]) ** 2).sum())


def exact_circumcenter(lifted: np.ndarray) -> Optional[List[Fraction]]:
    """Exact circumcenter (fixed-point units) of integer lifted vertices, None if degenerate"""
    P = [[Fraction(int(v)) for v in row] for row in lifted]
    A = [[a - b for a, b in zip(row, P[0])] for row in P[1:]]
    if not A:
        return P[0]
    G = [[sum(x * y for x, y in zip(r, s)) for s in A] for r in A]
    b = [sum(x * x for x in r) / 2 for r in A]
    y = _solve_exact(G, b)
    if y is None:
        return None
    return [P[0][k] + sum(y[i] * A[i][k] for i in range(len(A))) for k in range(len(P[0]))]


def circumsphere(sigma: Sequence[int], L: LandmarkSet) -> CircumData:
    """
    Circumsphere of sigma in the canonical lift around its first (lowest) vertex.

    Raises:
        LiftError: if sigma spans half the torus along some axis
    """
    sigma = make_simplex(sigma)
    lifted = _lift(sigma, L) / L.precision.scale
    center, r2 = _circumcenter(lifted)
    if center is None:
        return CircumData(sigma, sigma[0], lifted.mean(axis=0), math.inf, True)
    return CircumData(sigma, sigma[0], center, r2, False)


def _images(d: int) -> np.ndarray:
    return np.asarray(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)


def _other_images(sigma: Simplex, L: LandmarkSet, base: int) -> Tuple[np.ndarray, np.ndarray]:
    """Integer lifts of every q not in sigma relative to the base vertex, all 3^d images"""
    others = np.setdiff1d(np.arange(L.n), np.asarray(sigma))
    rel = wrap_diff(L.current[others] - L.current[base], L.precision)
    lifted = L.current[base] + rel
    shifts = _images(L.d) * L.precision.scale
    return others, lifted[:, None, :] + shifts[None, :, :]


@dataclass
class BallTest:
    empty: bool
    on_sphere: List[int] = field(default_factory=list)
    exact_checks: int = 0


def check_empty_ball(cd: CircumData, L: LandmarkSet) -> BallTest:
    """Is the open circumball of cd free of landmarks? Lists the landmarks lying on the sphere"""
    if cd.degenerate:
        return BallTest(False)
    others, images = _other_images(cd.simplex, L, cd.base)
    if not len(others):
        return BallTest(True)
    scale = L.precision.scale
    d2 = (((images / scale) - cd.center) ** 2).sum(axis=-1).min(axis=1)
    margin = d2 - cd.radius_sq
    tol = MARGIN_TOLERANCE * cd.radius_sq
    if (margin < -tol).any():
        return BallTest(False)
    unsure = np.flatnonzero(np.abs(margin) <= tol)
    if not len(unsure):
        return BallTest(True)

    center = exact_circumcenter(_lift(cd.simplex, L))
    if center is None:
        return BallTest(False)
    v0 = [Fraction(int(v)) for v in _lift(cd.simplex, L)[0]]
    r2 = sum((c - v) ** 2 for c, v in zip(center, v0))
    on_sphere = []
    for k in unsure.tolist():
        best = min(sum((Fraction(int(x)) - c) ** 2 for x, c in zip(img, center)) for img in images[k])
        if best < r2:
            return BallTest(False, exact_checks=len(unsure))
        if best == r2:
            on_sphere.append(int(others[k]))
    return BallTest(True, on_sphere, len(unsure))


@dataclass
class DelaunayResult:
    complex: SimplicialComplex
    generic: bool
    cospherical_groups: List[Tuple[int, ...]]
    circumdata: Dict[Simplex, CircumData]
    exact_checks: int = 0


def qhull_candidates(L: LandmarkSet) -> Set[Simplex]:
    """d-simplices of the Qhull triangulation of the 3^d periodic tiling that touch the central copy"""
    pts = L.current / L.precision.scale
    shifts = _images(L.d)
    tiled = (pts[None, :, :] + shifts[:, None, :]).reshape(-1, L.d)
    central = int(np.flatnonzero((shifts == 0).all(axis=1))[0])
    tri = Delaunay(tiled)
    found: Set[Simplex] = set()
    for simplex in tri.simplices:
        copies = simplex // L.n
        if not (copies == central).any():
            continue
        originals = set((simplex % L.n).tolist())
        if len(originals) == L.d + 1:
            found.add(tuple(sorted(originals)))
    return found


def local_candidates(L: LandmarkSet, radius: Optional[float] = None) -> Set[Simplex]:
    """All d-simplices whose vertices are pairwise closer than 2 * radius (default lambda + rho)"""
    radius = (L.lambda_ + L.rho) if radius is None else radius
    limit = L.precision.sq_radius(2 * radius)
    diff = wrap_diff(L.current[:, None, :] - L.current[None, :, :], L.precision)
    close = (diff * diff).sum(axis=-1) < limit
    found: Set[Simplex] = set()
    for i in range(L.n):
        nbrs = [j for j in np.flatnonzero(close[i]).tolist() if j > i]
        for combo in itertools.combinations(nbrs, L.d):
            if all(close[a, b] for a, b in itertools.combinations(combo, 2)):
                found.add((i,) + combo)
    return found


def oracle_delaunay(L: LandmarkSet, method: str = 'qhull') -> DelaunayResult:
    """
    Delaunay complex of the current positions by explicit circumball emptiness.

    Args:
        L (LandmarkSet): at least d+1 landmarks
        method (str): candidate generator, 'qhull' (periodic tiling) or 'exhaustive'

    Returns:
        DelaunayResult: complex (closure of the empty-ball d-simplices), genericity
        flag and every cospherical group found
    """
    if L.n < L.d + 1:
        raise ValueError(f"Need at least {L.d + 1} landmarks, got {L.n}")
    if method == 'qhull':
        candidates = qhull_candidates(L)
    elif method == 'exhaustive':
        candidates = local_candidates(L)
    else:
        raise ValueError(f"Unknown candidate method: {method}")

    accepted: Set[Simplex] = set()
    circum: Dict[Simplex, CircumData] = {}
    groups: Set[Tuple[int, ...]] = set()
    exact_checks = 0
    for sigma in sorted(candidates):
        try:
            cd = circumsphere(sigma, L)
        except LiftError as e:
            logger.debug(f"Oracle skipping {sigma}: {str(e)}")
            continue
        ball = check_empty_ball(cd, L)
        exact_checks += ball.exact_checks
        if not ball.empty:
            continue
        accepted.add(sigma)
        circum[sigma] = cd
        if ball.on_sphere:
            groups.add(tuple(sorted(set(sigma) | set(ball.on_sphere))))

    for group in sorted(groups):
        for subset in itertools.combinations(group, L.d + 1):
            if subset in accepted:
                continue
            cd = circumsphere(subset, L)
            if not cd.degenerate:
                accepted.add(subset)
                circum[subset] = cd

    if groups:
        logger.warning(f"Oracle found {len(groups)} cospherical groups; input is not generic")
    return DelaunayResult(SimplicialComplex(accepted), not groups, sorted(groups), circum, exact_checks)


def brute_force_delaunay(L: LandmarkSet, method: str = 'qhull') -> SimplicialComplex:
    return oracle_delaunay(L, method).complex


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

def _nearest_image_sq(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Squared distance from center to the nearest image of each lifted point (torus units)"""
    return ((points - center) ** 2).sum(axis=-1).min(axis=1)


def _others_float(sigma: Simplex, L: LandmarkSet, base: int) -> np.ndarray:
    _, images = _other_images(sigma, L, base)
    return images / L.precision.scale


def measure_protection(sigma: Sequence[int], L: LandmarkSet) -> Tuple[float, float]:
    """(protection, power protection) of sigma at its circumcenter"""
    cd = circumsphere(sigma, L)
    if cd.degenerate:
        return 0.0, 0.0
    d2 = _nearest_image_sq(_others_float(cd.simplex, L, cd.base), cd.center)
    if not len(d2):
        return math.inf, math.inf
    nearest = float(d2.min())
    return math.sqrt(nearest) - cd.radius, nearest - cd.radius_sq


def measure_thickness(sigma: Sequence[int], L: LandmarkSet) -> Tuple[float, float, float]:
    """(theta, altitude, diameter); theta = altitude / (j * diameter), 1 for a vertex"""
    sigma = make_simplex(sigma)
    j = len(sigma) - 1
    if j == 0:
        return 1.0, 0.0, 0.0
    P = _lift(sigma, L) / L.precision.scale
    diameter = max(float(np.linalg.norm(a - b)) for a, b in itertools.combinations(P, 2))
    altitude = math.inf
    for i in range(len(P)):
        rest = np.delete(P, i, axis=0)
        A = (rest[1:] - rest[0]).T
        v = P[i] - rest[0]
        if A.shape[1]:
            coef, *_ = np.linalg.lstsq(A, v, rcond=None)
            v = v - A @ coef
        altitude = min(altitude, float(np.linalg.norm(v)))
    if diameter == 0 or altitude <= diameter * 1e-12:
        return 0.0, altitude, diameter
    return altitude / (j * diameter), altitude, diameter


@dataclass
class SimplexQuality:
    simplex: Simplex
    protection: float
    power_protection: float
    thickness: float
    altitude: float
    diameter: float
    circumradius: float

    def to_json_dict(self) -> Dict:
        return {
            'simplex': list(self.simplex),
            'protection': self.protection,
            'power_protection': self.power_protection,
            'thickness': self.thickness,
            'altitude': self.altitude,
            'diameter': self.diameter,
            'circumradius': self.circumradius,
        }


@dataclass
class QualityReport:
    simplices: List[SimplexQuality]

    @property
    def min_protection(self) -> float:
        return min((s.protection for s in self.simplices), default=math.inf)

    @property
    def min_power_protection(self) -> float:
        return min((s.power_protection for s in self.simplices), default=math.inf)

    @property
    def min_thickness(self) -> float:
        return min((s.thickness for s in self.simplices), default=math.inf)

    def to_json_dict(self) -> Dict:
        def finite(x):
            return x if math.isfinite(x) else None
        return {
            'count': len(self.simplices),
            'min_protection': finite(self.min_protection),
            'min_power_protection': finite(self.min_power_protection),
            'min_thickness': finite(self.min_thickness),
            'simplices': [s.to_json_dict() for s in self.simplices],
        }


def quality_report(L: LandmarkSet, K: SimplicialComplex) -> QualityReport:
    entries = []
    for sigma in K.simplices_of_dim(L.d):
        cd = circumsphere(sigma, L)
        protection, power = measure_protection(sigma, L)
        theta, altitude, diameter = measure_thickness(sigma, L)
        entries.append(SimplexQuality(sigma, protection, power, theta, altitude, diameter,
                                      cd.radius if not cd.degenerate else math.inf))
    return QualityReport(entries)


# ---------------------------------------------------------------------------
# Bound verifiers
# ---------------------------------------------------------------------------

def net_parameters(L: LandmarkSet) -> Tuple[float, float]:
    """Net parameters guaranteed for the current positions (lambda', mu_bar')"""
    if L.rho == 0:
        return L.lambda_, L.mu_bar
    return perturbed_net_params(L.lambda_, L.mu_bar, L.rho / L.lambda_)


def prot_to_power_bound(delta: float, lambda_: float, mu_bar: float) -> float:
    """Power protection implied by delta-protection when R >= mu_bar * lambda / 2"""
    delta_bar = delta / lambda_
    return (mu_bar * delta_bar + delta_bar ** 2) * lambda_ ** 2


def power_to_prot_bound(power: float, lambda_: float) -> float:
    """Protection implied by power protection when R < lambda and power <= 8 lambda^2"""
    return power / (4 * lambda_)


def inheritance_bound(delta: float, lambda_: float, mu_bar: float, d: int, k: int) -> float:
    delta_bar = delta / lambda_
    return (mu_bar + delta_bar) * delta / (4 * (d - k + 1))


def star2_bound(delta: float, mu_bar: float, d: int) -> float:
    return mu_bar * delta / (4 * d)


@dataclass
class VerifierReport:
    name: str
    checked: int = 0
    violations: List[Dict] = field(default_factory=list)
    worst_margin: float = math.inf
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    def record(self, margin: float, detail: Dict, slack: float = 1e-12) -> None:
        self.checked += 1
        self.worst_margin = min(self.worst_margin, margin)
        if margin < -slack:
            self.violations.append(detail)

    def to_json_dict(self) -> Dict:
        return {
            'name': self.name,
            'passed': self.passed,
            'checked': self.checked,
            'skipped': self.skipped,
            'worst_margin': self.worst_margin if math.isfinite(self.worst_margin) else None,
            'violations': self.violations[:20],
        }


def _center_in_frame(sigma: Simplex, L: LandmarkSet, base: int) -> Optional[np.ndarray]:
    """Circumcenter of sigma in the lifted frame of landmark `base` (a vertex of sigma)"""
    order = [base] + [v for v in sigma if v != base]
    center, _ = _circumcenter(_lift(order, L) / L.precision.scale)
    return center


def _protection_at(x: np.ndarray, tau: Simplex, L: LandmarkSet, base: int) -> Tuple[float, float]:
    """(distance gap, squared gap) of tau at x: nearest non-vertex vs farthest vertex"""
    order = [base] + [v for v in tau if v != base]
    own = _lift(order, L) / L.precision.scale
    r2 = float(((own - x) ** 2).sum(axis=1).max())
    d2 = _nearest_image_sq(_others_float(tau, L, base), x)
    if not len(d2):
        return math.inf, math.inf
    nearest = float(d2.min())
    return math.sqrt(nearest) - math.sqrt(r2), nearest - r2


def _spanning_cofacets(tau: Simplex, K: SimplicialComplex, d: int) -> Optional[List[Simplex]]:
    """
    d - k + 1 top cofacets of tau whose intersection is tau: the lowest cofacet
    sigma_0, and across each facet sigma_0 - {e} (e not in tau) its other top simplex.
    """
    top = [s for s in K.incident(tau[0]) if len(s) == d + 1 and set(tau) <= set(s)]
    if not top:
        return None
    first = min(top)
    chosen = [first]
    for e in sorted(set(first) - set(tau)):
        facet = tuple(v for v in first if v != e)
        across = [s for s in K.cofacets(facet) if s != first]
        if len(across) != 1:
            return None
        chosen.append(across[0])
    return chosen


def verify_inheritance(L: LandmarkSet, K: SimplicialComplex) -> Dict[str, VerifierReport]:
    """
    Protection inherited by lower-dimensional simplices.

    For each k-simplex tau, the barycenter c* of the circumcenters of d - k + 1
    spanning cofacets must protect tau by (mu_bar + delta_bar) delta / (4 (d - k + 1))
    and power-protect it by delta_pp / (d - k + 1), where delta and delta_pp are
    the minima over tau's top cofacets. The star^2 variant checks mu_bar delta / (4d)
    with delta the minimum over star^2(p). Vertices are checked directly.
    """
    d = L.d
    lambda_, mu_bar = net_parameters(L)
    top_protection = {s: measure_protection(s, L) for s in K.simplices_of_dim(d)}

    per_simplex = VerifierReport('inheritance')
    power_form = VerifierReport('inheritance_power')
    star2 = VerifierReport('inheritance_star2')
    centers: Dict[Simplex, Tuple[int, np.ndarray]] = {}

    for tau in sorted(K.simplices, key=lambda s: (len(s), s)):
        k = len(tau) - 1
        if k >= d:
            continue
        cofaces = [s for s in top_protection if set(tau) <= set(s)]
        if not cofaces:
            per_simplex.skipped += 1
            continue
        delta = min(top_protection[s][0] for s in cofaces)
        delta_pp = min(top_protection[s][1] for s in cofaces)
        base = tau[0]

        if k == 0:
            others = _nearest_image_sq(_others_float(tau, L, base), _lift([base], L)[0] / L.precision.scale)
            gap = math.sqrt(float(others.min())) if len(others) else math.inf
            per_simplex.record(gap - delta, {'simplex': list(tau), 'gap': gap, 'delta': delta})
            centers[tau] = (base, _lift([base], L)[0] / L.precision.scale)
            continue

        chosen = _spanning_cofacets(tau, K, d)
        if chosen is None:
            per_simplex.skipped += 1
            continue
        cs = [_center_in_frame(s, L, base) for s in chosen]
        if any(c is None for c in cs):
            per_simplex.skipped += 1
            continue
        c_star = np.mean(cs, axis=0)
        centers[tau] = (base, c_star)
        gap, sq_gap = _protection_at(c_star, tau, L, base)
        bound = inheritance_bound(delta, lambda_, mu_bar, d, k)
        per_simplex.record(gap - bound, {'simplex': list(tau), 'gap': gap, 'bound': bound})
        power_bound = delta_pp / (d - k + 1)
        power_form.record(sq_gap - power_bound, {'simplex': list(tau), 'power_gap': sq_gap, 'bound': power_bound})

    for p in K.vertices:
        ring = [s for s in K.star2(p).simplices_of_dim(d) if s in top_protection]
        if not ring:
            star2.skipped += 1
            continue
        delta = min(top_protection[s][0] for s in ring)
        bound = star2_bound(delta, mu_bar, d)
        for tau in K.star(p):
            if len(tau) - 1 >= d or tau not in centers:
                continue
            base, c = centers[tau]
            if len(tau) == 1:
                others = _nearest_image_sq(_others_float(tau, L, base), c)
                gap = math.sqrt(float(others.min())) if len(others) else math.inf
            else:
                gap, _ = _protection_at(c, tau, L, base)
            star2.record(gap - bound, {'vertex': p, 'simplex': list(tau), 'gap': gap, 'bound': bound})

    for report in (per_simplex, power_form, star2):
        level = 'info' if report.passed else 'warning'
        getattr(logger, level)(f"Verifier {report.name}: {report.checked} checked, "
                               f"{len(report.violations)} violations, worst margin {report.worst_margin:.3g}")
    return {r.name: r for r in (per_simplex, power_form, star2)}


def verify_conversions(L: LandmarkSet, K: SimplicialComplex) -> Dict[str, VerifierReport]:
    """Protection to power-protection and back, on every top simplex's measured values"""
    lambda_, mu_bar = net_parameters(L)
    to_power = VerifierReport('prot_to_power')
    to_prot = VerifierReport('power_to_prot')
    for sigma in K.simplices_of_dim(L.d):
        cd = circumsphere(sigma, L)
        if cd.degenerate:
            to_power.skipped += 1
            to_prot.skipped += 1
            continue
        delta, power = measure_protection(sigma, L)
        if not math.isfinite(delta):
            continue
        if cd.radius >= mu_bar * lambda_ / 2 and delta >= 0:
            bound = prot_to_power_bound(delta, lambda_, mu_bar)
            to_power.record(power - bound, {'simplex': list(sigma), 'power': power, 'bound': bound},
                            slack=1e-12 * max(cd.radius_sq, 1e-30))
        else:
            to_power.skipped += 1
        if cd.radius < lambda_ and 0 <= power <= 8 * lambda_ ** 2:
            bound = power_to_prot_bound(power, lambda_)
            to_prot.record(delta - bound, {'simplex': list(sigma), 'delta': delta, 'bound': bound},
                           slack=1e-12 * max(cd.radius, 1e-30))
        else:
            to_prot.skipped += 1
    return {r.name: r for r in (to_power, to_prot)}

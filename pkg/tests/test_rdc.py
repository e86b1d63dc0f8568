import itertools
import math

import numpy as np
import pytest

from twd.errors import LiftError
from twd.geometry import LandmarkSet, PrecisionConfig, TorusPoint, WitnessGrid, canonical_lift
from twd.lll_engine import EngineConfig
from twd.oracle import brute_force_delaunay, circumsphere, measure_protection, measure_thickness
from twd.params import full_cell_caps, output_thickness_bound, perturbed_net_params
from twd.rdc import (
    PyramidCell, RelaxedDelaunay, build_rdc0, check_vertex, enclosing_box, is_alpha_witness, is_full_cell,
    pyramid_full_cells, run_algorithm2,
)

from conftest import jittered_lattice, lattice_points


def exhaustive_full_leaves(sigma, L, W, box):
    """Grid cells of the box crossed by every bisector, by scanning all of them"""
    lifted = canonical_lift(sigma, L.current, L.precision)
    g = box.grid_side
    n = box.side // g
    idx = np.stack(np.meshgrid(*([np.arange(n)] * L.d), indexing='ij'), axis=-1).reshape(-1, L.d)
    lo = np.asarray(box.origin) + idx * g
    corners = lo[:, None, :] + np.asarray(list(itertools.product((0, 1), repeat=L.d)))[None] * g
    sq = ((corners[:, :, None, :] - lifted[None, None]) ** 2).sum(axis=-1)
    full = np.ones(len(lo), dtype=bool)
    for i, j in itertools.combinations(range(len(sigma)), 2):
        s = sq[:, :, i] - sq[:, :, j]
        full &= (s.min(axis=1) <= 0) & (s.max(axis=1) >= 0)
    centers = (lo[full] + g // 2) & (L.precision.scale - 1)
    return {tuple(c) for c in centers.tolist()}


@pytest.fixture
def triangle(sparse_net):
    return brute_force_delaunay(sparse_net).simplices_of_dim(2)[0]


class TestEnclosingBox:
    def test_covers_the_simplex(self, sparse_net, triangle, precision2):
        W = WitnessGrid(8, precision2)
        box = enclosing_box(triangle, sparse_net, W, 0.21, 2 * W.epsilon)
        lifted = canonical_lift(triangle, sparse_net.current, precision2)
        origin = np.asarray(box.origin)
        assert (origin % W.cell_side == 0).all()
        assert box.side == W.cell_side << box.levels
        assert box.side >= precision2.fixed(4 * 0.21 + 8 * W.epsilon) + 2 * W.cell_side
        assert (lifted >= origin).all() and (lifted <= origin + box.side).all()

    def test_simplex_across_half_the_torus(self, precision2):
        L = LandmarkSet(lattice_points(2, precision2), 0.25, 1.0, precision2)
        W = WitnessGrid(6, precision2)
        # (0, 0), (0, 0.25) and (0.5, 0)
        with pytest.raises(LiftError):
            enclosing_box((0, 1, 8), L, W, 0.25, 2 * W.epsilon)


class TestPyramid:
    def test_matches_an_exhaustive_leaf_scan(self, sparse_net, precision2):
        W = WitnessGrid(7, precision2)
        for sigma in brute_force_delaunay(sparse_net).simplices_of_dim(2)[:4]:
            result = pyramid_full_cells(sigma, sparse_net, W, cap=None)
            box = enclosing_box(sigma, sparse_net, W, sparse_net.lambda_, 2 * W.epsilon)
            assert not result.aborted
            assert {tuple(c) for c in result.leaf_centers.tolist()} == exhaustive_full_leaves(sigma, sparse_net, W, box)

    def test_circumcenter_leaf_is_full(self, sparse_net, triangle, precision2):
        W = WitnessGrid(8, precision2)
        result = pyramid_full_cells(triangle, sparse_net, W, cap=None)
        box = enclosing_box(triangle, sparse_net, W, sparse_net.lambda_, 2 * W.epsilon)
        center = circumsphere(triangle, sparse_net).center * precision2.scale
        cell = np.floor((center - np.asarray(box.origin)) / W.cell_side).astype(np.int64)
        leaf = (np.asarray(box.origin) + cell * W.cell_side + W.cell_side // 2) & (precision2.scale - 1)
        assert tuple(leaf.tolist()) in {tuple(c) for c in result.leaf_centers.tolist()}

    def test_some_leaf_is_a_witness(self, sparse_net, triangle, precision2):
        W = WitnessGrid(8, precision2)
        result = pyramid_full_cells(triangle, sparse_net, W, cap=None)
        assert any(is_alpha_witness(w, triangle, sparse_net, 2 * W.epsilon) for w in result.full_leaf_points)

    def test_full_cell_count_is_capped(self, sparse_net, precision2):
        W = WitnessGrid(8, precision2)
        for sigma in brute_force_delaunay(sparse_net).simplices_of_dim(2):
            theta, _, _ = measure_thickness(sigma, sparse_net)
            n_sigma, _ = full_cell_caps(theta, sparse_net.mu_bar, sparse_net.lambda_, W.epsilon, 2)
            assert pyramid_full_cells(sigma, sparse_net, W, cap=None).cells_visited <= math.ceil(n_sigma)

    def test_abort_over_cap(self, sparse_net, triangle, precision2):
        W = WitnessGrid(8, precision2)
        result = pyramid_full_cells(triangle, sparse_net, W, cap=1)
        assert result.aborted
        assert len(result.leaf_centers) == 0
        with pytest.raises(ValueError):
            pyramid_full_cells(triangle, sparse_net, W, cap=0)

    def test_leaves_cluster_around_the_circumcenter(self, sparse_net, triangle, precision2):
        W = WitnessGrid(9, precision2)
        result = pyramid_full_cells(triangle, sparse_net, W, cap=None)
        assert len(result.leaf_centers) >= 1
        assert result.leaf_diameter < 0.05

    def test_single_cell_test_agrees_with_the_scan(self, sparse_net, triangle, precision2):
        W = WitnessGrid(7, precision2)
        box = enclosing_box(triangle, sparse_net, W, sparse_net.lambda_, 2 * W.epsilon)
        assert is_full_cell(PyramidCell(0, (0, 0), triangle), triangle, sparse_net, box)

        full = exhaustive_full_leaves(triangle, sparse_net, W, box)
        rng = np.random.default_rng(1)
        n = box.side // box.grid_side
        for index in rng.integers(0, n, size=(200, 2)).tolist():
            center = (box.cell_lo(box.levels, index) + box.grid_side // 2) & (precision2.scale - 1)
            cell = PyramidCell(box.levels, tuple(index), triangle)
            assert is_full_cell(cell, triangle, sparse_net, box) == (tuple(center.tolist()) in full)


class TestAlphaWitness:
    @pytest.fixture
    def lattice(self, precision2):
        return LandmarkSet(lattice_points(2, precision2), 0.25, 1.0, precision2)

    def test_vertex_threshold(self, lattice, precision2):
        w = precision2.point((0.1, 0.0))
        # landmark 4 sits at (0.25, 0), 0.05 farther than landmark 0
        assert is_alpha_witness(w, (0,), lattice, 0.0)
        assert not is_alpha_witness(w, (4,), lattice, 0.04)
        assert is_alpha_witness(w, (4,), lattice, 0.06)

    def test_edge(self, lattice, precision2):
        assert is_alpha_witness(precision2.point((0.1, 0.0)), (0, 4), lattice, 0.0)

    def test_negative_alpha(self, lattice, precision2):
        with pytest.raises(ValueError):
            is_alpha_witness(TorusPoint((0, 0)), (0,), lattice, -0.1)


class TestRelaxedComplex:
    def test_contains_the_delaunay_triangles(self, sparse_net, precision2):
        W = WitnessGrid(8, precision2)
        K0 = build_rdc0(sparse_net, W, W.epsilon, theta0=0.1, use_cap=False)
        delaunay = brute_force_delaunay(sparse_net)
        assert delaunay.issubset(K0)

    def test_epsilon_must_match_the_grid(self, sparse_net, precision2):
        W = WitnessGrid(8, precision2)
        with pytest.raises(ValueError):
            build_rdc0(sparse_net, W, 2 * W.epsilon, theta0=0.1)

    def test_threshold_must_be_positive(self, sparse_net, precision2):
        with pytest.raises(ValueError):
            RelaxedDelaunay(sparse_net, WitnessGrid(8, precision2), theta0=0.0, delta=0.01)

    def test_parallel_pyramids_agree(self, sparse_net, precision2):
        W = WitnessGrid(8, precision2)
        serial = RelaxedDelaunay(sparse_net, W, theta0=0.1, delta=0.0, use_cap=False).build()
        parallel = RelaxedDelaunay(sparse_net, W, theta0=0.1, delta=0.0, use_cap=False, workers=3).build()
        assert serial == parallel

    def test_check_vertex_against_delta(self, sparse_net, precision2):
        W = WitnessGrid(9, precision2)
        K0 = build_rdc0(sparse_net, W, W.epsilon, theta0=0.05, use_cap=False)
        _, mu_bar_prime = perturbed_net_params(sparse_net.lambda_, sparse_net.mu_bar, 0.0)
        # no simplex of a 0.25-spaced lattice is protected by a whole lattice step
        assert not check_vertex(0, K0, sparse_net, W, 0.25, W.epsilon, 0.05, mu_bar_prime)
        top = [s for s in K0.incident(0) if len(s) == 3]
        if min(measure_protection(s, sparse_net)[0] for s in top) > 2 * W.epsilon:
            assert check_vertex(0, K0, sparse_net, W, 0.0, W.epsilon, 0.05, mu_bar_prime)


class TestRunAlgorithm2:
    @pytest.fixture
    def fine(self):
        precision = PrecisionConfig(2, 24)
        L = LandmarkSet(jittered_lattice(2, precision, 0.02, seed=5), 0.21, 0.8, precision)
        return L, WitnessGrid(16, precision)

    def test_reports_delta_star(self, fine):
        L, W = fine
        config = EngineConfig(rho=0.03, max_rounds=1, practical_mode=True, delta=0.001, theta_0=0.05)
        _, _, delta_star, report = run_algorithm2(L, W, config)
        _, mu_bar_prime = perturbed_net_params(L.lambda_, L.mu_bar, 0.03 / L.lambda_)
        assert report.delta == 0.001
        assert delta_star == pytest.approx(0.001 - 34 * math.sqrt(2) * W.epsilon / (0.05 * mu_bar_prime))
        assert report.delta_star == delta_star

    @pytest.mark.slow
    def test_terminates_with_a_protected_triangulation(self):
        precision = PrecisionConfig(2, 28)
        L = LandmarkSet(jittered_lattice(2, precision, 0.02, seed=5), 0.21, 0.8, precision)
        W = WitnessGrid(20, precision)
        for seed in range(10):
            config = EngineConfig(rho=0.03, rng_seed=seed, practical_mode=True, delta=0.001, theta_0=0.05)
            L_out, K, delta_star, report = run_algorithm2(L, W, config)
            assert report.terminated
            assert delta_star > 0
            assert K == brute_force_delaunay(L_out)
            assert all(K.has_good_link(p, 2) for p in K.vertices)

            lambda_prime, _ = perturbed_net_params(L.lambda_, L.mu_bar, 0.03 / L.lambda_)
            theta_star = output_thickness_bound(delta_star, lambda_prime, L.mu_bar, 2)
            for sigma in K.simplices_of_dim(2):
                assert measure_protection(sigma, L_out)[0] >= delta_star
                assert measure_thickness(sigma, L_out)[0] >= theta_star

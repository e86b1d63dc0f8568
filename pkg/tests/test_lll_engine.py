import numpy as np
import pytest

from twd.complex import euler_characteristic
from twd.errors import InfeasibleParametersError
from twd.geometry import LandmarkSet, WitnessGrid, generate_net, sq_dists_to
from twd.lll_engine import EngineConfig, RunReport, neighborhood_I, resample_event, run_algorithm1
from twd.oracle import brute_force_delaunay, oracle_delaunay

from conftest import jittered_lattice, lattice_points


def assert_delaunay_triangulation(L, K):
    assert K == brute_force_delaunay(L)
    assert euler_characteristic(K) == 0
    assert all(K.has_good_link(p, L.d) for p in K.vertices)
    assert sorted(K.vertices) == list(range(L.n))


class TestEngineConfig:
    def test_default_round_cap(self):
        assert EngineConfig(rho=0.01).rounds_for(16) == 800

    def test_explicit_round_cap(self):
        assert EngineConfig(rho=0.01, max_rounds=7).rounds_for(16) == 7

    def test_round_cap_must_be_positive(self):
        with pytest.raises(InfeasibleParametersError):
            EngineConfig(rho=0.01, max_rounds=0).rounds_for(16)

    def test_report_json(self):
        report = RunReport(rounds=2, event_counts={3: 1, 1: 1}, bad_link_history=[(1, 1), (2, 3)])
        data = report.to_json_dict()
        assert data['event_counts'] == {'1': 1, '3': 1}
        assert data['bad_link_history'] == [[1, 1], [2, 3]]
        assert data['terminated'] is False


class TestNeighbourhood:
    def test_matches_a_linear_scan(self, precision2):
        L = generate_net(0.05, 0.8, seed=2, precision=precision2)
        radius = 5 * L.lambda_ + 3 * L.mu_bar * L.lambda_ / 2
        for p in (0, L.n // 2, L.n - 1):
            sq = sq_dists_to(L.anchors, L.anchors[p], precision2)
            expected = set(np.flatnonzero(sq <= precision2.sq_radius(radius)).tolist())
            assert neighborhood_I(p, L) == expected
            assert p in neighborhood_I(p, L)

    def test_is_local_for_small_radius(self, precision2):
        L = generate_net(0.05, 0.8, seed=2, precision=precision2)
        assert len(neighborhood_I(0, L)) < L.n


class TestResampleEvent:
    def test_only_the_neighbourhood_moves(self, precision2):
        net = generate_net(0.05, 0.8, seed=4, precision=precision2)
        L = net.with_current(net.anchors, rho=0.01)
        rng = np.random.default_rng(0)
        L2, moved = resample_event(3, L, rng)
        assert moved == sorted(neighborhood_I(3, L))
        still = np.setdiff1d(np.arange(L.n), moved)
        assert (L2.current[still] == L.current[still]).all()
        assert (L2.anchors == L.anchors).all()
        assert sq_dists_to(L2.current, L2.anchors, precision2).max() <= precision2.sq_radius(0.01)

    def test_input_is_untouched(self, sparse_net):
        L = sparse_net.with_current(sparse_net.anchors, rho=0.03)
        before = L.current.copy()
        resample_event(0, L, np.random.default_rng(1))
        assert (L.current == before).all()


class TestRunAlgorithm1:
    def test_small_practice_run(self, sparse_net, precision2):
        W = WitnessGrid(8, precision2)
        config = EngineConfig(rho=0.03, rng_seed=0, practical_mode=True)
        L, K, report = run_algorithm1(sparse_net, W, config)
        assert report.terminated
        assert not report.theory_certified
        assert report.rounds == sum(report.event_counts.values())
        assert_delaunay_triangulation(L, K)
        assert sq_dists_to(L.current, L.anchors, precision2).max() <= precision2.sq_radius(0.03)

    def test_same_seed_same_run(self, sparse_net, precision2):
        W = WitnessGrid(7, precision2)
        config = EngineConfig(rho=0.03, rng_seed=4, practical_mode=True, max_rounds=5)
        first = run_algorithm1(sparse_net, W, config)
        second = run_algorithm1(sparse_net, W, config)
        assert (first[0].current == second[0].current).all()
        assert first[1] == second[1]
        assert first[2].bad_link_history == second[2].bad_link_history

    def test_theory_mode_rejects_desk_parameters(self, sparse_net, precision2):
        with pytest.raises(InfeasibleParametersError):
            run_algorithm1(sparse_net, WitnessGrid(8, precision2), EngineConfig(rho=0.03))

    def test_perturbation_too_large(self, sparse_net, precision2):
        with pytest.raises(InfeasibleParametersError):
            run_algorithm1(sparse_net, WitnessGrid(8, precision2), EngineConfig(rho=0.05, practical_mode=True))

    def test_round_cap_returns_partial_state(self, precision2):
        # an exact lattice has cocircular witnesses, the first event is forced at landmark 0
        L = LandmarkSet(lattice_points(2, precision2), 0.2, 1.0, precision2)
        W = WitnessGrid(2, precision2)
        _, _, report = run_algorithm1(L, W, EngineConfig(rho=0.03, max_rounds=1, practical_mode=True))
        assert report.rounds == 1
        assert report.forced_events == 1
        assert report.bad_link_history[0] == (1, 0)
        assert not report.terminated

    @pytest.mark.slow
    def test_random_nets(self, precision2):
        W = WitnessGrid(9, precision2)
        for seed in range(3):
            net = generate_net(0.1, 0.8, seed=seed, precision=precision2)
            config = EngineConfig(rho=0.02, rng_seed=seed, practical_mode=True, workers=2)
            L, K, report = run_algorithm1(net, W, config)
            assert report.terminated
            assert_delaunay_triangulation(L, K)

    @pytest.mark.slow
    def test_three_dimensional_nets(self, precision3):
        W = WitnessGrid(7, precision3)
        for seed in range(5):
            net = LandmarkSet(jittered_lattice(2, precision3, 0.015, seed=seed), 0.25, 0.85, precision3)
            assert 40 <= net.n <= 80
            config = EngineConfig(rho=0.85 * 0.25 / 8, rng_seed=seed, practical_mode=True, workers=2)
            L, K, report = run_algorithm1(net, W, config)
            assert report.terminated
            assert_delaunay_triangulation(L, K)

    @pytest.mark.slow
    def test_cocircular_square_inside_a_net(self, precision2):
        points = jittered_lattice(3, precision2, 0.01, seed=11).copy()
        square = [2 * 8 + 2, 2 * 8 + 3, 3 * 8 + 2, 3 * 8 + 3]
        points[square] = lattice_points(3, precision2)[square]
        net = LandmarkSet(points, 0.11, 0.9, precision2)
        assert tuple(square) in oracle_delaunay(net).cospherical_groups

        W = WitnessGrid(9, precision2)
        for seed in range(10):
            config = EngineConfig(rho=0.9 * 0.11 / 8, rng_seed=seed, practical_mode=True)
            L, K, report = run_algorithm1(net, W, config)
            assert report.terminated
            assert report.points_resampled >= 1
            assert_delaunay_triangulation(L, K)

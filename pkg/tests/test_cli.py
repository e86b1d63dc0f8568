import json

import numpy as np
import pytest

import main as cli
from main import EXIT_INFEASIBLE, EXIT_IO, EXIT_NOT_TERMINATED, EXIT_OK, main
from scripts.complex_file_parser import read_complex_file
from scripts.point_file_parser import read_point_file
from twd.errors import (
    FileFormatError, InfeasibleParametersError, InternalError, LiftError, TWDError, UnknownVertexError,
)

PARAMS_KEYS = {
    'd', 'lambda', 'mu_bar', 'rho', 'epsilon', 'lambda_prime', 'mu_bar_prime', 'I', 'K', 'Gamma',
    'logJ', 'alpha', 'delta', 'theta_0', 'delta_star', 'n0', 'feasible_witness', 'feasible_rdc',
}


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


@pytest.fixture
def grid_file(tmp_path):
    """Jittered 4 x 4 lattice written by gen-grid"""
    path = str(tmp_path / "grid.pts")
    code = main(['gen-grid', '--k', '2', '--jitter', '0.02', '--seed', '5', '--output', path,
                 '--report', str(tmp_path / "grid.json")])
    assert code == EXIT_OK
    return path


class TestGenerators:
    def test_gen_net(self, tmp_path):
        out = str(tmp_path / "net.pts")
        report = str(tmp_path / "net.json")
        assert main(['gen-net', '--lambda', '0.2', '--mu-bar', '0.7', '--seed', '3',
                     '--output', out, '--report', report]) == EXIT_OK
        data = read_json(report)
        assert read_point_file(out).n == data['n']
        assert data['seed'] == 3 and data['Q'] == 20

    def test_gen_grid(self, tmp_path, grid_file):
        points = read_point_file(grid_file)
        assert points.n == 16
        assert read_json(tmp_path / "grid.json")['jitter'] == 0.02

    def test_gen_grid_in_three_dimensions(self, tmp_path):
        out = str(tmp_path / "g3.pts")
        assert main(['gen-grid', '--k', '1', '--dimension', '3', '--output', out,
                     '--report', str(tmp_path / "r.json")]) == EXIT_OK
        assert read_point_file(out).d == 3


class TestParams:
    def test_report_to_stdout(self, capsys):
        code = main(['params', '--lambda', '0.1', '--mu-bar', '1.0', '--rho', '0.02', '--epsilon', '1e-6'])
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert set(data) == PARAMS_KEYS
        assert data['I'] == pytest.approx(196)
        assert data['feasible_witness'] is False

    def test_infeasible_perturbation(self, tmp_path):
        code = main(['params', '--lambda', '0.1', '--mu-bar', '0.4', '--rho', '0.01', '--epsilon', '1e-5',
                     '--report', str(tmp_path / "p.json")])
        assert code == EXIT_INFEASIBLE


class TestWitness:
    def test_witness_complex(self, tmp_path, grid_file):
        out = str(tmp_path / "wit.cx")
        report = str(tmp_path / "wit.json")
        code = main(['witness', '--landmarks', grid_file, '--epsilon', '0.006', '--lambda', '0.21',
                     '--mu-bar', '0.8', '--output', out, '--report', report])
        assert code == EXIT_OK
        data = read_json(report)
        K = read_complex_file(out, 16)
        assert data['f_vector'] == K.f_vector()
        assert data['grid_level'] == 8
        assert data['tie_groups'] == []

    def test_estimated_net_parameters(self, tmp_path, grid_file):
        code = main(['witness', '--landmarks', grid_file, '--epsilon', '0.006',
                     '--output', str(tmp_path / "wit.cx"), '--report', str(tmp_path / "wit.json")])
        assert code in (EXIT_OK, EXIT_INFEASIBLE)

    def test_missing_landmarks(self, tmp_path):
        code = main(['witness', '--landmarks', str(tmp_path / "none.pts"), '--epsilon', '0.01',
                     '--lambda', '0.2', '--mu-bar', '0.8', '--output', str(tmp_path / "w.cx")])
        assert code == EXIT_IO

    def test_malformed_landmarks(self, tmp_path):
        bad = tmp_path / "bad.pts"
        bad.write_text("2 3 20\n1 2\n")
        code = main(['witness', '--landmarks', str(bad), '--epsilon', '0.01',
                     '--lambda', '0.2', '--mu-bar', '0.8', '--output', str(tmp_path / "w.cx")])
        assert code == EXIT_IO


class TestRuns:
    def run_args(self, tmp_path, grid_file, *extra):
        return ['algo1', '--landmarks', grid_file, '--epsilon', '0.006', '--rho', '0.03',
                '--lambda', '0.21', '--mu-bar', '0.8',
                '--output-points', str(tmp_path / "out.pts"), '--output-complex', str(tmp_path / "out.cx"),
                '--report', str(tmp_path / "run.json"), *extra]

    def test_algo1_then_verify(self, tmp_path, grid_file):
        assert main(self.run_args(tmp_path, grid_file, '--practical')) == EXIT_OK
        run = read_json(tmp_path / "run.json")
        assert run['terminated'] is True
        assert run['theory_certified'] is False

        verify_report = str(tmp_path / "verify.json")
        code = main(['verify', '--points', str(tmp_path / "out.pts"), '--complex', str(tmp_path / "out.cx"),
                     '--lambda', '0.24', '--mu-bar', '0.45', '--report', verify_report])
        assert code == EXIT_OK
        data = read_json(verify_report)
        assert data['oracle']['equals_delaunay'] is True
        assert data['topology']['euler_characteristic'] == 0
        assert data['topology']['bad_link_vertices'] == []
        assert data['topology']['pseudomanifold'] is True
        assert set(data['verifiers']) == {
            'inheritance', 'inheritance_power', 'inheritance_star2', 'prot_to_power', 'power_to_prot',
        }

    def test_algo1_theory_mode_is_infeasible(self, tmp_path, grid_file):
        assert main(self.run_args(tmp_path, grid_file)) == EXIT_INFEASIBLE

    def test_algo1_round_cap(self, tmp_path):
        lattice = str(tmp_path / "lattice.pts")
        assert main(['gen-grid', '--k', '2', '--output', lattice, '--report', str(tmp_path / "g.json")]) == EXIT_OK
        code = main(['algo1', '--landmarks', lattice, '--epsilon', '0.4', '--rho', '0.03',
                     '--lambda', '0.2', '--mu-bar', '1.0', '--max-rounds', '1', '--practical',
                     '--output-points', str(tmp_path / "o.pts"), '--output-complex', str(tmp_path / "o.cx"),
                     '--report', str(tmp_path / "r.json")])
        assert code == EXIT_NOT_TERMINATED
        report = read_json(tmp_path / "r.json")
        assert report['rounds'] == 1 and report['forced_events'] == 1
        assert read_point_file(str(tmp_path / "o.pts")).n == 16

    def test_algo2_reports_delta_star(self, tmp_path):
        grid = str(tmp_path / "fine.pts")
        assert main(['gen-grid', '--k', '2', '--jitter', '0.02', '--precision-bits', '24', '--output', grid,
                     '--report', str(tmp_path / "g.json")]) == EXIT_OK
        code = main(['algo2', '--landmarks', grid, '--epsilon', '2.2e-5', '--rho', '0.03',
                     '--lambda', '0.21', '--mu-bar', '0.8', '--delta', '0.001', '--theta0', '0.05',
                     '--max-rounds', '1', '--practical',
                     '--output-points', str(tmp_path / "o.pts"), '--output-complex', str(tmp_path / "o.cx"),
                     '--report', str(tmp_path / "r.json")])
        assert code in (EXIT_OK, EXIT_NOT_TERMINATED)
        report = read_json(tmp_path / "r.json")
        assert report['delta'] == 0.001
        assert report['delta_star'] is not None


class TestFilesAndErrors:
    def test_ingest_export_plot(self, tmp_path):
        rng = np.random.default_rng(2)
        np.savetxt(tmp_path / "data.txt", rng.uniform(-3, 3, size=(30, 2)))
        pts = str(tmp_path / "data.pts")
        assert main(['ingest', '--input', str(tmp_path / "data.txt"), '--output', pts, '--margin', '0.1',
                     '--report', str(tmp_path / "i.json")]) == EXIT_OK
        assert read_json(tmp_path / "i.json")['n'] == 30
        assert main(['export', '--points', pts, '--output', str(tmp_path / "back.txt"),
                     '--report', str(tmp_path / "e.json")]) == EXIT_OK
        assert np.loadtxt(tmp_path / "back.txt").shape == (30, 2)

        (tmp_path / "k.cx").write_text("0 1 2\n")
        assert main(['plot', '--points', pts, '--complex', str(tmp_path / "k.cx"),
                     '--output', str(tmp_path / "k.svg")]) == EXIT_OK
        assert (tmp_path / "k.svg").exists()

    def test_plot_rejects_three_dimensions(self, tmp_path):
        out = str(tmp_path / "g3.pts")
        main(['gen-grid', '--k', '1', '--dimension', '3', '--output', out, '--report', str(tmp_path / "r.json")])
        (tmp_path / "k.cx").write_text("0 1 2 3\n")
        code = main(['plot', '--points', out, '--complex', str(tmp_path / "k.cx"), '--output', str(tmp_path / "x.svg")])
        assert code == EXIT_IO

    def test_argument_errors(self):
        assert main(['algo1']) == 2
        assert main(['no-such-command']) == 2

    def test_export_without_transform(self, tmp_path, grid_file):
        code = main(['export', '--points', grid_file, '--output', str(tmp_path / "x.txt")])
        assert code == EXIT_IO

    @pytest.mark.parametrize('error, code', [
        (InfeasibleParametersError("mu_bar"), EXIT_INFEASIBLE),
        (LiftError("half the torus"), EXIT_INFEASIBLE),
        (InternalError("sampling cap"), EXIT_NOT_TERMINATED),
        (UnknownVertexError(7), EXIT_IO),
        (FileFormatError("bad header"), EXIT_IO),
        (TWDError("other"), EXIT_IO),
    ])
    def test_every_library_error_has_a_documented_exit_code(self, monkeypatch, error, code):
        def fail(args, config):
            raise error
        monkeypatch.setattr(cli, 'cmd_params', fail)
        assert main(['params', '--lambda', '0.1', '--mu-bar', '1.0', '--rho', '0.02', '--epsilon', '1e-6']) == code

    def test_exit_codes_in_help(self, capsys):
        assert main(['--help']) == EXIT_OK
        text = ' '.join(capsys.readouterr().out.split())
        assert '4 I/O or format error' in text

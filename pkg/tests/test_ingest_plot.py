import itertools

import numpy as np
import pytest

from twd.complex import SimplicialComplex
from twd.errors import FileFormatError, IngestError, UnsupportedDimensionError
from twd.geometry import PrecisionConfig

from scripts.complex_file_parser import write_complex_file
from scripts.ingest import (
    RealPointFileParser, export_file, export_points, fit_transform, ingest_file, ingest_points, round_trip_error,
)
from scripts.plot_svg import edge_segments, plot_svg, render_svg
from scripts.point_file_parser import read_point_file, write_point_file

from conftest import lattice_points


def lattice_triangulation(m: int) -> SimplicialComplex:
    """Two triangles per square of the m x m lattice, indices i * m + j"""
    def v(i, j):
        return (i % m) * m + (j % m)
    triangles = []
    for i, j in itertools.product(range(m), repeat=2):
        triangles.append((v(i, j), v(i + 1, j), v(i + 1, j + 1)))
        triangles.append((v(i, j), v(i, j + 1), v(i + 1, j + 1)))
    return SimplicialComplex.from_maximal(triangles)


@pytest.fixture
def box_points():
    rng = np.random.default_rng(8)
    data = rng.uniform(0, 10, size=(40, 2))
    data[0] = (0.0, 0.0)
    data[1] = (10.0, 10.0)
    return data


class TestFitTransform:
    def test_scale_and_offset(self, box_points):
        transform = fit_transform(box_points, 0.25)
        assert transform.scale == pytest.approx(1 / 20)
        assert transform.offset == pytest.approx((0.25, 0.25))
        mapped = transform.forward(box_points)
        assert mapped.min() >= 0.25 - 1e-12 and mapped.max() <= 0.75 + 1e-12

    def test_data_inside_the_box_is_kept(self):
        data = np.array([[0.2, 0.3], [0.5, 0.8], [0.7, 0.4]])
        transform = fit_transform(data, 0.1)
        assert transform.scale == 1.0
        assert transform.offset == (0.0, 0.0)

    def test_bad_margin(self, box_points):
        with pytest.raises(IngestError):
            fit_transform(box_points, 0.5)

    def test_coincident_points(self):
        with pytest.raises(IngestError):
            fit_transform(np.full((3, 2), 5.0), 0.0)


class TestIngestPoints:
    def test_round_trip_error(self, box_points):
        precision = PrecisionConfig(2)
        error = round_trip_error(box_points, 0.25, precision)
        assert error <= 2.0 ** -precision.Q / (1 / 20)

    def test_export_inverts_ingest(self, box_points):
        precision = PrecisionConfig(2, 24)
        points, transform = ingest_points(box_points, 0.1, precision)
        assert points.dtype == np.int64
        assert ((points >= 0) & (points < precision.scale)).all()
        assert export_points(points, precision, transform) == pytest.approx(box_points, abs=1e-5)

    def test_zero_margin_keeps_the_extremes_apart(self):
        precision = PrecisionConfig(2)
        data = np.array([[0.0, 0.0], [10.0, 10.0], [3.0, 7.0]])
        points, transform = ingest_points(data, 0.0, precision)
        assert len({tuple(p) for p in points.tolist()}) == 3
        assert points.max() == precision.scale - 1
        error = np.abs(export_points(points, precision, transform) - data).max()
        assert error <= 2.0 ** -precision.Q / transform.scale

    def test_data_touching_the_seam_is_rescaled(self):
        precision = PrecisionConfig(2, 16)
        data = np.array([[0.0, 0.2], [1.0, 0.5], [0.5, 1.0]])
        points, transform = ingest_points(data, 0.0, precision)
        assert transform.scale < 1.0
        assert len({tuple(p) for p in points.tolist()}) == 3
        assert export_points(points, precision, transform) == pytest.approx(data, abs=2.0 ** -15)

    @pytest.mark.parametrize('data', [
        np.zeros(6),
        np.zeros((4, 3)),
        np.array([[0.0, 1.0], [np.nan, 2.0], [3.0, 4.0]]),
        np.array([[0.0, 1.0], [2.0, 3.0]]),
    ])
    def test_rejected(self, data):
        with pytest.raises(IngestError):
            ingest_points(data, 0.0, PrecisionConfig(2))


class TestIngestFiles:
    def test_ingest_then_export(self, tmp_path, box_points):
        source = tmp_path / "data.txt"
        np.savetxt(source, box_points)
        summary = ingest_file(str(source), str(tmp_path / "data.pts"), 0.25, 20)
        assert summary['n'] == 40 and summary['d'] == 2
        assert summary['scale'] == pytest.approx((0.5 - 2.0 ** -20) / 10, rel=1e-12)

        loaded = read_point_file(str(tmp_path / "data.pts"))
        assert loaded.has_transform

        export_file(str(tmp_path / "data.pts"), str(tmp_path / "back.txt"))
        back = np.loadtxt(tmp_path / "back.txt")
        assert np.abs(back - box_points).max() <= 2.0 ** -20 / 0.05

    def test_non_finite_rows(self, tmp_path):
        source = tmp_path / "data.txt"
        source.write_text("0 0\n1 inf\n2 2\n3 1\n")
        parser = RealPointFileParser(str(source))
        valid, invalid, report = parser.validate_entries(parser.parse())
        assert len(valid) == 3 and report['invalid_entries'] == 1
        with pytest.raises(IngestError):
            ingest_file(str(source), str(tmp_path / "out.pts"), 0.0, 20)

    def test_ragged_file(self, tmp_path):
        source = tmp_path / "data.txt"
        source.write_text("0 0\n1\n")
        with pytest.raises(FileFormatError):
            RealPointFileParser(str(source)).parse()

    def test_export_needs_a_transform(self, tmp_path, small_net):
        path = str(tmp_path / "net.pts")
        write_point_file(path, small_net.anchors, small_net.precision)
        with pytest.raises(FileFormatError):
            export_file(path, str(tmp_path / "out.txt"))


class TestPlot:
    def test_seam_edges_are_drawn_twice(self, precision2):
        points = lattice_points(2, precision2)
        K = lattice_triangulation(4)
        segments, seams = edge_segments(points, K, precision2)
        assert len(K.simplices_of_dim(1)) == 48
        assert seams == 15
        assert len(segments) == 63
        for a, b in segments:
            assert np.hypot(b[0] - a[0], b[1] - a[1]) <= 0.36

    def test_output_is_deterministic(self, precision2):
        points = lattice_points(2, precision2)
        K = lattice_triangulation(4)
        first = render_svg(points, K, precision2)
        assert first == render_svg(points, K, precision2)
        assert first.lstrip().startswith('<?xml')
        assert 'edge-0' in first

    def test_only_the_plane(self, precision3):
        points = lattice_points(1, precision3)
        K = SimplicialComplex.from_maximal([(0, 1, 2, 3)])
        with pytest.raises(UnsupportedDimensionError):
            edge_segments(points, K, precision3)

    def test_plot_files(self, tmp_path, precision2):
        write_point_file(str(tmp_path / "g.pts"), lattice_points(2, precision2), precision2)
        write_complex_file(str(tmp_path / "g.cx"), lattice_triangulation(4))
        count = plot_svg(str(tmp_path / "g.pts"), str(tmp_path / "g.cx"), str(tmp_path / "g.svg"))
        assert count == 63
        assert (tmp_path / "g.svg").read_text().count('edge-') == 63

"""
SVG rendering of a complex on the flat 2-torus

Draws the unit square with the landmarks and every edge of the complex.
An edge whose shortest representative crosses the seam is drawn twice,
once from each endpoint, so both halves show inside the square.
"""

import io
import sys
from pathlib import Path
from typing import List, Tuple

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt
import numpy as np
from loguru import logger

sys.path.insert(0, str(Path(__file__).parent.parent))

from twd.complex import SimplicialComplex
from twd.errors import UnsupportedDimensionError
from twd.geometry import PrecisionConfig, wrap_diff

from scripts.complex_file_parser import read_complex_file
from scripts.point_file_parser import read_point_file

Segment = Tuple[Tuple[float, float], Tuple[float, float]]


def edge_segments(points: np.ndarray, K: SimplicialComplex,
                  precision: PrecisionConfig) -> Tuple[List[Segment], int]:
    """
    Straight segments to draw for the edges of K

    Returns:
        Tuple[List[Segment], int]: segments in unit-square coordinates and the number of seam edges
    """
    if precision.d != 2:
        raise UnsupportedDimensionError(f"Plotting needs d=2, got d={precision.d}")
    segments: List[Segment] = []
    seams = 0
    scale = float(precision.scale)
    for i, j in K.simplices_of_dim(1):
        p, q = points[i], points[j]
        raw = q - p
        delta = wrap_diff(raw, precision)
        segments.append((tuple(p / scale), tuple((p + delta) / scale)))
        if (delta != raw).any():
            seams += 1
            segments.append((tuple(q / scale), tuple((q - delta) / scale)))
    return segments, seams


def render_svg(points: np.ndarray, K: SimplicialComplex, precision: PrecisionConfig) -> str:
    """
    SVG document for a 2-D point set and complex

    The output is byte-identical for identical input.

    Raises:
        UnsupportedDimensionError: d != 2
    """
    segments, seams = edge_segments(points, K, precision)
    coords = np.asarray(points, dtype=float).reshape(-1, 2) / precision.scale

    with matplotlib.rc_context({'svg.hashsalt': 'twd', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(6, 6))
        try:
            ax.set_xlim(0, 1)
            ax.set_ylim(0, 1)
            ax.set_aspect('equal')
            ax.set_xticks([])
            ax.set_yticks([])
            for k, (a, b) in enumerate(segments):
                ax.plot([a[0], b[0]], [a[1], b[1]], '-', color='#264653', lw=0.8, gid=f"edge-{k}")
            if len(coords):
                ax.scatter(coords[:, 0], coords[:, 1], s=8, c='#E63946', zorder=3, gid="points")

            buffer = io.StringIO()
            fig.savefig(buffer, format='svg', metadata={'Date': None})
        finally:
            plt.close(fig)

    logger.debug(f"Rendered {len(segments)} segments ({seams} seam edges) and {len(coords)} points")
    return buffer.getvalue()


def plot_svg(points_path: str, complex_path: str, output_path: str) -> int:
    """
    Render a point file and a complex file to an SVG file

    Returns:
        int: number of line elements written
    """
    point_set = read_point_file(points_path)
    if point_set.d != 2:
        raise UnsupportedDimensionError(f"Plotting needs d=2, got d={point_set.d}")
    K = read_complex_file(complex_path, point_set.n)
    svg = render_svg(point_set.points, K, point_set.precision)
    try:
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write(svg)
    except OSError as e:
        logger.error(f"Error writing SVG {output_path}: {str(e)}")
        raise
    segments, _ = edge_segments(point_set.points, K, point_set.precision)
    logger.info(f"Wrote {output_path}")
    return len(segments)


if __name__ == "__main__":
    if len(sys.argv) < 4:
        print("Usage: python plot_svg.py <points_file> <complex_file> <output.svg>")
        sys.exit(1)

    try:
        count = plot_svg(sys.argv[1], sys.argv[2], sys.argv[3])
        print(f"Wrote {count} line elements to {sys.argv[3]}")
    except Exception as e:
        print(f"Error: {e}")
        sys.exit(1)

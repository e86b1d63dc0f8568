"""
Ingestion of R^d point sets onto the unit torus, and the way back

Points are mapped by a translation plus a uniform scale so that their
bounding box lies inside [margin, 1 - margin]^d, then quantized to the
fixed-point lattice. The transform is written into the point-file header
so `export` can undo it.
"""

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from loguru import logger

sys.path.insert(0, str(Path(__file__).parent.parent))

from twd.errors import FileFormatError, IngestError
from twd.geometry import PrecisionConfig

from scripts.point_file_parser import PointFileParser, write_point_file


@dataclass(frozen=True)
class IngestTransform:
    """torus = scale * x + offset"""

    scale: float
    offset: Tuple[float, ...]

    def forward(self, data: np.ndarray) -> np.ndarray:
        return self.scale * data + np.asarray(self.offset)

    def inverse(self, torus: np.ndarray) -> np.ndarray:
        return (torus - np.asarray(self.offset)) / self.scale


class RealPointFileParser:
    """Parser for whitespace-separated real coordinates, one point per line"""

    def __init__(self, input_path: str):
        self.input_path = input_path

        if not os.path.exists(input_path):
            raise FileNotFoundError(f"Input file not found: {input_path}")

    def parse(self) -> np.ndarray:
        """
        Read the coordinates

        Returns:
            np.ndarray: (n, d) float array
        """
        try:
            data = np.loadtxt(self.input_path, dtype=float, comments='#', ndmin=2)
        except ValueError as e:
            logger.error(f"Error parsing real coordinates: {str(e)}")
            raise FileFormatError(f"{self.input_path}: {str(e)}")
        except OSError as e:
            logger.error(f"Error reading input file: {str(e)}")
            raise
        logger.debug(f"Read {data.shape[0]} points of dimension {data.shape[1]} from {self.input_path}")
        return data

    def validate_entries(self, data: np.ndarray) -> tuple:
        """
        Split rows into finite and non-finite ones

        Returns:
            tuple: (valid_rows, invalid_rows, validation_report)
        """
        finite = np.isfinite(data).all(axis=1)
        issues = [{'row': int(i), 'issues': ["Non-finite coordinate"]} for i in np.flatnonzero(~finite)]
        report = {
            'total_entries': int(len(data)),
            'valid_entries': int(finite.sum()),
            'invalid_entries': int((~finite).sum()),
            'issues': issues,
        }
        return data[finite], data[~finite], report


def fit_transform(data: np.ndarray, margin: float, step: float = 0.0) -> IngestTransform:
    """
    Translation plus uniform scale placing the bounding box of data in [margin, 1 - margin - step]^d

    `step` is the lattice spacing of the target precision; the upper face stays one step
    below 1 - margin so that no point rounds onto the seam and wraps to 0. Data already
    inside that box is left unchanged (scale 1, offset 0).

    Raises:
        IngestError: margin outside [0, 1/2) or a degenerate bounding box
    """
    if not 0 <= margin < 0.5:
        raise IngestError(f"Margin must lie in [0, 1/2), got {margin}")
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    d = data.shape[1]
    if (lo >= margin).all() and (hi <= 1 - margin - step).all():
        return IngestTransform(1.0, (0.0,) * d)

    extent = float((hi - lo).max())
    if extent <= 0:
        raise IngestError("Degenerate bounding box: all points coincide")
    scale = (1 - 2 * margin - step) / extent
    offset = tuple(float(margin - scale * v) for v in lo)
    return IngestTransform(scale, offset)


def ingest_points(data: np.ndarray, margin: float,
                  precision: PrecisionConfig) -> Tuple[np.ndarray, IngestTransform]:
    """
    Map real points onto the torus lattice

    Args:
        data (np.ndarray): (n, d) real coordinates
        margin (float): distance kept between the bounding box and the unit-cube boundary
        precision (PrecisionConfig): target precision; its dimension must match data

    Returns:
        Tuple[np.ndarray, IngestTransform]: (n, d) fixed-point coordinates and the transform used

    Raises:
        IngestError: non-finite values, too few points, wrong dimension or degenerate box
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise IngestError(f"Expected a 2-D array of points, got shape {data.shape}")
    n, d = data.shape
    if d != precision.d:
        raise IngestError(f"Points have dimension {d}, precision is set up for d={precision.d}")
    if not np.isfinite(data).all():
        raise IngestError("Input contains non-finite coordinates")
    if n < d + 1:
        raise IngestError(f"Need at least d+1 = {d + 1} points, got {n}")

    transform = fit_transform(data, margin, 1.0 / precision.scale)
    torus = transform.forward(data)
    points = np.rint(torus * precision.scale).astype(np.int64) & (precision.scale - 1)

    logger.info(f"Ingested {n} points (scale={transform.scale:.6g}, offset={transform.offset})")
    logger.warning("Simplices touching the box boundary are Delaunay only for the periodic extension "
                   "of the data, not for the original point set")
    return points, transform


def export_points(points: np.ndarray, precision: PrecisionConfig, transform: IngestTransform) -> np.ndarray:
    """Map fixed-point torus coordinates back to R^d"""
    torus = np.asarray(points, dtype=float) / precision.scale
    return transform.inverse(torus)


def ingest_file(input_path: str, output_path: str, margin: float, precision_bits: int) -> Dict:
    """
    Read real points, ingest them and write a point file with the transform in its header

    Returns:
        Dict: summary with the point count, dimension and transform
    """
    parser = RealPointFileParser(input_path)
    data = parser.parse()
    _, invalid, report = parser.validate_entries(data)
    if len(invalid):
        raise IngestError(f"{input_path}: {report['invalid_entries']} rows have non-finite coordinates")

    precision = PrecisionConfig(data.shape[1], precision_bits)
    points, transform = ingest_points(data, margin, precision)
    write_point_file(output_path, points, precision, transform.scale, transform.offset)
    return {
        'n': int(len(points)),
        'd': precision.d,
        'Q': precision.Q,
        'scale': transform.scale,
        'offset': list(transform.offset),
    }


def export_file(points_path: str, output_path: str) -> Dict:
    """
    Undo the ingestion transform recorded in a point file and write real coordinates

    Raises:
        FileFormatError: the point file carries no transform
    """
    point_set = PointFileParser(points_path).load()
    if not point_set.has_transform:
        raise FileFormatError(f"{points_path}: header has no ingestion transform to undo")
    transform = IngestTransform(point_set.scale, point_set.offset)
    data = export_points(point_set.points, point_set.precision, transform)
    try:
        np.savetxt(output_path, data, fmt='%.17g')
    except OSError as e:
        logger.error(f"Error writing exported points: {str(e)}")
        raise
    logger.info(f"Exported {len(data)} points to {output_path}")
    return {'n': int(len(data)), 'd': point_set.d, 'scale': transform.scale}


def round_trip_error(data: np.ndarray, margin: float, precision: PrecisionConfig) -> float:
    """Largest coordinate error of ingest followed by export"""
    points, transform = ingest_points(data, margin, precision)
    return float(np.abs(export_points(points, precision, transform) - data).max())


if __name__ == "__main__":
    if len(sys.argv) < 3:
        print("Usage: python ingest.py <input_points> <output_points> [margin]")
        sys.exit(1)

    margin_arg = float(sys.argv[3]) if len(sys.argv) > 3 else 0.0
    try:
        summary = ingest_file(sys.argv[1], sys.argv[2], margin_arg, 20)
        print(f"\nIngested {summary['n']} points, scale {summary['scale']:.6g}, offset {summary['offset']}")
    except Exception as e:
        print(f"Error: {e}")
        sys.exit(1)

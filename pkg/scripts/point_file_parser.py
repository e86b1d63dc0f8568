"""
Parser for torus point-set files

Expected format (plain text, whitespace separated):
- line 1: `d n Q`, optionally followed by an ingestion transform
  `scale t_1 ... t_d` meaning torus = scale * x + t
- lines 2..n+1: d integer fixed-point coordinates in [0, 2^Q)

Blank lines and lines starting with `#` after the header are ignored.
"""

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

sys.path.insert(0, str(Path(__file__).parent.parent))

from twd.errors import FileFormatError
from twd.geometry import PrecisionConfig


@dataclass
class PointSet:
    """Fixed-point coordinates plus the transform that produced them, if any"""

    points: np.ndarray
    precision: PrecisionConfig
    scale: Optional[float] = None
    offset: Optional[Tuple[float, ...]] = None

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.precision.d

    @property
    def has_transform(self) -> bool:
        return self.scale is not None


class PointFileParser:
    """Parser for point-set files"""

    def __init__(self, points_path: str):
        """
        Initialize the parser

        Args:
            points_path (str): Path to the point-set file
        """
        self.points_path = points_path
        self.header: Optional[Dict] = None

        if not os.path.exists(points_path):
            raise FileNotFoundError(f"Point file not found: {points_path}")

    def parse(self) -> List[Dict]:
        """
        Parse the point file and return one entry per coordinate line

        Returns:
            List[Dict]: entries with 'line' and 'coords' keys
        """
        entries = []

        try:
            with open(self.points_path, 'r', encoding='utf-8') as f:
                lines = f.readlines()
        except OSError as e:
            logger.error(f"Error reading point file: {str(e)}")
            raise

        body = iter(enumerate(lines, start=1))
        for _, raw in body:
            if raw.strip() and not raw.lstrip().startswith('#'):
                self.header = self._parse_header(raw)
                break
        if self.header is None:
            raise FileFormatError(f"{self.points_path}: missing header line 'd n Q'")

        for line_num, raw in body:
            text = raw.strip()
            if not text or text.startswith('#'):
                continue
            entries.append(self._parse_row(text, line_num))

        logger.debug(f"Parsed {len(entries)} coordinate lines from {self.points_path}")
        return entries

    def _parse_header(self, raw: str) -> Dict:
        tokens = raw.split()
        if len(tokens) < 3:
            raise FileFormatError(f"{self.points_path}: header must start with 'd n Q'")
        try:
            d, n, q = (int(t) for t in tokens[:3])
        except ValueError:
            raise FileFormatError(f"{self.points_path}: header must start with integers 'd n Q', got {raw.strip()!r}")

        header = {'d': d, 'n': n, 'Q': q, 'scale': None, 'offset': None}
        extra = tokens[3:]
        if extra:
            if len(extra) != d + 1:
                raise FileFormatError(
                    f"{self.points_path}: transform needs 'scale' and {d} offsets, got {len(extra)} values"
                )
            try:
                header['scale'] = float(extra[0])
                header['offset'] = tuple(float(t) for t in extra[1:])
            except ValueError:
                raise FileFormatError(f"{self.points_path}: transform values must be numbers")
            if not header['scale'] > 0:
                raise FileFormatError(f"{self.points_path}: transform scale must be positive")
        if n < 0:
            raise FileFormatError(f"{self.points_path}: negative point count {n}")
        return header

    def _parse_row(self, text: str, line_num: int) -> Dict:
        """
        Parse a single coordinate line

        Args:
            text (str): stripped line content
            line_num (int): 1-based line number, kept for reporting

        Returns:
            dict: entry with the parsed coordinates, or the raw tokens when not integers
        """
        tokens = text.split()
        try:
            coords = tuple(int(t) for t in tokens)
        except ValueError:
            return {'line': line_num, 'coords': None, 'raw': text}
        return {'line': line_num, 'coords': coords, 'raw': text}

    def validate_entries(self, entries: List[Dict]) -> tuple:
        """
        Validate parsed entries against the header

        Args:
            entries (List[Dict]): output of parse()

        Returns:
            tuple: (valid_entries, invalid_entries, validation_report)
        """
        if self.header is None:
            raise FileFormatError("validate_entries() called before parse()")
        d, q = self.header['d'], self.header['Q']
        scale = 1 << q

        valid_entries = []
        invalid_entries = []
        issues = []

        for entry in entries:
            entry_issues = []
            coords = entry['coords']
            if coords is None:
                entry_issues.append(f"Non-integer coordinates: {entry['raw']!r}")
            elif len(coords) != d:
                entry_issues.append(f"Expected {d} coordinates, got {len(coords)}")
            else:
                outside = [c for c in coords if not 0 <= c < scale]
                if outside:
                    entry_issues.append(f"Coordinates outside [0, 2^{q}): {outside}")

            if entry_issues:
                invalid_entries.append(entry)
                issues.append({'line': entry['line'], 'issues': entry_issues})
            else:
                valid_entries.append(entry)

        count_ok = len(entries) == self.header['n']
        if not count_ok:
            issues.append({
                'line': None,
                'issues': [f"Header announces {self.header['n']} points, file has {len(entries)}"],
            })

        report = {
            'total_entries': len(entries),
            'valid_entries': len(valid_entries),
            'invalid_entries': len(invalid_entries),
            'count_matches_header': count_ok,
            'issues': issues,
        }

        return valid_entries, invalid_entries, report

    def load(self) -> PointSet:
        """
        Parse and validate, rejecting the file on any issue

        Returns:
            PointSet: the points with their precision and optional transform

        Raises:
            FileFormatError: malformed header, malformed line, out-of-range
                coordinate or a count that disagrees with the header
        """
        entries = self.parse()
        _, invalid, report = self.validate_entries(entries)
        if invalid or not report['count_matches_header']:
            first = report['issues'][0]
            where = f"line {first['line']}" if first['line'] is not None else "header"
            raise FileFormatError(f"{self.points_path} ({where}): {'; '.join(first['issues'])}")

        try:
            precision = PrecisionConfig(self.header['d'], self.header['Q'])
        except Exception as e:
            raise FileFormatError(f"{self.points_path}: unusable header: {str(e)}")

        d = self.header['d']
        points = np.array([e['coords'] for e in entries], dtype=np.int64).reshape(-1, d)
        logger.info(f"Loaded {len(points)} points (d={d}, Q={precision.Q}) from {self.points_path}")
        return PointSet(points, precision, self.header['scale'], self.header['offset'])


def write_point_file(path: str, points: np.ndarray, precision: PrecisionConfig,
                     scale: Optional[float] = None, offset: Optional[Tuple[float, ...]] = None) -> None:
    """
    Write a point-set file with exact integer coordinates

    Args:
        path (str): output path
        points (np.ndarray): (n, d) fixed-point coordinates
        precision (PrecisionConfig): dimension and precision exponent
        scale (float, optional): ingestion scale to record in the header
        offset (tuple, optional): ingestion offset to record in the header
    """
    points = np.asarray(points, dtype=np.int64).reshape(-1, precision.d)
    header = [str(precision.d), str(len(points)), str(precision.Q)]
    if scale is not None:
        header.append(repr(float(scale)))
        header.extend(repr(float(t)) for t in offset)

    try:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(" ".join(header) + "\n")
            for row in points.tolist():
                f.write(" ".join(str(int(c)) for c in row) + "\n")
    except OSError as e:
        logger.error(f"Error writing point file {path}: {str(e)}")
        raise
    logger.debug(f"Wrote {len(points)} points to {path}")


def read_point_file(points_path: str) -> PointSet:
    """
    Convenience function to load a point-set file

    Args:
        points_path (str): Path to point file

    Returns:
        PointSet: validated points
    """
    parser = PointFileParser(points_path)
    return parser.load()


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("Usage: python point_file_parser.py <points_file>")
        sys.exit(1)

    points_path = sys.argv[1]

    try:
        parser = PointFileParser(points_path)
        entries = parser.parse()

        print("\n=== Parsing Results ===")
        print(f"Header: {parser.header}")
        print(f"Coordinate lines: {len(entries)}")

        valid, invalid, report = parser.validate_entries(entries)
        print(f"\nValid lines: {report['valid_entries']}")
        print(f"Invalid lines: {report['invalid_entries']}")

        if report['issues']:
            print("\nValidation Issues:")
            for issue in report['issues'][:10]:
                print(f"  - line {issue['line']}: {', '.join(issue['issues'])}")

    except Exception as e:
        print(f"Error: {e}")
        sys.exit(1)

"""
Parser for simplicial complex files

Expected format (plain text): one simplex per line as space-separated
vertex indices. Only maximal simplices need to be listed; the closure is
taken on load. Blank lines and `#` comments are allowed.
"""

import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger

sys.path.insert(0, str(Path(__file__).parent.parent))

from twd.complex import SimplicialComplex
from twd.errors import FileFormatError


class ComplexFileParser:
    """Parser for complex files"""

    def __init__(self, complex_path: str, n_vertices: Optional[int] = None):
        """
        Initialize the parser

        Args:
            complex_path (str): Path to the complex file
            n_vertices (int, optional): number of landmarks; indices must be below it
        """
        self.complex_path = complex_path
        self.n_vertices = n_vertices

        if not os.path.exists(complex_path):
            raise FileNotFoundError(f"Complex file not found: {complex_path}")

    def parse(self) -> List[Dict]:
        """
        Parse the complex file

        Returns:
            List[Dict]: one entry per simplex line
        """
        entries = []

        try:
            with open(self.complex_path, 'r', encoding='utf-8') as f:
                for line_num, raw in enumerate(f, start=1):
                    text = raw.split('#', 1)[0].strip()
                    if not text:
                        continue
                    entries.append(self._parse_row(text, line_num))
        except OSError as e:
            logger.error(f"Error reading complex file: {str(e)}")
            raise

        logger.debug(f"Parsed {len(entries)} simplex lines from {self.complex_path}")
        return entries

    def _parse_row(self, text: str, line_num: int) -> Dict:
        try:
            vertices = tuple(int(t) for t in text.split())
        except ValueError:
            vertices = None
        return {'line': line_num, 'vertices': vertices, 'raw': text}

    def validate_entries(self, entries: List[Dict]) -> tuple:
        """
        Validate parsed entries

        Args:
            entries (List[Dict]): output of parse()

        Returns:
            tuple: (valid_entries, invalid_entries, validation_report)
        """
        valid_entries = []
        invalid_entries = []
        issues = []

        for entry in entries:
            entry_issues = []
            vertices = entry['vertices']
            if vertices is None:
                entry_issues.append(f"Non-integer vertex index: {entry['raw']!r}")
            else:
                if len(set(vertices)) != len(vertices):
                    entry_issues.append("Repeated vertex index")
                if any(v < 0 for v in vertices):
                    entry_issues.append("Negative vertex index")
                if self.n_vertices is not None and any(v >= self.n_vertices for v in vertices):
                    entry_issues.append(f"Vertex index not below {self.n_vertices}")

            if entry_issues:
                invalid_entries.append(entry)
                issues.append({'line': entry['line'], 'issues': entry_issues})
            else:
                valid_entries.append(entry)

        report = {
            'total_entries': len(entries),
            'valid_entries': len(valid_entries),
            'invalid_entries': len(invalid_entries),
            'issues': issues,
        }

        return valid_entries, invalid_entries, report

    def load(self) -> SimplicialComplex:
        """
        Parse, validate and close under faces

        Raises:
            FileFormatError: on any invalid line
        """
        entries = self.parse()
        valid, invalid, report = self.validate_entries(entries)
        if invalid:
            first = report['issues'][0]
            raise FileFormatError(f"{self.complex_path} (line {first['line']}): {'; '.join(first['issues'])}")
        K = SimplicialComplex.from_maximal(e['vertices'] for e in valid)
        logger.info(f"Loaded complex with f-vector {K.f_vector()} from {self.complex_path}")
        return K


def write_complex_file(path: str, K: SimplicialComplex) -> None:
    """Write the maximal simplices of K, one per line, sorted"""
    try:
        with open(path, 'w', encoding='utf-8') as f:
            for s in sorted(K.maximal_simplices()):
                f.write(" ".join(str(v) for v in s) + "\n")
    except OSError as e:
        logger.error(f"Error writing complex file {path}: {str(e)}")
        raise
    logger.debug(f"Wrote {len(K.maximal_simplices())} maximal simplices to {path}")


def read_complex_file(complex_path: str, n_vertices: Optional[int] = None) -> SimplicialComplex:
    """
    Convenience function to load a complex file

    Args:
        complex_path (str): Path to complex file
        n_vertices (int, optional): number of landmarks for index checks

    Returns:
        SimplicialComplex: closure of the listed simplices
    """
    parser = ComplexFileParser(complex_path, n_vertices)
    return parser.load()


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("Usage: python complex_file_parser.py <complex_file>")
        sys.exit(1)

    try:
        K = read_complex_file(sys.argv[1])
        print("\n=== Complex ===")
        print(f"f-vector: {K.f_vector()}")
        print(f"Euler characteristic: {K.euler_characteristic()}")
        print(f"Maximal simplices: {len(K.maximal_simplices())}")
    except Exception as e:
        print(f"Error: {e}")
        sys.exit(1)

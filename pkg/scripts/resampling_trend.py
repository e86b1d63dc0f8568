"""
Growth of the resampling work with the number of landmarks

For each target size, nets are generated at the sampling radius that gives
roughly that many points, the witness perturbation loop is run for several
seeds, and the mean number of resampled points is recorded. The growth
exponent is the least-squares slope of log(mean work) against log(|L|).
"""

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

sys.path.insert(0, str(Path(__file__).parent.parent))

from twd.base_engine import EngineConfig
from twd.geometry import PrecisionConfig, WitnessGrid, generate_net
from twd.lll_engine import run_algorithm1
from twd.params import unit_ball_volume

# fraction of space covered by a saturated random packing, roughly
JAMMING_COVERAGE = {2: 0.547, 3: 0.38}


def lambda_for_size(n: int, mu_bar: float, d: int) -> float:
    """Sampling radius at which maximal dart throwing produces about n points"""
    coverage = JAMMING_COVERAGE.get(d, 0.3)
    spacing = 2 * (coverage / (n * unit_ball_volume(d))) ** (1 / d)
    return min(spacing / mu_bar, 0.25)


def fit_exponent(sizes: Sequence[float], work: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log(work) against log(size), None with fewer than two positive points"""
    pairs = [(s, w) for s, w in zip(sizes, work) if s > 0 and w > 0]
    if len(pairs) < 2:
        return None
    x = np.log([s for s, _ in pairs])
    y = np.log([w for _, w in pairs])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def run_trend(sizes: Sequence[int], seeds: Sequence[int], d: int = 2, mu_bar: float = 0.8,
              rho_factor: float = 0.125, epsilon_factor: float = 1 / 64,
              precision_bits: int = 20, workers: int = 1) -> Dict:
    """
    Mean resampling work per target size

    Args:
        sizes (Sequence[int]): target landmark counts
        seeds (Sequence[int]): seeds per size; each seeds both the net and the run
        d (int): dimension
        mu_bar (float): sparsity ratio of the generated nets
        rho_factor (float): picking radius as a multiple of mu_bar * lambda
        epsilon_factor (float): grid diameter as a multiple of lambda
        precision_bits (int): fixed-point precision exponent
        workers (int): threads for the witness table

    Returns:
        Dict: per-size rows and the fitted exponent
    """
    precision = PrecisionConfig(d, precision_bits)
    rows: List[Dict] = []

    for target in sizes:
        lambda_ = lambda_for_size(target, mu_bar, d)
        W = WitnessGrid.from_epsilon(lambda_ * epsilon_factor, precision)
        counts, resampled, rounds, unterminated = [], [], [], 0
        for seed in seeds:
            L = generate_net(lambda_, mu_bar, seed, precision)
            config = EngineConfig(rho=rho_factor * mu_bar * lambda_, rng_seed=seed,
                                  practical_mode=True, workers=workers)
            _, _, report = run_algorithm1(L, W, config)
            counts.append(L.n)
            resampled.append(report.points_resampled)
            rounds.append(report.rounds)
            unterminated += int(not report.terminated)

        row = {
            'target': int(target),
            'lambda': lambda_,
            'epsilon': W.epsilon,
            'mean_n': float(np.mean(counts)),
            'mean_points_resampled': float(np.mean(resampled)),
            'mean_rounds': float(np.mean(rounds)),
            'unterminated': unterminated,
        }
        logger.info(f"|L|~{row['mean_n']:.0f}: mean resampled {row['mean_points_resampled']:.1f} "
                    f"over {len(seeds)} seeds")
        rows.append(row)

    exponent = fit_exponent([r['mean_n'] for r in rows], [r['mean_points_resampled'] for r in rows])
    if exponent is None:
        logger.warning("Too few sizes with nonzero resampling work to fit an exponent")
    return {'d': d, 'mu_bar': mu_bar, 'rows': rows, 'exponent': exponent}


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Resampling work as a function of |L|")
    parser.add_argument('--sizes', type=int, nargs='+', default=[64, 128, 256, 512])
    parser.add_argument('--seeds', type=int, default=10)
    parser.add_argument('--dimension', type=int, default=2)
    parser.add_argument('--mu-bar', type=float, default=0.8)
    parser.add_argument('--epsilon-factor', type=float, default=1 / 64)
    parser.add_argument('--output', type=str, default=None)
    args = parser.parse_args()

    result = run_trend(args.sizes, range(args.seeds), d=args.dimension, mu_bar=args.mu_bar,
                       epsilon_factor=args.epsilon_factor)
    text = json.dumps(result, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding='utf-8')
    print(text)
    if result['exponent'] is not None and not math.isfinite(result['exponent']):
        sys.exit(1)

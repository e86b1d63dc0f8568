import argparse
import json
import sys
from typing import Dict, Optional

import numpy as np
from loguru import logger

from config import Config, create_dependencies
from logging_config import setup_logging
from scripts.complex_file_parser import read_complex_file, write_complex_file
from scripts.ingest import export_file, ingest_file
from scripts.plot_svg import plot_svg
from scripts.point_file_parser import read_point_file, write_point_file
from twd.base_engine import EngineConfig
from twd.errors import (
    FileFormatError, InfeasibleParametersError, IngestError, InternalError, LiftError, SparsityUndefinedError,
    TWDError, UnknownVertexError, UnsupportedDimensionError,
)
from twd.geometry import (
    LandmarkSet, TorusPoint, WitnessGrid, estimate_net_params, generate_net, sample_in_ball,
)
from twd.lll_engine import run_algorithm1
from twd.oracle import oracle_delaunay, quality_report, verify_conversions, verify_inheritance
from twd.params import analysis_constants
from twd.rdc import run_algorithm2
from twd.witness import WitnessComplex

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NOT_TERMINATED = 3
EXIT_IO = 4


def emit_report(report: Dict, path: Optional[str]) -> None:
    """Write a JSON report to `path`, or to stdout when no path is given"""
    text = json.dumps(report, indent=2)
    if path is None:
        print(text)
        return
    try:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text + "\n")
    except OSError as e:
        logger.error(f"Error writing report {path}: {str(e)}")
        raise
    logger.info(f"Report written to {path}")


def load_landmarks(path: str, W_epsilon: float, lambda_: Optional[float] = None,
                   mu_bar: Optional[float] = None) -> tuple:
    """
    Landmark set from a point file

    Net parameters not given on the command line are estimated on the witness
    grid of diameter W_epsilon.

    Returns:
        tuple: (LandmarkSet, WitnessGrid, PointSet)
    """
    point_set = read_point_file(path)
    precision = point_set.precision
    precision.check_resolution(W_epsilon)
    W = WitnessGrid.from_epsilon(W_epsilon, precision)
    if lambda_ is None or mu_bar is None:
        provisional = LandmarkSet(point_set.points, 0.25, 1.0, precision)
        estimate = estimate_net_params(provisional, W)
        if estimate.flags:
            raise InfeasibleParametersError(f"{path} is not a usable net: {', '.join(estimate.flags)}")
        lambda_ = estimate.lambda_hat if lambda_ is None else lambda_
        mu_bar = min(estimate.min_distance / lambda_, 2.0) if mu_bar is None else mu_bar
        logger.info(f"Estimated net parameters: lambda={lambda_:.6g}, mu_bar={mu_bar:.6g}")
    return LandmarkSet(point_set.points, lambda_, mu_bar, precision), W, point_set


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_net(args, config: Config) -> int:
    deps = create_dependencies(config)
    L = generate_net(args.lambda_, args.mu_bar, config.seed, deps['precision'],
                     max_rejections=args.max_rejections)
    write_point_file(args.output, L.anchors, L.precision)
    emit_report({'n': L.n, 'd': L.d, 'Q': L.precision.Q, 'lambda': L.lambda_, 'mu_bar': L.mu_bar,
                 'seed': config.seed}, args.report)
    logger.success(f"Wrote net of {L.n} points to {args.output}")
    return EXIT_OK


def cmd_gen_grid(args, config: Config) -> int:
    deps = create_dependencies(config)
    precision = deps['precision']
    m = 1 << args.k
    axes = np.meshgrid(*([np.arange(m, dtype=np.int64)] * precision.d), indexing='ij')
    lattice = np.stack([a.ravel() for a in axes], axis=-1) * (precision.scale // m)
    if args.jitter > 0:
        rng = deps['rng']
        lattice = np.array([sample_in_ball(TorusPoint.from_array(row), args.jitter, rng, precision).as_array()
                            for row in lattice], dtype=np.int64)
    write_point_file(args.output, lattice, precision)
    emit_report({'n': int(len(lattice)), 'd': precision.d, 'Q': precision.Q, 'k': args.k,
                 'jitter': args.jitter, 'seed': config.seed}, args.report)
    logger.success(f"Wrote {len(lattice)} lattice points to {args.output}")
    return EXIT_OK


def cmd_witness(args, config: Config) -> int:
    L, W, _ = load_landmarks(args.landmarks, args.epsilon, args.lambda_, args.mu_bar)
    state = WitnessComplex(L, W, workers=config.threads)
    K = state.build()
    write_complex_file(args.output, K)
    bad = [p for p in K.vertices if not K.has_good_link(p, L.d)]
    emit_report({
        'n': L.n,
        'epsilon': W.epsilon,
        'grid_level': W.level,
        'f_vector': K.f_vector(),
        'euler_characteristic': K.euler_characteristic(),
        'bad_link_vertices': bad,
        'tie_groups': [list(g) for g in state.tie_groups()],
    }, args.report)
    logger.success(f"Witness complex with f-vector {K.f_vector()} written to {args.output}")
    return EXIT_OK


def _engine_config(args, config: Config) -> EngineConfig:
    return EngineConfig(
        rho=args.rho,
        max_rounds=args.max_rounds,
        rng_seed=config.seed,
        delta=getattr(args, 'delta', None),
        theta_0=getattr(args, 'theta0', None),
        practical_mode=args.practical,
        workers=config.threads,
    )


def _finish_run(args, L_out: LandmarkSet, K, report: Dict, terminated: bool) -> int:
    write_point_file(args.output_points, L_out.current, L_out.precision)
    write_complex_file(args.output_complex, K)
    emit_report(report, args.report)
    if not terminated:
        logger.error("No termination within the round cap; partial state written")
        return EXIT_NOT_TERMINATED
    logger.success(f"Delaunay complex with f-vector {K.f_vector()} written to {args.output_complex}")
    return EXIT_OK


def cmd_algo1(args, config: Config) -> int:
    L, W, _ = load_landmarks(args.landmarks, args.epsilon, args.lambda_, args.mu_bar)
    L_out, K, report = run_algorithm1(L, W, _engine_config(args, config))
    return _finish_run(args, L_out, K, report.to_json_dict(), report.terminated)


def cmd_algo2(args, config: Config) -> int:
    L, W, _ = load_landmarks(args.landmarks, args.epsilon, args.lambda_, args.mu_bar)
    L_out, K, delta_star, report = run_algorithm2(L, W, _engine_config(args, config))
    payload = report.to_json_dict()
    payload['delta_star'] = delta_star
    return _finish_run(args, L_out, K, payload, report.terminated)


def cmd_verify(args, config: Config) -> int:
    epsilon = args.epsilon if args.epsilon is not None else 1 / 256
    L, _, _ = load_landmarks(args.points, epsilon, args.lambda_, args.mu_bar)
    K = read_complex_file(args.complex, L.n)

    oracle = oracle_delaunay(L, args.method)
    verifiers = {}
    verifiers.update(verify_inheritance(L, K))
    verifiers.update(verify_conversions(L, K))
    bad = [p for p in K.vertices if not K.has_good_link(p, L.d)]
    result = {
        'quality': quality_report(L, K).to_json_dict(),
        'oracle': {
            'equals_delaunay': K == oracle.complex,
            'subset_of_delaunay': K.issubset(oracle.complex),
            'generic': oracle.generic,
            'cospherical_groups': [list(g) for g in oracle.cospherical_groups],
        },
        'topology': {
            'euler_characteristic': K.euler_characteristic(),
            'bad_link_vertices': bad,
            'pseudomanifold': K.is_pseudomanifold(L.d),
        },
        'verifiers': {name: r.to_json_dict() for name, r in verifiers.items()},
    }
    emit_report(result, args.report)
    failed = [name for name, r in verifiers.items() if not r.passed]
    if failed:
        logger.warning(f"Verifiers with violations: {', '.join(failed)}")
    logger.success(f"Verified {len(K.simplices_of_dim(L.d))} top simplices "
                   f"(oracle equality: {result['oracle']['equals_delaunay']})")
    return EXIT_OK


def cmd_params(args, config: Config) -> int:
    constants = analysis_constants(args.lambda_, args.mu_bar, args.rho, args.epsilon, config.dimension,
                                   delta=args.delta, theta0=args.theta0)
    emit_report(constants.to_json_dict(), args.report)
    logger.success("Parameter report done")
    return EXIT_OK


def cmd_ingest(args, config: Config) -> int:
    summary = ingest_file(args.input, args.output, args.margin, config.precision_bits)
    emit_report(summary, args.report)
    logger.success(f"Ingested {summary['n']} points into {args.output}")
    return EXIT_OK


def cmd_export(args, config: Config) -> int:
    summary = export_file(args.points, args.output)
    emit_report(summary, args.report)
    logger.success(f"Exported {summary['n']} points to {args.output}")
    return EXIT_OK


def cmd_plot(args, config: Config) -> int:
    count = plot_svg(args.points, args.complex, args.output)
    logger.success(f"Wrote {count} line elements to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help="Seed of the single random stream")
    common.add_argument('--log-level', type=str, default=None, help="Log level (default INFO)")
    common.add_argument('--precision-bits', type=int, default=None, help="Fixed-point precision exponent Q")
    common.add_argument('--threads', type=int, default=None, help="Worker cap (overrides TWD_THREADS)")
    common.add_argument('--report', type=str, default=None, help="JSON report path (default stdout)")

    net_flags = argparse.ArgumentParser(add_help=False)
    net_flags.add_argument('--lambda', dest='lambda_', type=float, default=None,
                           help="Sampling radius (estimated when omitted)")
    net_flags.add_argument('--mu-bar', type=float, default=None, help="Sparsity ratio (estimated when omitted)")

    run_flags = argparse.ArgumentParser(add_help=False)
    run_flags.add_argument('--landmarks', type=str, required=True)
    run_flags.add_argument('--epsilon', type=float, required=True, help="Witness grid diameter")
    run_flags.add_argument('--rho', type=float, required=True, help="Picking-ball radius")
    run_flags.add_argument('--max-rounds', type=int, default=None, help="Round cap (default 50|L|)")
    run_flags.add_argument('--practical', action='store_true', help="Run even if the analysis is not satisfied")
    run_flags.add_argument('--output-points', type=str, required=True)
    run_flags.add_argument('--output-complex', type=str, required=True)

    parser = argparse.ArgumentParser(
        prog='twd', description="Delaunay triangulations on the flat torus",
        epilog="exit codes: 0 success, 2 infeasible parameters or invalid flags, "
               "3 non-termination, 4 I/O or format error",
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-net', parents=[common], help="Generate a (lambda, mu_bar)-net")
    p.add_argument('--lambda', dest='lambda_', type=float, required=True)
    p.add_argument('--mu-bar', type=float, required=True)
    p.add_argument('--dimension', type=int, default=None)
    p.add_argument('--max-rejections', type=int, default=2000)
    p.add_argument('--output', type=str, required=True)
    p.set_defaults(handler=cmd_gen_net)

    p = sub.add_parser('gen-grid', parents=[common], help="Generate a 2^k-per-axis lattice, optionally jittered")
    p.add_argument('--k', type=int, required=True)
    p.add_argument('--dimension', type=int, default=None)
    p.add_argument('--jitter', type=float, default=0.0, help="Jitter radius, torus units")
    p.add_argument('--output', type=str, required=True)
    p.set_defaults(handler=cmd_gen_grid)

    p = sub.add_parser('witness', parents=[common, net_flags], help="Build Wit(L, W)")
    p.add_argument('--landmarks', type=str, required=True)
    p.add_argument('--epsilon', type=float, required=True)
    p.add_argument('--output', type=str, required=True)
    p.set_defaults(handler=cmd_witness)

    p = sub.add_parser('algo1', parents=[common, net_flags, run_flags], help="Witness-complex perturbation")
    p.set_defaults(handler=cmd_algo1)

    p = sub.add_parser('algo2', parents=[common, net_flags, run_flags], help="Relaxed-Delaunay perturbation")
    p.add_argument('--delta', type=float, default=None)
    p.add_argument('--theta0', type=float, default=None)
    p.set_defaults(handler=cmd_algo2)

    p = sub.add_parser('verify', parents=[common, net_flags], help="Oracle comparison and quality report")
    p.add_argument('--points', type=str, required=True)
    p.add_argument('--complex', type=str, required=True)
    p.add_argument('--epsilon', type=float, default=None, help="Grid used to estimate net parameters")
    p.add_argument('--method', choices=['qhull', 'exhaustive'], default='qhull')
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser('params', parents=[common], help="Derived constants and feasibility")
    p.add_argument('--lambda', dest='lambda_', type=float, required=True)
    p.add_argument('--mu-bar', type=float, required=True)
    p.add_argument('--rho', type=float, required=True)
    p.add_argument('--epsilon', type=float, required=True)
    p.add_argument('--dimension', type=int, default=None)
    p.add_argument('--delta', type=float, default=None)
    p.add_argument('--theta0', type=float, default=None)
    p.set_defaults(handler=cmd_params)

    p = sub.add_parser('ingest', parents=[common], help="Scale R^d points onto the torus")
    p.add_argument('--input', type=str, required=True)
    p.add_argument('--output', type=str, required=True)
    p.add_argument('--margin', type=float, default=0.0)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser('export', parents=[common], help="Map ingested points back to R^d")
    p.add_argument('--points', type=str, required=True)
    p.add_argument('--output', type=str, required=True)
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser('plot', parents=[common], help="SVG of a 2-D complex")
    p.add_argument('--points', type=str, required=True)
    p.add_argument('--complex', type=str, required=True)
    p.add_argument('--output', type=str, required=True)
    p.set_defaults(handler=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    config = Config.from_args(args)
    setup_logging(config.log_level)
    logger.debug(f"Running {args.command} with seed={config.seed}, Q={config.precision_bits}, "
                 f"threads={config.threads}")

    try:
        return args.handler(args, config)
    except (InfeasibleParametersError, LiftError) as e:
        logger.error(f"Infeasible parameters: {str(e)}")
        return EXIT_INFEASIBLE
    except InternalError as e:
        logger.error(f"Sampling did not terminate: {str(e)}")
        return EXIT_NOT_TERMINATED
    except (FileFormatError, IngestError, UnsupportedDimensionError, SparsityUndefinedError,
            UnknownVertexError, OSError) as e:
        logger.error(f"Input/output error: {str(e)}")
        return EXIT_IO
    except TWDError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

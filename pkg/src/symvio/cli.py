"""Command-line pipeline: simulate, run, evaluate, oracle."""

from __future__ import annotations

import argparse
import logging
import sys

from .dynamics import GRAVITY

_thread_limiter = None


def _pin_blas_threads() -> None:
    """Single-thread the BLAS pools.

    The filter works on small matrices (a few hundred square at most), where
    multithreaded BLAS only adds synchronisation latency.
    """
    global _thread_limiter
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    _thread_limiter = threadpool_limits(limits=1)


def _cmd_run(args) -> int:
    from .pipeline import RunConfig, run_filter

    cfg = RunConfig(
        imu_path=args.imu,
        features_path=args.features,
        out_dir=args.out,
        extrinsics_path=args.extrinsics,
        gains_path=args.gains,
        gravity=args.gravity,
        max_landmarks=args.max_landmarks,
        reg_threshold=args.reg_threshold,
    )
    result = run_filter(cfg)
    print(f"trajectory: {result.trajectory_path}")
    print(f"diagnostics: {result.diagnostics_path}")
    print(f"processed {result.n_imu} IMU samples, {result.n_frames} frames, "
          f"{result.final_state.n_landmarks} landmarks tracked at exit")
    return 0


def _cmd_simulate(args) -> int:
    from .io import read_scenario_file, write_truth_files
    from .simulate import ScenarioConfig, generate_scenario

    cfg = read_scenario_file(args.scenario) if args.scenario else ScenarioConfig()
    truth, imu_stream, batches = generate_scenario(cfg)
    paths = write_truth_files(args.out, truth, imu_stream, batches)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_evaluate(args) -> int:
    from .pipeline import evaluate, format_report

    report = evaluate(args.estimate, args.truth, args.report)
    sys.stdout.write(format_report(report))
    if args.report:
        print(f"report written to {args.report}")
    return 0


def _cmd_oracle(args) -> int:
    from .oracle import run_all

    results = run_all(seed=args.seed, fast=args.fast)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symvio",
        description="Symmetry-based visual-inertial odometry pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="enable info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the filter over IMU and feature CSVs")
    p_run.add_argument("--imu", required=True, help="IMU CSV (t,wx,wy,wz,ax,ay,az)")
    p_run.add_argument("--features", required=True,
                       help="feature CSV (t,id,bx,by,bz), unit bearings")
    p_run.add_argument("--extrinsics", default=None,
                       help="camera extrinsics key-value file (default: identity)")
    p_run.add_argument("--gains", default=None,
                       help="gain key-value file (default: built-in gains)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--gravity", type=float, default=GRAVITY)
    p_run.add_argument("--max-landmarks", type=int, default=50)
    p_run.add_argument("--reg-threshold", type=int, default=40)
    p_run.set_defaults(func=_cmd_run)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--scenario", default=None,
                       help="scenario key-value file (default: built-in circle)")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_eval = sub.add_parser("evaluate", help="gauge-aligned RMSE of an estimate")
    p_eval.add_argument("--estimate", required=True, help="estimated trajectory CSV")
    p_eval.add_argument("--truth", required=True, help="ground-truth CSV")
    p_eval.add_argument("--report", default=None,
                        help="directory for report, error CSV and figures")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_orc = sub.add_parser("oracle", help="run the finite-difference checks")
    p_orc.add_argument("--seed", type=int, default=0)
    p_orc.add_argument("--fast", action="store_true",
                       help="reduced sample counts for a quick smoke run")
    p_orc.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    _pin_blas_threads()
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

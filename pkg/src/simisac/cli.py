"""Command-line interface for seeded, reproducible experiments.

Exit codes: 0 on success, 2 on validation failure, 3 when ``grad-check``
exceeds its tolerance.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import sample_channels
from .experiments import (
    dump_matrix_csv,
    grad_check,
    load_state,
    prepare,
    realization_streams,
    run_beampattern,
    run_single,
    run_sweep,
    save_state,
    write_trace_csv,
    SweepSpec,
)
from .scenario import ScenarioConfig, ScenarioError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TOLERANCE = 3


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def _add_common(parser: argparse.ArgumentParser, out_dir: bool = True) -> None:
    parser.add_argument("--config", type=Path, default=None, help="scenario config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    if out_dir:
        parser.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    trace = run_single(cfg, cfg.rng_seed, comm_only=args.comm_only)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / "trace.csv", trace, cfg, cfg.rng_seed)
    save_state(out / "state.json", trace)
    rep = trace.final_report
    print(
        f"converged={trace.converged} iters={trace.n_iters} "
        f"F={rep.value:.6f} R={rep.sum_rate:.6f} "
        f"target_gain={rep.target_gain:.6e} psi={rep.psi:.6e}"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    variable = {"layers": "num_layers", "gamma": "gamma_dbi"}[args.variable]
    values = [v for v in args.values.split(",") if v]
    spec = SweepSpec(
        variable=variable,
        values=tuple(float(v) for v in values),
        n_realizations=args.n_ch,
        config=cfg,
        base_seed=cfg.rng_seed,
    )
    points = run_sweep(spec, out_dir=args.out_dir)
    for pt in points:
        print(
            f"{variable}={pt.value:g} mean_se={pt.mean_se:.4f} std_se={pt.std_se:.4f} "
            f"mean_gain_dbi={pt.mean_gain_dbi:.3f} satisfied={pt.satisfaction_rate:.2f}"
        )
    return EXIT_OK


def _cmd_beampattern(args) -> int:
    cfg = _load_config(args)
    state, _, alpha = load_state(args.state)
    if state.num_layers != cfg.num_layers or state.num_atoms != cfg.num_atoms:
        raise ScenarioError(
            f"state file has {state.num_layers}x{state.num_atoms} phases but the "
            f"config declares {cfg.num_layers}x{cfg.num_atoms}"
        )
    if state.num_users != cfg.num_users:
        raise ScenarioError(
            f"state file has {state.num_users} powers but the config declares "
            f"{cfg.num_users} users"
        )
    run_beampattern(cfg, state, args.out_dir, label="isac")
    if args.comm_only:
        baseline = run_single(cfg, cfg.rng_seed, comm_only=True)
        save_state(Path(args.out_dir) / "state_comm.json", baseline)
        run_beampattern(
            cfg.replace(beta=0.0),
            baseline.final_state,
            args.out_dir,
            label="comm",
            seed=cfg.rng_seed,
        )
    print(f"beampattern written to {args.out_dir}")
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    err = grad_check(
        m_atoms=args.m,
        q_layers=args.q,
        k_users=args.k,
        trials=args.trials,
        seed=args.seed if args.seed is not None else 0,
    )
    print(f"max relative gradient error: {err:.3e} (tolerance {args.tol:.1e})")
    return EXIT_OK if err <= args.tol else EXIT_TOLERANCE


def _cmd_dump_propagation(args) -> int:
    cfg = _load_config(args)
    prep = prepare(cfg)
    out = Path(args.out_dir)
    dump_matrix_csv(out / "w_in.csv", prep.propagation.w_in, cfg, "geometry")
    for i, w in enumerate(prep.propagation.w_inter):
        dump_matrix_csv(out / f"w_layer{i + 2}.csv", w, cfg, "geometry")
    print(f"propagation matrices written to {out}")
    return EXIT_OK


def _cmd_dump_channel(args) -> int:
    cfg = _load_config(args)
    prep = prepare(cfg)
    channel_rng, _ = realization_streams(cfg.rng_seed, 0)
    chan = sample_channels(cfg, prep.r_q_sqrt, channel_rng, r_q=prep.r_q)
    out = Path(args.out_dir)
    dump_matrix_csv(out / "channel.csv", chan.h_rows, cfg, cfg.rng_seed)
    print(f"channel matrix written to {out / 'channel.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simisac",
        description="Stacked-metasurface wave-domain precoding experiments",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one optimization run; trace CSV + state JSON")
    _add_common(p_run)
    p_run.add_argument("--comm-only", action="store_true", help="disable the sensing penalty")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="mean SE across layer counts or gain thresholds")
    _add_common(p_sweep)
    p_sweep.add_argument("--variable", choices=("layers", "gamma"), required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated sweep values")
    p_sweep.add_argument("--n-ch", type=int, default=20, help="channel realizations per value")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_beam = sub.add_parser("beampattern", help="gain grid and profile cuts for a saved state")
    _add_common(p_beam)
    p_beam.add_argument("--state", type=Path, required=True, help="final-state JSON from 'run'")
    p_beam.add_argument(
        "--comm-only",
        action="store_true",
        help="also emit a penalty-free baseline optimized with the same seed",
    )
    p_beam.set_defaults(func=_cmd_beampattern)

    p_grad = sub.add_parser("grad-check", help="analytic vs finite-difference gradients")
    p_grad.add_argument("--m", type=int, default=16, help="atoms per layer (perfect square)")
    p_grad.add_argument("--q", type=int, default=3, help="number of layers")
    p_grad.add_argument("--k", type=int, default=2, help="number of users")
    p_grad.add_argument("--trials", type=int, default=10)
    p_grad.add_argument("--seed", type=int, default=None)
    p_grad.add_argument("--tol", type=float, default=1e-5)
    p_grad.set_defaults(func=_cmd_grad_check)

    p_dump_w = sub.add_parser("dump-propagation", help="write transmission matrices as CSV")
    _add_common(p_dump_w)
    p_dump_w.set_defaults(func=_cmd_dump_propagation)

    p_dump_h = sub.add_parser("dump-channel", help="write a seeded channel draw as CSV")
    _add_common(p_dump_h)
    p_dump_h.set_defaults(func=_cmd_dump_channel)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

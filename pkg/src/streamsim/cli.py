"""Command-line front end: ``streamsim <subcommand> [options]``.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime or
size-cap errors. Results go to ``--out`` (or stdout); diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .capacity import ConvergenceError, MultichainError, SolverError, StateSpaceTooLarge
from .experiments import (ExperimentConfig, capacity_report, compare_delay_bounds, general_from_kv,
                          homogeneous_from_kv, read_kv, report_json, sweep_region, workers_from_env)
from .model import ConfigError
from .scheduling import PolicyKind
from .simulator import per_second_csv, run
from .traffic import TraceFormatError, load_schedule, parse_trace, _lines

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _fraction(s: str) -> Fraction:
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None


def _policies(s: str) -> list[PolicyKind]:
    return [PolicyKind.parse(p) for p in s.split(",") if p.strip()]


def _load_experiment(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "horizon_slots", None) is not None:
        if args.horizon_slots < 1:
            raise ConfigError("--horizon-slots must be >= 1")
        cfg.horizon = args.horizon_slots
    if getattr(args, "grid_step", None) is not None:
        step = args.grid_step
        if not 0 < step <= 1 or (1 / step).denominator != 1:
            raise ConfigError("--grid-step must lie in (0, 1] and divide 1")
        cfg.grid_step = step
    if getattr(args, "replicas", None) is not None:
        if args.replicas < 1:
            raise ConfigError("--replicas must be >= 1")
        cfg.replicas = args.replicas
    if getattr(args, "policy", None):
        cfg.policies = _policies(args.policy)
    if getattr(args, "m_frame", None) is not None:
        if args.m_frame < 1:
            raise ConfigError("--m-frame must be >= 1")
        cfg.m_frames = [args.m_frame]
    if getattr(args, "x", None) is not None:
        cfg.x = args.x
    if getattr(args, "y", None) is not None:
        cfg.y = args.y
    cfg._schedules = None
    return cfg


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> None:
    cfg = _load_experiment(args)
    sim = cfg.sim_config(cfg.policies[0], cfg.x, cfg.y)
    metrics = run(sim)
    payload = metrics.to_dict()
    payload["requirement_fractions"] = {"X": float(cfg.x), "Y": float(cfg.y)}
    payload["required_throughput"] = [float(c.required_throughput) for c in sim.clients]
    payload["m_frame"] = sim.policy.m_frame
    payload["seed"] = cfg.seed
    _emit(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out)


def cmd_sweep(args) -> None:
    cfg = _load_experiment(args)
    workers = workers_from_env()
    chunks = []
    for k, policy in enumerate(cfg.policies):
        if args.delay_bounds:
            taus = [int(v) for v in args.delay_bounds.split(",")]
            regions, report = compare_delay_bounds(cfg, taus, policy, workers=workers)
            for line in report:
                print(json.dumps({"policy": policy.value, **line}, sort_keys=True), file=sys.stderr)
        else:
            regions = [sweep_region(cfg, policy, workers=workers)]
        for r in regions:
            bad = r.staircase_violations()
            if bad:
                print(f"{policy.value}: {len(bad)} staircase violation(s) (Monte Carlo noise), first at "
                      f"X={float(bad[0][0]):g}, Y={float(bad[0][1]):g}", file=sys.stderr)
            chunks.append(r.to_csv(header=not chunks))
    _emit("".join(chunks), args.out)


def cmd_capacity_homogeneous(args) -> None:
    kv = read_kv(args.config) if args.config else {}
    for key in ("n", "t", "k", "p"):
        v = getattr(args, key)
        if v is not None:
            kv[key] = str(v)
    spec = homogeneous_from_kv(kv)
    _emit(report_json(capacity_report(spec)), args.out)


def cmd_capacity_lp(args) -> None:
    if not args.config:
        raise ConfigError("--config is required")
    kv = read_kv(args.config)
    if args.state_cap is not None:
        kv["state_cap"] = str(args.state_cap)
    _emit(report_json(capacity_report(general_from_kv(kv))), args.out)


def cmd_trace_stats(args) -> None:
    if args.trace:
        path, mtu, sw, cfg = Path(args.trace), 1500, None, None
    else:
        cfg = _load_experiment(args)
        path, mtu, sw = Path(cfg.trace), cfg.mtu, cfg.slot_width
    if not path.is_file():
        raise ConfigError(f"trace file not found: {path}")
    kwargs = {"mtu": mtu} if sw is None else {"mtu": mtu, "slot_width": sw}
    sched = load_schedule(path, **kwargs)
    stats = {"trace": path.name, "period_slots": sched.period, "packets_per_period": int(sched.counts.sum()),
             "mean_packets_per_slot": float(sched.counts.sum()) / sched.period,
             "max_packets_per_slot": sched.bound,
             "busy_slot_fraction": float((sched.counts > 0).mean())}
    head = _lines(path)[0].replace(" ", "").lower()
    if head.startswith("fps="):
        tr = parse_trace(path)
        sizes = np.asarray(tr.frame_sizes)
        stats.update({"fps": float(tr.fps), "frames": len(sizes), "total_bytes": int(sizes.sum()),
                      "mean_frame_bytes": float(sizes.mean()), "max_frame_bytes": int(sizes.max())})
    if cfg is not None:
        stats["horizon_slots"] = cfg.horizon
        stats["client_rates"] = [float(r) for r in cfg.rates()]
        stats["default_m_frame"] = cfg.default_m_frame
    _emit(json.dumps(stats, sort_keys=True, indent=2) + "\n", args.out)


def cmd_per_second(args) -> None:
    cfg = _load_experiment(args)
    sim = cfg.sim_config(cfg.policies[0], cfg.x, cfg.y)
    metrics = run(sim)
    client = args.client
    if client is None:
        client = int(np.argmax(metrics.generated)) + 1
    if not 1 <= client <= cfg.n_clients:
        raise ConfigError(f"--client must lie in 1..{cfg.n_clients}")
    _emit(per_second_csv(metrics, client), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, sim=True):
        p.add_argument("--config", help="experiment config file (key = value lines)")
        p.add_argument("--out", help="output file (default: stdout)")
        if sim:
            p.add_argument("--policy", help="policy name, or a comma list for sweep")
            p.add_argument("--m-frame", type=int, help="debt frame length M in slots")
            p.add_argument("--seed", type=int)
            p.add_argument("--horizon-slots", type=int)
            p.add_argument("--x", type=_fraction, help="requirement fraction for group A")
            p.add_argument("--y", type=_fraction, help="requirement fraction for group B")

    p = sub.add_parser("simulate", help="one run, metrics as JSON")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="(X, Y) achievement region as CSV")
    common(p)
    p.add_argument("--grid-step", type=_fraction)
    p.add_argument("--replicas", type=int)
    p.add_argument("--delay-bounds", help="comma list of common delay bounds to compare")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("capacity-homogeneous", help="EDF idle slots and q_max as JSON")
    common(p, sim=False)
    for key, conv in (("n", int), ("t", int), ("k", int), ("p", _fraction)):
        p.add_argument(f"--{key}", type=conv)
    p.set_defaults(func=cmd_capacity_homogeneous)

    p = sub.add_parser("capacity-lp", help="occupation-measure LP verdict as JSON")
    common(p, sim=False)
    p.add_argument("--state-cap", type=int)
    p.set_defaults(func=cmd_capacity_lp)

    p = sub.add_parser("trace-stats", help="trace and arrival statistics as JSON")
    common(p, sim=False)
    p.add_argument("--trace", help="trace file (instead of --config)")
    p.set_defaults(func=cmd_trace_stats)

    p = sub.add_parser("per-second", help="per-second deliveries of one client as CSV")
    common(p)
    p.add_argument("--client", type=int, help="1-based client (default: most packets generated)")
    p.set_defaults(func=cmd_per_second)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, TraceFormatError, FileNotFoundError) as e:
        print(f"streamsim: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StateSpaceTooLarge as e:
        print(f"streamsim: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConvergenceError, MultichainError, SolverError, RuntimeError, ArithmeticError) as e:
        print(f"streamsim: runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

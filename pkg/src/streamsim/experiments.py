"""Experiment configuration, (X, Y) region sweeps and capacity reports."""
from __future__ import annotations

import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .capacity import (HomogeneousSpec, JointTraffic, build_state_space, edf_stationary, homogeneous_qmax,
                       lp_feasible, max_uniform_scale)
from .model import DEFAULT_MTU, DEFAULT_SLOT_WIDTH, ClientConfig, ConfigError, as_fraction
from .scheduling import Policy, PolicyKind
from .simulator import SimConfig, achieved, arrival_matrix, run, shortfalls
from .traffic import MarkovSource, load_schedule, stagger

DEFAULT_GRID_STEP = Fraction(1, 20)


def parse_kv(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower().replace("-", "_")
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def read_kv(path) -> dict[str, str]:
    try:
        return parse_kv(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None


def _num(kv, key, conv, default=None):
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return conv(kv[key])
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad value for {key!r}: {kv[key]!r}") from None


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _spread(spec: str, count: int, conv):
    """``"a-b"`` spreads evenly over ``count`` values; ``"v1,v2,..."`` lists them; ``"v"`` repeats."""
    spec = spec.strip()
    if "," in spec:
        vals = [conv(v) for v in spec.split(",")]
        if len(vals) != count:
            raise ValueError(f"expected {count} values, got {len(vals)}")
        return vals
    if "-" in spec[1:]:
        lo, hi = spec.split("-", 1) if not spec.startswith("-") else (spec, spec)
        lo, hi = Fraction(lo.strip()), Fraction(hi.strip())
        if count == 1:
            return [conv(str(lo))]
        return [conv(str(lo + (hi - lo) * i / (count - 1))) for i in range(count)]
    return [conv(spec)] * count


def _per_client(kv, key, a, b, conv, default):
    """Group keys (``key.a``/``key.b``) spread within a group; a plain ``key`` spreads over
    all clients, dealt alternately to A and B so both groups see the whole range."""
    n = a + b
    if key in kv:
        vals = _spread(kv[key], n, conv)
        k = min(a, b)
        tail = vals[2 * k:]
        out = vals if "," in kv[key] else vals[0:2 * k:2] + (tail if a > b else []) + vals[1:2 * k:2] + (tail if b > a else [])
    elif default is not None:
        out = [conv(default)] * n
    else:
        out = [None] * n
    for g, lo, size in (("a", 0, a), ("b", a, b)):
        if f"{key}.{g}" in kv:
            out[lo:lo + size] = _spread(kv[f"{key}.{g}"], size, conv)
    if any(v is None for v in out):
        raise ValueError(f"{key} is not set for every client")
    return out


def _round_int(s: str) -> int:
    return round(Fraction(s))


@dataclass
class ExperimentConfig:
    trace: Path
    group_a: int
    group_b: int
    delay_bounds: list[int]
    reliabilities: list[Fraction]
    policies: list[PolicyKind] = field(default_factory=lambda: [PolicyKind.EPDF])
    m_frames: list[int] = field(default_factory=lambda: [1])
    grid_step: Fraction = DEFAULT_GRID_STEP
    horizon: int = 133_333
    seed: int = 0
    slot_width: Fraction = DEFAULT_SLOT_WIDTH
    mtu: int = DEFAULT_MTU
    stagger_seconds: Fraction = Fraction("100.11")
    replicas: int = 1
    ewma_alpha: float = 0.01
    ewma_initial: float = 1.0
    use_estimates: bool = True
    workload_from_estimate: bool = False
    random_ties: bool = False
    x: Fraction = Fraction(0)
    y: Fraction = Fraction(0)
    _schedules: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.group_a < 1 or self.group_b < 1:
            raise ConfigError("group sizes must be >= 1")
        if not 0 < self.grid_step <= 1:
            raise ConfigError("grid step must lie in (0, 1]")
        if (1 / self.grid_step).denominator != 1:
            raise ConfigError("grid step must divide 1")
        if self.horizon < 1 or self.replicas < 1:
            raise ConfigError("horizon and replicas must be >= 1")
        if len(self.delay_bounds) != self.n_clients or len(self.reliabilities) != self.n_clients:
            raise ConfigError("one delay bound and one reliability per client are required")
        if not Path(self.trace).is_file():
            raise ConfigError(f"trace file not found: {self.trace}")

    @property
    def n_clients(self) -> int:
        return self.group_a + self.group_b

    @property
    def default_m_frame(self) -> int:
        return self.m_frames[0]

    def schedules(self):
        """Per-client staggered arrival schedules (computed once, cached)."""
        if self._schedules is None:
            base = load_schedule(self.trace, mtu=self.mtu, slot_width=self.slot_width)
            self._schedules = [stagger(base, n, self.stagger_seconds, self.slot_width)
                               for n in range(1, self.n_clients + 1)]
        return self._schedules

    def rates(self) -> list[Fraction]:
        """Per-client arrival rate over the simulated window (packets per slot)."""
        return [Fraction(int(s.arrivals(self.horizon).sum()), self.horizon) for s in self.schedules()]

    def group_of(self, n: int) -> str:
        return "A" if n <= self.group_a else "B"

    def clients(self, x, y) -> list[ClientConfig]:
        x, y = as_fraction(x), as_fraction(y)
        out = []
        for n, (tau, p, r) in enumerate(zip(self.delay_bounds, self.reliabilities, self.rates()), start=1):
            frac = x if self.group_of(n) == "A" else y
            out.append(ClientConfig(n, p, tau, frac * r, r))
        return out

    def sim_config(self, policy: PolicyKind, x, y, seed: int | None = None, m_frame: int | None = None,
                   horizon: int | None = None) -> SimConfig:
        x, y = as_fraction(x), as_fraction(y)
        clients = self.clients(x, y)
        costs = [float(x if self.group_of(c.index) == "A" else y) for c in clients]
        pol = Policy(policy, m_frame or self.default_m_frame,
                     costs if policy is PolicyKind.COST_INDEX else None, self.random_ties)
        return SimConfig(clients, self.schedules(), pol, horizon or self.horizon,
                         self.seed if seed is None else seed, self.slot_width, self.ewma_alpha,
                         self.ewma_initial, self.use_estimates, self.workload_from_estimate)

    def with_delay_bound(self, tau: int) -> "ExperimentConfig":
        return replace(self, delay_bounds=[int(tau)] * self.n_clients)

    @classmethod
    def from_kv(cls, kv: dict[str, str], base_dir: Path | None = None) -> "ExperimentConfig":
        if "trace" not in kv:
            raise ConfigError("missing required key 'trace'")
        trace = Path(kv["trace"])
        if not trace.is_absolute() and base_dir is not None:
            trace = base_dir / trace
        a = _num(kv, "group_a", int)
        b = _num(kv, "group_b", int)
        n = a + b
        if a < 1 or b < 1:
            raise ConfigError("group sizes must be >= 1")
        try:
            taus = _per_client(kv, "delay_bound", a, b, _round_int, None)
            rels = _per_client(kv, "reliability", a, b, Fraction, "1")
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"bad delay_bound/reliability specification: {e}") from None
        for key, value in kv.items():
            if key.startswith("client."):
                parts = key.split(".")
                if len(parts) != 3 or not parts[1].isdigit() or not 1 <= int(parts[1]) <= n:
                    raise ConfigError(f"bad per-client key {key!r}")
                i = int(parts[1]) - 1
                try:
                    if parts[2] == "reliability":
                        rels[i] = Fraction(value)
                    elif parts[2] == "delay_bound":
                        taus[i] = _round_int(value)
                    else:
                        raise ConfigError(f"unknown per-client field {parts[2]!r}")
                except ValueError:
                    raise ConfigError(f"bad value for {key!r}: {value!r}") from None
        policies = [PolicyKind.parse(s) for s in kv.get("policies", kv.get("policy", "EPDF")).split(",")]
        m_frames = _num(kv, "m_frame", lambda s: [int(v) for v in s.split(",")], [0])
        opts = dict(
            grid_step=_num(kv, "grid_step", Fraction, DEFAULT_GRID_STEP),
            horizon=_num(kv, "horizon_slots", int, 133_333),
            seed=_num(kv, "seed", int, 0),
            slot_width=_num(kv, "slot_width", Fraction, DEFAULT_SLOT_WIDTH),
            mtu=_num(kv, "mtu", int, DEFAULT_MTU),
            stagger_seconds=_num(kv, "stagger_seconds", Fraction, Fraction("100.11")),
            replicas=_num(kv, "replicas", int, 1),
            ewma_alpha=_num(kv, "ewma_alpha", float, 0.01),
            ewma_initial=_num(kv, "ewma_initial", float, 1.0),
            use_estimates=_num(kv, "use_estimates", _bool, True),
            workload_from_estimate=_num(kv, "workload_from_estimate", _bool, False),
            random_ties=_num(kv, "random_ties", _bool, False),
            x=_num(kv, "x", Fraction, Fraction(0)),
            y=_num(kv, "y", Fraction, Fraction(0)),
        )
        cfg = cls(trace, a, b, taus, rels, policies, m_frames, **opts)
        if cfg.m_frames == [0]:
            cfg.m_frames = [frame_period_slots(cfg)]
        if any(m < 1 for m in cfg.m_frames):
            raise ConfigError("m_frame values must be >= 1")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_kv(read_kv(path), path.parent)


def frame_period_slots(cfg: ExperimentConfig) -> int:
    """Debt frame default: one video frame period in slots (1 for per-slot traces)."""
    from .traffic import _lines
    head = _lines(Path(cfg.trace))[0].replace(" ", "").lower()
    if head.startswith("fps="):
        return max(1, round(1 / (Fraction(head[4:]) * cfg.slot_width)))
    return 1


def grid_values(step) -> list[Fraction]:
    step = as_fraction(step)
    return [i * step for i in range(int(1 / step) + 1)]


def point_seed(base_seed: int, i: int, j: int, replica: int = 0) -> int:
    """Seed for grid point ``(i, j)``; independent of the policy so policies share randomness."""
    return int(np.random.SeedSequence([base_seed, i, j, replica]).generate_state(1, np.uint32)[0])


@dataclass
class RegionResult:
    policy: str
    xs: list[Fraction]
    ys: list[Fraction]
    achieved: np.ndarray          # [len(xs), len(ys)] bool
    shortfalls: np.ndarray        # [len(xs), len(ys), N]
    delay_bound: int | None = None

    def frontier(self) -> list[tuple[Fraction, Fraction | None]]:
        """Largest achieved ``Y`` for each ``X`` (``None`` if no ``Y`` is achieved)."""
        out = []
        for i, x in enumerate(self.xs):
            hits = np.flatnonzero(self.achieved[i])
            out.append((x, self.ys[hits.max()] if len(hits) else None))
        return out

    def staircase_violations(self) -> list[tuple[Fraction, Fraction]]:
        """Achieved points with a non-achieved point below/left of them (Monte Carlo noise)."""
        bad = []
        A = self.achieved
        for i in range(A.shape[0]):
            for j in range(A.shape[1]):
                if A[i, j] and (not A[:i + 1, :j + 1].all()):
                    bad.append((self.xs[i], self.ys[j]))
        return bad

    def contains(self, other: "RegionResult") -> bool:
        return bool((self.achieved | ~other.achieved).all())

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        n = self.shortfalls.shape[2]
        if header:
            cols = ["policy", "delay_bound", "X", "Y", "achieved"] + [f"shortfall_{k}" for k in range(1, n + 1)]
            buf.write(",".join(cols) + "\n")
        tau = "" if self.delay_bound is None else str(self.delay_bound)
        for i, x in enumerate(self.xs):
            for j, y in enumerate(self.ys):
                vals = ",".join(f"{v:.6g}" for v in self.shortfalls[i, j])
                buf.write(f"{self.policy},{tau},{float(x):g},{float(y):g},{int(self.achieved[i, j])},{vals}\n")
        return buf.getvalue()


_WORKER_CFG: ExperimentConfig | None = None
_WORKER_ARRIVALS: np.ndarray | None = None


def _init_worker(cfg, arrivals):
    global _WORKER_CFG, _WORKER_ARRIVALS
    _WORKER_CFG, _WORKER_ARRIVALS = cfg, arrivals


def _eval_point(args):
    policy, i, j, x, y, m_frame = args
    cfg, arrivals = _WORKER_CFG, _WORKER_ARRIVALS
    total = None
    sim = None
    for rep in range(cfg.replicas):
        sim = cfg.sim_config(policy, x, y, seed=point_seed(cfg.seed, i, j, rep), m_frame=m_frame)
        m = run(sim, arrivals)
        total = np.asarray(m.delivered) if total is None else total + m.delivered
    # replicas pool their deliveries; the 95% rule applies to the pooled throughput
    m.delivered = [int(v) for v in total]
    m.horizon = cfg.horizon * cfg.replicas
    return i, j, achieved(m, sim.clients), shortfalls(m, sim.clients)


def workers_from_env(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("STREAMSIM_WORKERS", default)))
    except ValueError:
        raise ConfigError("STREAMSIM_WORKERS must be an integer") from None


def sweep_region(cfg: ExperimentConfig, policy, m_frame: int | None = None, workers: int | None = None,
                 arrivals: np.ndarray | None = None) -> RegionResult:
    """Simulate every ``(X, Y)`` grid point and apply the 95% rule."""
    policy = PolicyKind.parse(policy) if isinstance(policy, str) else policy
    xs = ys = grid_values(cfg.grid_step)
    if arrivals is None:
        arrivals = arrival_matrix(cfg.sim_config(policy, 0, 0))
    tasks = [(policy, i, j, x, y, m_frame) for i, x in enumerate(xs) for j, y in enumerate(ys)]
    acc = np.zeros((len(xs), len(ys)), dtype=bool)
    short = np.zeros((len(xs), len(ys), cfg.n_clients))
    workers = workers_from_env() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg, arrivals)) as ex:
            results = list(ex.map(_eval_point, tasks, chunksize=8))
    else:
        _init_worker(cfg, arrivals)
        results = [_eval_point(t) for t in tasks]
    for i, j, ok, sf in results:
        acc[i, j] = ok
        short[i, j] = sf
    return RegionResult(policy.value, xs, ys, acc, short)


def compare_delay_bounds(cfg: ExperimentConfig, taus, policy=PolicyKind.EPDF, workers: int | None = None):
    """One region per common delay bound, plus a nesting report between consecutive bounds."""
    regions = []
    for tau in taus:
        r = sweep_region(cfg.with_delay_bound(tau), policy, workers=workers)
        r.delay_bound = int(tau)
        regions.append(r)
    report = []
    order = sorted(range(len(regions)), key=lambda k: regions[k].delay_bound)
    for a, b in zip(order, order[1:]):
        report.append(nesting_report(regions[a], regions[b], cfg.grid_step))
    return regions, report


def nesting_report(smaller: RegionResult, larger: RegionResult, step) -> dict:
    """Compare frontiers column by column; a drop of at most one grid cell counts as noise."""
    step = as_fraction(step)
    worst = Fraction(0)
    for (x, ys), (_, yl) in zip(smaller.frontier(), larger.frontier()):
        s = Fraction(-1) * step if ys is None else ys
        l = Fraction(-1) * step if yl is None else yl
        worst = max(worst, s - l)
    return {"from": smaller.delay_bound, "to": larger.delay_bound,
            "max_frontier_drop": float(worst),
            "nested": bool(larger.contains(smaller)),
            "nested_within_one_cell": bool(worst <= step)}


# -- capacity instances ------------------------------------------------------

def homogeneous_from_kv(kv: dict[str, str]) -> HomogeneousSpec:
    return HomogeneousSpec(_num(kv, "n", int), _num(kv, "t", int), _num(kv, "k", int), _num(kv, "p", Fraction))


@dataclass
class GeneralInstance:
    reliability: list[float]
    delay_bounds: list[int]
    sources: list[MarkovSource]
    required: list[float] | None = None
    direction: list[float] | None = None
    state_cap: int = 100_000


def _matrix(s: str) -> np.ndarray:
    return np.array([[float(Fraction(v)) for v in row.split(",")] for row in s.split(";")])


def general_from_kv(kv: dict[str, str]) -> GeneralInstance:
    n = _num(kv, "clients", int)
    if n < 1:
        raise ConfigError("clients must be >= 1")
    rel, taus, sources, req = [], [], [], []
    for i in range(1, n + 1):
        pre = f"client.{i}."
        rel.append(float(_num(kv, pre + "reliability", Fraction)))
        taus.append(_num(kv, pre + "delay_bound", int))
        try:
            P = _matrix(kv.get(pre + "transition", "1"))
            em = [int(v) for v in kv.get(pre + "emission", "1").split(",")]
            sources.append(MarkovSource(P, em, int(kv.get(pre + "initial", "0"))))
        except ValueError as e:
            raise ConfigError(f"client {i}: bad traffic chain: {e}") from None
        req.append(float(_num(kv, pre + "required", Fraction, Fraction(0))))
    direction = None
    if "direction" in kv:
        try:
            direction = [float(Fraction(v)) for v in kv["direction"].split(",")]
        except ValueError:
            raise ConfigError(f"bad direction {kv['direction']!r}") from None
        if len(direction) != n:
            raise ConfigError("direction needs one entry per client")
    return GeneralInstance(rel, taus, sources, req, direction, _num(kv, "state_cap", int, 100_000))


def capacity_report(instance) -> dict:
    """JSON-ready capacity report for a ``HomogeneousSpec`` or ``GeneralInstance``."""
    if isinstance(instance, HomogeneousSpec):
        st = edf_stationary(instance)
        q = homogeneous_qmax(instance)
        return {
            "kind": "homogeneous",
            "spec": {"N": instance.n_clients, "T": instance.interval, "K": instance.lifetime,
                     "p": str(instance.reliability)},
            "edf_idle_slots_per_interval": st.idle,
            "q_max": q,
            "stationary": [{"zeta": list(z), "probability": float(w)}
                           for z, w in zip(st.states, st.distribution) if w > 0],
        }
    space = build_state_space(instance.reliability, instance.delay_bounds, instance.sources,
                              cap=instance.state_cap)
    rep = {"kind": "general", "clients": len(instance.delay_bounds), "n_states": space.n_states,
           "reliability": instance.reliability, "delay_bounds": instance.delay_bounds}
    if instance.required is not None:
        res = lp_feasible(space, instance.required)
        rep.update({"required": instance.required, "shortfall": res.shortfall, "feasible": res.feasible,
                    "lp_throughput": [float(v) for v in res.throughput]})
        if res.policy is not None:
            rep["policy"] = [
                {"state": {"cells": [list(c) for c in cells], "traffic": int(x)},
                 "actions": [{"action": "idle" if a is None else {"client": a[0], "expires_in_slots": a[1] + 1},
                              "probability": w} for a, w in sorted(dist.items(), key=lambda kv: str(kv[0]))]}
                for (cells, x), dist in sorted(res.policy.matrix().items())]
    if instance.direction is not None:
        lam = max_uniform_scale(space, instance.direction)
        rep.update({"direction": instance.direction, "lambda_star": lam})
    return rep


def report_json(rep: dict) -> str:
    return json.dumps(rep, sort_keys=True, indent=2) + "\n"


__all__ = [
    "ExperimentConfig", "GeneralInstance", "RegionResult", "capacity_report", "compare_delay_bounds",
    "general_from_kv", "grid_values", "homogeneous_from_kv", "nesting_report", "parse_kv", "point_seed",
    "read_kv", "report_json", "sweep_region", "JointTraffic",
]

"""Packet arrival processes: video traces, synthetic per-slot counts, Markov sources."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from numba import njit

from .model import DEFAULT_MTU, DEFAULT_SLOT_WIDTH, as_fraction


class TraceFormatError(ValueError):
    pass


class MissingHeader(TraceFormatError):
    pass


class NegativeSize(TraceFormatError):
    pass


class EmptyTrace(TraceFormatError):
    pass


@dataclass
class FrameTrace:
    fps: Fraction
    frame_sizes: list[int]

    def __post_init__(self):
        self.fps = as_fraction(self.fps)
        if self.fps <= 0:
            raise TraceFormatError(f"fps must be positive, got {self.fps}")
        if any(s < 0 for s in self.frame_sizes):
            raise NegativeSize("frame sizes must be >= 0")

    def frame_slot(self, k: int, slot_width=DEFAULT_SLOT_WIDTH) -> int:
        """Slot during which frame ``k`` (0-based) is generated."""
        return math.floor(Fraction(k) / (self.fps * as_fraction(slot_width)))

    def duration_slots(self, slot_width=DEFAULT_SLOT_WIDTH) -> int:
        return max(1, round(Fraction(len(self.frame_sizes)) / (self.fps * as_fraction(slot_width))))


def _lines(source) -> list[str]:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and len(source) < 4096 and Path(source).is_file()):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        raise TypeError(f"cannot read a trace from {type(source).__name__}")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def _int_lines(lines: list[str], first_lineno: int) -> list[int]:
    out = []
    for i, ln in enumerate(lines, start=first_lineno):
        try:
            v = int(ln)
        except ValueError:
            raise TraceFormatError(f"line {i}: expected an integer, got {ln!r}") from None
        if v < 0:
            raise NegativeSize(f"line {i}: negative value {v}")
        out.append(v)
    if not out:
        raise EmptyTrace("trace has no entries")
    return out


def parse_trace(source) -> FrameTrace:
    """Parse a frame-size trace: ``fps=<decimal>`` header then one byte count per line."""
    lines = _lines(source)
    if not lines:
        raise EmptyTrace("trace is empty")
    head = lines[0].replace(" ", "")
    if not head.lower().startswith("fps="):
        raise MissingHeader(f"first line must be 'fps=<decimal>', got {lines[0]!r}")
    try:
        fps = Fraction(head[4:])
    except ValueError:
        raise TraceFormatError(f"bad fps value {head[4:]!r}") from None
    return FrameTrace(fps, _int_lines(lines[1:], 2))


def parse_pps(source) -> "ArrivalSchedule":
    """Parse the synthetic format: ``pps`` header then packets-per-slot per line."""
    lines = _lines(source)
    if not lines or lines[0].lower() != "pps":
        raise MissingHeader("synthetic trace must start with a 'pps' line")
    return ArrivalSchedule(np.asarray(_int_lines(lines[1:], 2), dtype=np.int64))


def load_schedule(path, mtu: int = DEFAULT_MTU, slot_width=DEFAULT_SLOT_WIDTH) -> "ArrivalSchedule":
    """Read either trace format and return its per-slot arrival schedule."""
    lines = _lines(Path(path))
    if lines and lines[0].lower() == "pps":
        return parse_pps(Path(path))
    trace = parse_trace(Path(path))
    return schedule_from_trace(trace, mtu=mtu, slot_width=slot_width)


def packetize(trace: FrameTrace, mtu: int = DEFAULT_MTU, slot_width=DEFAULT_SLOT_WIDTH):
    """Split large frames and greedily merge small consecutive ones.

    Returns a list of ``(frame_slot, packet_count, packet_sizes)`` groups. A
    merged group carries the slot of its earliest frame, so merging never
    extends any frame's deadline.
    """
    if mtu <= 0:
        raise ValueError("mtu must be positive")
    out = []
    acc, acc_slot = 0, None

    def flush():
        nonlocal acc, acc_slot
        if acc_slot is not None and acc > 0:
            out.append((acc_slot, 1, [acc]))
        acc, acc_slot = 0, None

    for k, size in enumerate(trace.frame_sizes):
        slot = trace.frame_slot(k, slot_width)
        if size >= mtu:
            flush()
            n_full, rest = divmod(size, mtu)
            sizes = [mtu] * n_full + ([rest] if rest else [])
            out.append((slot, len(sizes), sizes))
            continue
        if acc_slot is not None and acc + size >= mtu:
            flush()
        if acc_slot is None:
            acc_slot = slot
        acc += size
    flush()
    return out


@dataclass
class ArrivalSchedule:
    """Cyclic per-slot packet counts for one client.

    ``counts[g]`` packets are generated during slot ``offset + g`` of the
    cycle; the schedule repeats with period ``len(counts)``.
    """

    counts: np.ndarray
    offset: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1 or len(self.counts) == 0:
            raise ValueError("schedule needs a non-empty 1-D count array")
        if (self.counts < 0).any():
            raise ValueError("negative arrival count")
        self.offset %= len(self.counts)

    @property
    def period(self) -> int:
        return len(self.counts)

    @property
    def bound(self) -> int:
        return int(self.counts.max())

    def arrivals(self, horizon: int, rng=None) -> np.ndarray:
        """Counts for generation slots ``0 .. horizon-1``."""
        base = np.roll(self.counts, -self.offset)
        reps = -(-horizon // self.period)
        return np.tile(base, reps)[:horizon]


def schedule_from_trace(trace: FrameTrace, mtu: int = DEFAULT_MTU, slot_width=DEFAULT_SLOT_WIDTH) -> ArrivalSchedule:
    period = trace.duration_slots(slot_width)
    counts = np.zeros(period, dtype=np.int64)
    for slot, n, _ in packetize(trace, mtu, slot_width):
        counts[slot % period] += n
    return ArrivalSchedule(counts)


def stagger_shift(n: int, offset_seconds, slot_width, period: int) -> int:
    return round((n - 1) * as_fraction(offset_seconds) / as_fraction(slot_width)) % period


def stagger(schedule: ArrivalSchedule, n: int, offset_seconds=Fraction("100.11"),
            slot_width=DEFAULT_SLOT_WIDTH) -> ArrivalSchedule:
    """Client ``n`` watches the same stream ``(n-1) * offset_seconds`` ahead."""
    shift = stagger_shift(n, offset_seconds, slot_width, schedule.period)
    return ArrivalSchedule(schedule.counts, (schedule.offset + shift) % schedule.period)


def mean_rate(schedule: ArrivalSchedule) -> Fraction:
    if schedule.period == 0:
        raise ValueError("empty schedule")
    return Fraction(int(schedule.counts.sum()), schedule.period)


@dataclass
class MarkovSource:
    """Finite-state Markov packet source; ``emission[s]`` packets per slot in state ``s``."""

    transition_matrix: np.ndarray
    emission: np.ndarray
    initial_state: int = 0
    bound: int | None = None
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.transition_matrix, dtype=float)
        e = np.asarray(self.emission, dtype=np.int64)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != len(e):
            raise ValueError("transition matrix must be square and match the emission vector")
        if (P < 0).any() or np.abs(P.sum(axis=1) - 1).max() > 1e-12:
            raise ValueError("transition matrix must be row-stochastic")
        if (e < 0).any():
            raise ValueError("negative emission")
        if self.bound is None:
            self.bound = int(e.max())
        if e.max() > self.bound:
            raise ValueError(f"emission exceeds bound {self.bound}")
        if not 0 <= self.initial_state < len(e):
            raise ValueError("initial state out of range")
        if not _irreducible(P):
            raise ValueError("traffic chain must be irreducible")
        self.transition_matrix, self.emission = P, e
        self._cum = np.cumsum(P, axis=1)
        self._cum[:, -1] = 1.0
        self.state = self.initial_state

    @classmethod
    def constant(cls, k: int) -> "MarkovSource":
        return cls(np.ones((1, 1)), np.array([k]))

    @property
    def n_states(self) -> int:
        return len(self.emission)

    def reset(self) -> None:
        self.state = self.initial_state

    def stationary(self) -> np.ndarray:
        n = self.n_states
        A = np.vstack([self.transition_matrix.T - np.eye(n), np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        return pi

    def stationary_mean(self) -> float:
        return float(self.stationary() @ self.emission)

    def path(self, horizon: int, rng) -> np.ndarray:
        """States visited in ``horizon`` successive steps (state after each step)."""
        u = rng.random(horizon)
        return _markov_path(self._cum, int(self.state), u)

    def arrivals(self, horizon: int, rng) -> np.ndarray:
        states = self.path(horizon, rng)
        if horizon:
            self.state = int(states[-1])
        return self.emission[states]


def step_markov(source: MarkovSource, rng) -> int:
    """Advance the source one slot and return the packets generated."""
    row = source._cum[source.state]
    source.state = int(np.searchsorted(row, rng.random(), side="right"))
    source.state = min(source.state, source.n_states - 1)
    return int(source.emission[source.state])


@njit(cache=True)
def _markov_path(cum, state, u):
    n = cum.shape[0]
    out = np.empty(len(u), dtype=np.int64)
    for i in range(len(u)):
        x = u[i]
        s = 0
        while s < n - 1 and cum[state, s] <= x:
            s += 1
        state = s
        out[i] = state
    return out


def _irreducible(P: np.ndarray) -> bool:
    from scipy.sparse.csgraph import connected_components
    n, _ = connected_components(P > 0, directed=True, connection="strong")
    return n == 1


def synthetic_vbr_trace(n_frames: int = 4500, fps=25, gop: int = 12, mean_bytes: float = 8000.0,
                        seed: int = 2024) -> FrameTrace:
    """Lognormal VBR trace with an I/P/B group-of-pictures pattern and scene changes.

    A two-state Markov chain switches between calm and busy scenes that scale
    every frame in the scene; I-frames are ~4x and B-frames ~0.5x a P-frame.
    """
    rng = np.random.default_rng(seed)
    kind_scale = np.empty(gop)
    kind_scale[:] = 0.5
    kind_scale[::3] = 1.0
    kind_scale[0] = 4.0
    scene = np.empty(n_frames)
    busy = False
    for k in range(n_frames):
        if rng.random() < (0.02 if busy else 0.01):
            busy = not busy
        scene[k] = 1.8 if busy else 0.7
    raw = kind_scale[np.arange(n_frames) % gop] * scene * rng.lognormal(0.0, 0.35, n_frames)
    sizes = np.maximum(40, np.round(raw * mean_bytes / raw.mean())).astype(np.int64)
    return FrameTrace(as_fraction(fps), sizes.tolist())


def format_trace(trace: FrameTrace) -> str:
    fps = trace.fps
    head = str(fps.numerator) if fps.denominator == 1 else f"{float(fps):.6f}".rstrip("0")
    return f"fps={head}\n" + "".join(f"{s}\n" for s in trace.frame_sizes)

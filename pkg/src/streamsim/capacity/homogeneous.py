"""Homogeneous case: interval-level EDF chain, idle slots and maximum common throughput.

All ``N`` streams emit one packet at the start of every ``T``-slot interval;
every packet lives ``K`` intervals and every link has reliability ``p``. The
state at an interval start is ``zeta = (zeta(1), ..., zeta(K))``, the number
of packets expiring in ``k`` intervals.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from ..model import ConfigError, as_fraction


class ConvergenceError(RuntimeError):
    pass


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class HomogeneousSpec:
    n_clients: int
    interval: int
    lifetime: int
    reliability: Fraction

    def __post_init__(self):
        object.__setattr__(self, "reliability", as_fraction(self.reliability))
        if min(self.n_clients, self.interval, self.lifetime) < 1:
            raise ConfigError("N, T and K must all be >= 1")
        if not 0 < self.reliability <= 1:
            raise ConfigError("reliability must lie in (0, 1]")

    @property
    def delay_bound(self) -> int:
        return self.interval * self.lifetime


def negbin_idle(m: int, T: int, p):
    """Expected idle slots ``E[(T - Gamma(m; p))^+]`` in a ``T``-slot interval.

    ``Gamma(m; p)`` is the number of slots needed for ``m`` successes. Exact
    when ``p`` is a ``Fraction``.
    """
    if m < 0 or T < 1:
        raise ValueError("need m >= 0 and T >= 1")
    if m == 0:
        return T if isinstance(p, Fraction) else float(T)
    q = 1 - p
    total = Fraction(0) if isinstance(p, Fraction) else 0.0
    for j in range(m, T):
        total += (T - j) * math.comb(j - 1, m - 1) * p ** m * q ** (j - m)
    return total


def zeta_step(zeta: Sequence[int], j: int, n_clients: int) -> tuple[int, ...]:
    """Next interval's state under EDF after ``j`` successful transmissions."""
    K = len(zeta)
    out = []
    served_before = 0
    for k in range(1, K):
        served_before += zeta[k - 1]
        out.append(max(zeta[k] - max(j - served_before, 0), 0))
    out.append(n_clients)
    return tuple(out)


def binomial_pmf(T: int, p) -> list:
    return [math.comb(T, j) * p ** j * (1 - p) ** (T - j) for j in range(T + 1)]


@dataclass
class ZetaChain:
    states: list[tuple[int, ...]]
    matrix: np.ndarray
    initial: tuple[int, ...]


def zeta_chain(spec: HomogeneousSpec) -> ZetaChain:
    """States reachable from the empty system, with the interval transition matrix."""
    N, T, K = spec.n_clients, spec.interval, spec.lifetime
    pmf = [float(x) for x in binomial_pmf(T, spec.reliability)]
    start = (0,) * (K - 1) + (N,)
    index = {start: 0}
    states = [start]
    edges = []
    todo = deque([start])
    while todo:
        z = todo.popleft()
        for j, w in enumerate(pmf):
            if w == 0.0:
                continue
            nz = zeta_step(z, j, N)
            if nz not in index:
                index[nz] = len(states)
                states.append(nz)
                todo.append(nz)
            edges.append((index[z], index[nz], w))
    P = np.zeros((len(states), len(states)))
    for a, b, w in edges:
        P[a, b] += w
    return ZetaChain(states, P, start)


def stationary_distribution(P: np.ndarray, tol: float = 1e-12, direct_limit: int = 2000) -> np.ndarray:
    """Stationary vector of the unique closed class of ``P`` (zero on transient states)."""
    n = P.shape[0]
    n_comp, labels = connected_components(P > 0, directed=True, connection="strong")
    closed = [c for c in range(n_comp)
              if not (P[np.ix_(labels == c, labels != c)] > 0).any()]
    if len(closed) != 1:
        raise ConvergenceError(f"chain has {len(closed)} closed classes; stationary law is not unique")
    members = np.flatnonzero(labels == closed[0])
    Q = P[np.ix_(members, members)]
    m = len(members)
    if m <= direct_limit:
        A = Q.T - np.eye(m)
        A[-1, :] = 1.0
        b = np.zeros(m)
        b[-1] = 1.0
        sub = np.linalg.solve(A, b)
    else:
        lazy = 0.5 * (Q + np.eye(m))
        sub = np.full(m, 1.0 / m)
        for _ in range(1_000_000):
            nxt = sub @ lazy
            if np.abs(nxt - sub).max() < tol * 1e-2:
                sub = nxt
                break
            sub = nxt
    sub = np.clip(sub, 0.0, None)
    sub /= sub.sum()
    residual = np.abs(sub @ Q - sub).max()
    if residual > tol:
        raise ConvergenceError(f"stationary solve residual {residual:.3e} exceeds {tol:.0e}")
    pi = np.zeros(n)
    pi[members] = sub
    return pi


@dataclass
class EDFStationary:
    states: list[tuple[int, ...]]
    distribution: np.ndarray
    idle: float

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {s: float(w) for s, w in zip(self.states, self.distribution)}


def edf_stationary(spec: HomogeneousSpec) -> EDFStationary:
    """Stationary law of the EDF interval chain and expected idle slots per interval."""
    chain = zeta_chain(spec)
    pi = stationary_distribution(chain.matrix)
    p = float(spec.reliability)
    idle = sum(w * float(negbin_idle(sum(z), spec.interval, p))
               for z, w in zip(chain.states, pi) if w > 0)
    return EDFStationary(chain.states, pi, float(idle))


def homogeneous_qmax(spec: HomogeneousSpec) -> float:
    """Largest common per-client throughput: ``p (T - I_EDF) / (N T)``."""
    idle = edf_stationary(spec).idle
    return float(spec.reliability) * (spec.interval - idle) / (spec.n_clients * spec.interval)


# -- coupling harness --------------------------------------------------------

Rival = Callable[[tuple[int, ...], int], Sequence[int]]


def edf_allocation(zeta: Sequence[int], served: int) -> tuple[int, ...]:
    out = []
    for z in zeta:
        s = min(z, served)
        out.append(s)
        served -= s
    return tuple(out)


def priority_rival(order: Sequence[int]) -> Rival:
    """Serve buckets in a fixed priority order (0-based bucket indices)."""
    order = list(order)

    def rival(zeta, served):
        alloc = [0] * len(zeta)
        for k in order:
            s = min(zeta[k], served)
            alloc[k] = s
            served -= s
        return alloc
    return rival


def random_rival(rng) -> Rival:
    """Work-conserving rival that delivers uniformly random packets each interval."""
    def rival(zeta, served):
        pool = np.repeat(np.arange(len(zeta)), zeta)
        picks = rng.choice(pool, size=served, replace=False) if served else []
        return np.bincount(np.asarray(picks, dtype=np.int64), minlength=len(zeta)).tolist()
    return rival


def _apply(zeta, alloc, n_clients):
    K = len(zeta)
    return tuple(zeta[k + 1] - alloc[k + 1] for k in range(K - 1)) + (n_clients,)


def edf_coupling_dominates(spec: HomogeneousSpec, rival: Rival, j_sequence: Sequence[int],
                           return_trace: bool = False):
    """Check that EDF keeps every tail sum ``sum_{i>=k} zeta(i)`` at least as large.

    Both interval processes see the same success counts ``j_sequence``. A
    work-conserving rival must deliver exactly ``min(j, sum(zeta))`` packets;
    anything else raises ``HarnessError``.
    """
    N, K = spec.n_clients, spec.lifetime
    ze = zr = (0,) * (K - 1) + (N,)
    ok = True
    trace = []
    for l, j in enumerate(j_sequence, start=1):
        tails_e = np.cumsum(ze[::-1])[::-1]
        tails_r = np.cumsum(zr[::-1])[::-1]
        trace.append((ze, zr))
        if (tails_e < tails_r).any():
            ok = False
        if not 0 <= j <= spec.interval:
            raise HarnessError(f"interval {l}: success count {j} outside [0, {spec.interval}]")
        alloc = [int(a) for a in rival(zr, min(j, sum(zr)))]
        if len(alloc) != K or any(a < 0 or a > z for a, z in zip(alloc, zr)):
            raise HarnessError(f"interval {l}: rival allocation {alloc} infeasible for state {zr}")
        if sum(alloc) != min(j, sum(zr)):
            raise HarnessError(f"interval {l}: rival is not work-conserving "
                               f"(served {sum(alloc)}, could serve {min(j, sum(zr))})")
        ze_next = zeta_step(ze, j, N)
        assert ze_next == _apply(ze, edf_allocation(ze, min(j, sum(ze))), N)
        ze, zr = ze_next, _apply(zr, alloc, N)
    tails_e = np.cumsum(ze[::-1])[::-1]
    tails_r = np.cumsum(zr[::-1])[::-1]
    trace.append((ze, zr))
    ok = ok and bool((tails_e >= tails_r).all())
    return (ok, trace) if return_trace else ok

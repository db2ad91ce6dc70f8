"""General capacity region through the average-reward occupation-measure LP.

System state at the start of a slot: for every client ``n`` a tuple of
``tau_n`` cells, cell ``k`` counting packets whose deadline is ``k`` slots
away (cell ``tau_n - 1`` holds the packets generated during the previous
slot), together with the joint traffic-chain state. An action serves one
packet from a non-empty cell or idles.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components

from ..model import ConfigError
from ..traffic import MarkovSource

DEFAULT_STATE_CAP = 100_000
FEASIBILITY_TOL = 1e-9


class StateSpaceTooLarge(RuntimeError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"state space has {size} states, above the cap of {cap}")
        self.size, self.cap = size, cap


class MultichainError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass
class JointTraffic:
    """Joint traffic chain: ``emission[x, n]`` packets for client ``n`` in state ``x``."""

    matrix: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.emission = np.asarray(self.emission, dtype=np.int64)
        if self.emission.ndim != 2 or self.emission.shape[0] != self.matrix.shape[0]:
            raise ConfigError("emission must have one row per traffic state")
        if np.abs(self.matrix.sum(axis=1) - 1).max() > 1e-12 or (self.matrix < 0).any():
            raise ConfigError("traffic transition matrix must be row-stochastic")
        n, _ = connected_components(self.matrix > 0, directed=True, connection="strong")
        if n != 1:
            raise ConfigError("joint traffic chain must be irreducible")

    @classmethod
    def independent(cls, sources: Sequence[MarkovSource]) -> "JointTraffic":
        P = np.ones((1, 1))
        for s in sources:
            P = np.kron(P, s.transition_matrix)
        combos = list(itertools.product(*(range(s.n_states) for s in sources)))
        em = np.array([[s.emission[x] for s, x in zip(sources, c)] for c in combos], dtype=np.int64)
        return cls(P, em)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def bounds(self) -> np.ndarray:
        return self.emission.max(axis=0)


@dataclass
class StateSpace:
    reliability: np.ndarray
    delay_bounds: tuple[int, ...]
    traffic: JointTraffic
    states: list
    index: dict
    act_ptr: np.ndarray      # actions of state s: act_ptr[s]:act_ptr[s+1]
    act_client: np.ndarray   # 0-based client, -1 for idle
    act_cell: np.ndarray
    tr_ptr: np.ndarray       # outcomes of action a: tr_ptr[a]:tr_ptr[a+1]
    tr_next: np.ndarray
    tr_prob: np.ndarray
    tr_delivered: np.ndarray  # client delivered on this outcome, -1 if none

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.act_client)

    @property
    def n_clients(self) -> int:
        return len(self.delay_bounds)

    def actions(self, s: int) -> list[tuple[int, int] | None]:
        return [None if self.act_client[a] < 0 else (int(self.act_client[a]) + 1, int(self.act_cell[a]))
                for a in range(self.act_ptr[s], self.act_ptr[s + 1])]

    def kernel_row(self, a: int) -> dict[int, float]:
        row: dict[int, float] = {}
        for i in range(self.tr_ptr[a], self.tr_ptr[a + 1]):
            row[int(self.tr_next[i])] = row.get(int(self.tr_next[i]), 0.0) + float(self.tr_prob[i])
        return row

    def consistent_state(self, x: int = 0) -> int:
        """The state with only freshly generated packets and traffic state ``x``."""
        cells = tuple(tuple([0] * (tau - 1) + [int(self.traffic.emission[x, n])])
                      for n, tau in enumerate(self.delay_bounds))
        return self.index[(cells, x)]


def state_space_size(delay_bounds: Sequence[int], bounds: Sequence[int], n_traffic: int) -> int:
    return math.prod((b + 1) ** tau for b, tau in zip(bounds, delay_bounds)) * n_traffic


def build_state_space(reliability: Sequence[float], delay_bounds: Sequence[int], traffic,
                      bounds: Sequence[int] | None = None, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Enumerate every cell configuration and its controlled transition kernel.

    ``traffic`` is a ``JointTraffic`` or a list of per-client ``MarkovSource``
    objects (treated as independent).
    """
    if not isinstance(traffic, JointTraffic):
        traffic = JointTraffic.independent(list(traffic))
    p = np.asarray(reliability, dtype=float)
    taus = tuple(int(t) for t in delay_bounds)
    N = len(taus)
    if len(p) != N or traffic.emission.shape[1] != N:
        raise ConfigError("reliabilities, delay bounds and traffic must cover the same clients")
    if ((p <= 0) | (p > 1)).any() or min(taus) < 1:
        raise ConfigError("need reliabilities in (0, 1] and delay bounds >= 1")
    B = list(traffic.bounds) if bounds is None else list(bounds)
    if any(e > b for e, b in zip(traffic.bounds, B)):
        raise ConfigError("traffic emissions exceed the declared per-slot bounds")
    size = state_space_size(taus, B, traffic.n_states)
    if size > cap:
        raise StateSpaceTooLarge(size, cap)

    per_client = [list(itertools.product(range(b + 1), repeat=tau)) for b, tau in zip(B, taus)]
    states = [(cells, x) for cells in itertools.product(*per_client) for x in range(traffic.n_states)]
    index = {s: i for i, s in enumerate(states)}
    succ = [np.flatnonzero(traffic.matrix[x] > 0) for x in range(traffic.n_states)]

    act_ptr = [0]
    act_client, act_cell = [], []
    tr_ptr = [0]
    tr_next, tr_prob, tr_deliv = [], [], []

    def emit(cells, x, prob, delivered, acc):
        for x2 in succ[x]:
            nxt = tuple(c[1:] + (int(traffic.emission[x2, n]),) for n, c in enumerate(cells))
            key = (index[(nxt, int(x2))], delivered)
            acc[key] = acc.get(key, 0.0) + prob * traffic.matrix[x, x2]

    for cells, x in states:
        options = [(-1, -1)] + [(n, k) for n in range(N) for k in range(taus[n]) if cells[n][k] > 0]
        for n, k in options:
            acc: dict = {}
            if n < 0:
                emit(cells, x, 1.0, -1, acc)
            else:
                served = tuple(c if m != n else c[:k] + (c[k] - 1,) + c[k + 1:] for m, c in enumerate(cells))
                emit(served, x, p[n], n, acc)
                if p[n] < 1:
                    emit(cells, x, 1 - p[n], -1, acc)
            for (s2, d), w in sorted(acc.items()):
                tr_next.append(s2)
                tr_prob.append(w)
                tr_deliv.append(d)
            tr_ptr.append(len(tr_next))
            act_client.append(n)
            act_cell.append(k)
        act_ptr.append(len(act_client))

    return StateSpace(p, taus, traffic, states, index,
                      np.array(act_ptr, dtype=np.int64), np.array(act_client, dtype=np.int64),
                      np.array(act_cell, dtype=np.int64), np.array(tr_ptr, dtype=np.int64),
                      np.array(tr_next, dtype=np.int64), np.array(tr_prob, dtype=float),
                      np.array(tr_deliv, dtype=np.int64))


@dataclass
class StationaryPolicy:
    """Randomized stationary policy: ``probs[a]`` for each action ``a`` of its state.

    States outside the LP support fall back to serving the packet closest to
    its deadline (lowest cell, then lowest client), idling only when empty.
    """

    space: StateSpace
    probs: np.ndarray
    support: np.ndarray

    def distribution(self, s: int) -> dict:
        lo, hi = self.space.act_ptr[s], self.space.act_ptr[s + 1]
        return {a: float(self.probs[i]) for a, i in zip(self.space.actions(s), range(lo, hi))
                if self.probs[i] > 0}

    def matrix(self) -> dict:
        """``{state: {action: probability}}`` over the support."""
        return {self.space.states[s]: self.distribution(s) for s in np.flatnonzero(self.support)}


@dataclass
class LPResult:
    shortfall: float
    feasible: bool
    throughput: np.ndarray
    occupation: np.ndarray | None = None
    policy: StationaryPolicy | None = None


def _lp_matrices(space: StateSpace):
    S, A, N = space.n_states, space.n_actions, space.n_clients
    act_state = np.repeat(np.arange(S), np.diff(space.act_ptr))
    counts = np.diff(space.tr_ptr)
    tr_action = np.repeat(np.arange(A), counts)
    rows = np.concatenate([act_state, space.tr_next])
    cols = np.concatenate([np.arange(A), tr_action])
    vals = np.concatenate([np.ones(A), -space.tr_prob])
    balance = sp.csr_matrix((vals, (rows, cols)), shape=(S, A))
    A_eq = sp.vstack([balance, sp.csr_matrix(np.ones((1, A)))])
    A_eq = sp.hstack([A_eq, sp.csr_matrix((S + 1, N))]).tocsr()
    b_eq = np.zeros(S + 1)
    b_eq[-1] = 1.0
    served = space.act_client >= 0
    gain = sp.csr_matrix((space.reliability[space.act_client[served]],
                          (space.act_client[served], np.flatnonzero(served))), shape=(N, A))
    A_ub = sp.hstack([-gain, -sp.identity(N)]).tocsr()
    return A_eq, b_eq, A_ub, gain


def lp_feasible(space: StateSpace, q: Sequence[float], extract_policy: bool = True,
                tol: float = FEASIBILITY_TOL) -> LPResult:
    """Minimize total throughput shortfall ``sum_n (q_n - qhat_n)^+`` over stationary policies."""
    q = np.asarray(q, dtype=float)
    if q.shape != (space.n_clients,):
        raise ConfigError(f"need {space.n_clients} throughput requirements, got {q.shape}")
    A_eq, b_eq, A_ub, gain = _lp_matrices(space)
    c = np.concatenate([np.zeros(space.n_actions), np.ones(space.n_clients)])
    res = linprog(c, A_ub=A_ub, b_ub=-q, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"LP solver failed: {res.message}")
    x = np.clip(res.x[:space.n_actions], 0.0, None)
    shortfall = max(float(res.fun), 0.0)
    out = LPResult(shortfall, shortfall <= tol, gain @ x, x)
    if extract_policy and out.feasible:
        out.policy = extract_stationary_policy(space, x)
    return out


def extract_stationary_policy(space: StateSpace, x: np.ndarray, mass_tol: float = 1e-10) -> StationaryPolicy:
    S = space.n_states
    act_state = np.repeat(np.arange(S), np.diff(space.act_ptr))
    mass = np.bincount(act_state, weights=x, minlength=S)
    support = mass > mass_tol
    probs = np.zeros(space.n_actions)
    for s in range(S):
        lo, hi = space.act_ptr[s], space.act_ptr[s + 1]
        if support[s]:
            probs[lo:hi] = x[lo:hi] / mass[s]
        else:
            probs[_default_action(space, s)] = 1.0
    pol = StationaryPolicy(space, probs, support)
    _check_unichain(space, pol)
    return pol


def _default_action(space: StateSpace, s: int) -> int:
    lo, hi = space.act_ptr[s], space.act_ptr[s + 1]
    if hi - lo == 1:
        return lo
    cands = range(lo + 1, hi)
    return min(cands, key=lambda a: (space.act_cell[a], space.act_client[a]))


def _check_unichain(space: StateSpace, pol: StationaryPolicy, leak_tol: float = 1e-7) -> None:
    members = np.flatnonzero(pol.support)
    pos = {int(s): i for i, s in enumerate(members)}
    rows, cols = [], []
    for s in members:
        for a in range(space.act_ptr[s], space.act_ptr[s + 1]):
            if pol.probs[a] <= 0:
                continue
            for i in range(space.tr_ptr[a], space.tr_ptr[a + 1]):
                s2 = int(space.tr_next[i])
                if s2 not in pos:
                    if pol.probs[a] * space.tr_prob[i] > leak_tol:
                        raise MultichainError(f"policy support is not closed (leaks from {space.states[s]})")
                    continue
                rows.append(pos[int(s)])
                cols.append(pos[s2])
    m = len(members)
    graph = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    if n_comp != 1:
        raise MultichainError(f"LP support splits into {n_comp} classes; multichain instances are not supported")


def max_uniform_scale(space: StateSpace, direction: Sequence[float], tol: float = 1e-6) -> float:
    """Largest ``lam`` with ``lam * direction`` in the capacity region, by bisection."""
    d = np.asarray(direction, dtype=float)
    if (d < 0).any() or not d.any():
        raise ConfigError("direction must be non-negative and non-zero")
    # one transmission per slot bounds the total workload
    hi = 1.0 / float(np.sum(d / space.reliability))
    hi = hi * (1 + 1e-6) + 1e-9
    if lp_feasible(space, hi * d, extract_policy=False).feasible:
        raise SolverError("workload bound violated; LP tolerances are inconsistent")
    lo = 0.0
    while hi - lo > tol / 10:
        mid = 0.5 * (lo + hi)
        if lp_feasible(space, mid * d, extract_policy=False).feasible:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _simulate_policy(act_ptr, act_client, probs, tr_ptr, tr_next, tr_prob, tr_deliv,
                     n_clients, start, u_act, u_tr):
    delivered = np.zeros(n_clients, dtype=np.int64)
    s = start
    for t in range(len(u_act)):
        u = u_act[t]
        a = act_ptr[s + 1] - 1
        acc = 0.0
        for i in range(act_ptr[s], act_ptr[s + 1]):
            acc += probs[i]
            if u < acc:
                a = i
                break
        v = u_tr[t]
        j = tr_ptr[a + 1] - 1
        acc = 0.0
        for i in range(tr_ptr[a], tr_ptr[a + 1]):
            acc += tr_prob[i]
            if v < acc:
                j = i
                break
        if tr_deliv[j] >= 0:
            delivered[tr_deliv[j]] += 1
        s = tr_next[j]
    return delivered


def simulate_policy(space: StateSpace, policy: StationaryPolicy, horizon: int, seed: int = 0,
                    start: int | None = None) -> np.ndarray:
    """Run the controlled chain under ``policy``; returns per-client throughput."""
    if start is None:
        start = space.consistent_state(0)
    rng = np.random.default_rng(seed)
    u_act, u_tr = rng.random(horizon), rng.random(horizon)
    delivered = _simulate_policy(space.act_ptr, space.act_client, policy.probs, space.tr_ptr,
                                 space.tr_next, space.tr_prob, space.tr_delivered, space.n_clients, start, u_act, u_tr)
    return delivered / horizon

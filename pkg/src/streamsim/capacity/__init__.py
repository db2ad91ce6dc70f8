"""Capacity analysis: homogeneous closed form and the general LP oracle."""
import numpy as np

from .homogeneous import (ConvergenceError, EDFStationary, HarnessError, HomogeneousSpec, edf_coupling_dominates,
                          edf_stationary, homogeneous_qmax, negbin_idle, priority_rival, random_rival, zeta_chain,
                          zeta_step)
from .lp import (JointTraffic, LPResult, MultichainError, SolverError, StateSpace, StateSpaceTooLarge,
                 StationaryPolicy, build_state_space, lp_feasible, max_uniform_scale, simulate_policy)


def homogeneous_traffic(spec: HomogeneousSpec) -> JointTraffic:
    """Joint chain for the homogeneous case: a ``T``-phase cycle, all clients emit at phase 0."""
    T, N = spec.interval, spec.n_clients
    P = np.roll(np.eye(T), 1, axis=1)
    em = np.zeros((T, N), dtype=np.int64)
    em[0, :] = 1
    return JointTraffic(P, em)


def homogeneous_state_space(spec: HomogeneousSpec, cap: int = 100_000) -> StateSpace:
    N = spec.n_clients
    return build_state_space([float(spec.reliability)] * N, [spec.delay_bound] * N,
                             homogeneous_traffic(spec), cap=cap)


__all__ = [
    "ConvergenceError", "EDFStationary", "HarnessError", "HomogeneousSpec", "JointTraffic", "LPResult",
    "MultichainError", "SolverError", "StateSpace", "StateSpaceTooLarge", "StationaryPolicy",
    "build_state_space", "edf_coupling_dominates", "edf_stationary", "homogeneous_qmax",
    "homogeneous_state_space", "homogeneous_traffic", "lp_feasible", "max_uniform_scale", "negbin_idle",
    "priority_rival", "random_rival", "simulate_policy", "zeta_chain", "zeta_step",
]

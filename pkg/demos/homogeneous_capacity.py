"""Closed-form capacity q_max for homogeneous clients versus an EDF simulation."""
from fractions import Fraction

import numpy as np

from streamsim.capacity import HomogeneousSpec, edf_stationary, homogeneous_qmax
from streamsim.scenarios import homogeneous_config
from streamsim.simulator import run

if __name__ == "__main__":
    print(f"{'N':>2} {'T':>2} {'K':>2} {'p':>4} {'idle/interval':>14} {'q_max':>8} {'simulated':>10}")
    for n, t, k, p in [(1, 2, 1, "1/2"), (2, 2, 2, "1/2"), (3, 4, 2, "3/10"), (3, 4, 3, "9/10")]:
        spec = HomogeneousSpec(n, t, k, Fraction(p))
        sim = run(homogeneous_config(spec, horizon=300_000, seed=1))
        print(f"{n:>2} {t:>2} {k:>2} {p:>4} {edf_stationary(spec).idle:>14.4f} {homogeneous_qmax(spec):>8.4f} "
              f"{np.mean(sim.delivered) / sim.horizon:>10.4f}")

"""Sketch the achievement regions of the four policies on the bundled scenario.

Uses a coarse grid and a short horizon so it finishes in about a minute;
the acceptance suite runs the full 21 x 21 grid. '#' marks achieved points,
Y grows upwards and X to the right.
"""
import os
from importlib.resources import files

from streamsim.experiments import ExperimentConfig, sweep_region, workers_from_env
from streamsim.scheduling import PolicyKind

if __name__ == "__main__":
    cfg = ExperimentConfig.load(files("streamsim") / "data" / "policies.cfg")
    cfg.grid_step, cfg.horizon = 0.1, int(os.environ.get("DEMO_HORIZON", 40_000))
    for kind in (PolicyKind.EPDF, PolicyKind.EDF, PolicyKind.LDF, PolicyKind.COST_INDEX):
        region = sweep_region(cfg, kind, workers=workers_from_env())
        print(f"{kind.value} ({int(region.achieved.sum())} points)")
        for j in reversed(range(len(region.ys))):
            print("   " + "".join("#" if region.achieved[i, j] else "." for i in range(len(region.xs))))

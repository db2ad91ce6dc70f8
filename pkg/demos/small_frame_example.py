"""The three-client example where a short debt frame breaks EPDF.

With M = 2 client 3 only receives 1/8 of the slots although 3/16 is
feasible; with M = 4 every requirement is met.
"""
from streamsim.scenarios import three_client_example
from streamsim.simulator import run

if __name__ == "__main__":
    for m_frame in (2, 4):
        cfg = three_client_example(m_frame, horizon=400_000, seed=0, record=True)
        metrics = run(cfg)
        thr = [round(float(x), 4) for x in metrics.throughput]
        req = [float(c.required_throughput) for c in cfg.clients]
        print(f"M={m_frame}: throughput {thr}  required {req}")
        print(f"      first slots served: {metrics.schedule['client'][:12].tolist()}")

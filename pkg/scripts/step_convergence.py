"""Time-step sensitivity of the roll-out infidelity for a fixed control vector.

Takes alpha from an optimize run (params.json) and reports the trace
infidelity at N, 2N and 4N steps together with the successive differences.

Example:
    python scripts/step_convergence.py --preset qft4 --alpha out/params.json
"""
import argparse
import json
from pathlib import Path

import numpy as np

from msqoc.config import make_config
from msqoc.objective import trace_infidelity
from msqoc.propagation import Propagator, WindowGrid


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--preset", default="qft4")
    p.add_argument("--alpha", required=True, help="params.json from an optimize run")
    p.add_argument("--levels", type=int, default=3)
    args = p.parse_args()

    cfg = make_config(args.preset)
    alpha = np.asarray(json.loads(Path(args.alpha).read_text())["alpha"])
    param, V = cfg.parameterization(), cfg.target_gate()
    prev = None
    for k in range(args.levels):
        steps = cfg.total_steps * 2**k
        prop = Propagator(cfg.system_spec(), param, WindowGrid(cfg.duration_ns, steps))
        inf = trace_infidelity(prop.rollout(alpha), V)
        delta = "" if prev is None else f"  change {abs(inf - prev):.2e}"
        print(f"N_T={steps:8d}  infidelity {inf:.10e}{delta}")
        prev = inf


if __name__ == "__main__":
    main()

"""Two masses on a spring: closed loop under Laplace disturbances.

With the literal noise level (variance 0.07 per force channel) the
distributionally robust and Cantelli programs are infeasible from the
start: the velocity variance the tube can hold down is larger than the
terminal slabs allow. A quieter plant (variance 0.01) shows the intended
behaviour. Runs are long enough for the masses to settle, since the
velocity limits make the transient slow.
"""
import sys

import numpy as np

from drsmpc import InitialInfeasible, monte_carlo, two_mass_spring
from drsmpc.sim import cost_decrease_gaps

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 100
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 200

literal = two_mass_spring()
for m in ("dr", "cantelli"):
    try:
        monte_carlo(literal, m, runs=1)
    except InitialInfeasible as exc:
        print(f"literal plant, {m}: {exc}")

quiet = two_mass_spring(noise_variance=0.01)
for m in ("gauss", "dr", "cantelli"):
    res = monte_carlo(quiet, m, runs=runs, base_seed=0, steps=steps)
    st = res.stats
    settle = res.meanStageCost[-20:].mean()
    print(f"\n{m}: max violations {st.maxCount}/{runs} (rate {st.empiricalRate:.3f}),"
          f" terminated runs {len(res.terminated)}")
    print(f"   mean stage cost, last 20 steps {settle:.4f} vs tr(SW) {res.traceSW:.4f}")
    share = np.mean([s == "S2" for r in res.records for s in r.strategies])
    print(f"   worst step {int(np.argmax(st.anyCounts))}, Strategy-2 share {share:.2f}")
    gaps = [g for r in res.records for _, g in cost_decrease_gaps(r, quiet, res.artifacts)]
    print(f"   cost-decrease slack over {len(gaps)} Strategy-2 steps: max {max(gaps, default=np.nan):.3g}")

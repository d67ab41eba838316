"""How tight is the moment-based slab?

For a zero-mean disturbance with known variance, the worst distribution
puts its mass on at most three points. Sweeping the nominal value across
the slab radius shows the worst-case violation probability crossing the
budget exactly at the radius, while the Gaussian rule gives away the
guarantee and the Cantelli rule leaves room on the table.
"""
import numpy as np

from drsmpc import slab_radius_cantelli, slab_radius_dr, slab_radius_gaussian, worst_case_violation

var, bound, eps = 0.3, 2.0, 0.2
r_dr = slab_radius_dr(var, bound, eps)
r_g = slab_radius_gaussian(var, bound, eps)
r_c = slab_radius_cantelli(var, bound, eps)
print(f"radii: gauss {r_g:.4f}  dr {r_dr:.4f}  cantelli {r_c:.4f}")

for m in sorted(np.append(np.linspace(0.0, r_g, 9), r_dr - 1e-4)):
    p = worst_case_violation(m, var, bound)
    tag = "  <- dr radius" if abs(m - r_dr) < 1e-3 else ""
    print(f"m = {m:.4f}  worst-case violation {p:.4f}{tag}")

print("\nat the dr radius:      ", round(worst_case_violation(r_dr - 1e-4, var, bound), 4))
print("at the gaussian radius:", round(worst_case_violation(r_g, var, bound), 4), "(above the budget)")
print("at the cantelli radius:", round(worst_case_violation(r_c, var, bound), 4))

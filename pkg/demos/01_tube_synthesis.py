"""Offline synthesis for the buck-boost converter.

Walks through the pieces the controller needs before it ever solves a
program: the terminal weight for a given tube gain, the error covariances
along the horizon, and how wide each constraint slab stays under the three
tightening rules.
"""
import numpy as np

from drsmpc import buck_boost, slab_radius_cantelli, slab_radius_dr, slab_radius_gaussian, synthesize
from drsmpc.tightening import certify_terminal, terminal_set

np.set_printoptions(precision=4, suppress=True)

sc = buck_boost()

# Terminal weight from the published gain alone (no S override).
art = synthesize(sc.model, sc.cost, K=sc.K)
print("K =", art.K)
print("S =\n", art.S)
print("rho(A + BK) =", round(art.spectralRadius, 4))

# The Riccati gain is different from the published one; compare the two.
lqr = synthesize(sc.model, sc.cost)
print("\nLQR gain for the same Q, R:", lqr.K)

# Error covariance grows from zero towards the steady state.
for l, Sig in enumerate(art.Sigma):
    print(f"stage {l}: var(x1) = {Sig[0, 0]:.4f}   var(x2) = {Sig[1, 1]:.4f}")
print("steady state:", np.diag(art.SigmaBar))

# Slab radii for |x1| <= 2 with violation budget 0.2 along the horizon
print("\nstage   dr      gauss   cantelli")
for l, Sig in enumerate(art.Sigma):
    v = Sig[0, 0]
    print(f"{l:>5}  {slab_radius_dr(v, 2.0, 0.2):.4f}  {slab_radius_gaussian(v, 2.0, 0.2):.4f}"
          f"  {slab_radius_cantelli(v, 2.0, 0.2):.4f}")

# The box terminal set built from the steady covariance is not invariant
# under the published gain; the certificate reports by how much.
term = terminal_set(sc.constraints, art)
rep = certify_terminal(art, sc.constraints, term, input_tightening=sc.input_tightening)
print("\nterminal radii:", term.radii)
print("invariant:", rep.invariant, " margins:", np.round(rep.invariance_margins, 3))
print("input admissible:", rep.inputAdmissible)

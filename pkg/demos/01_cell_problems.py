"""Cell problems and effective coefficients.

Run:  python3 demos/01_cell_problems.py
"""
import numpy as np

from perfhom import PhysicalParams, default_cell, no_hole_cell, solve_all
from perfhom.coefficients import constant, iso, laminate

np.set_printoptions(precision=4, suppress=True)

# A layered material without holes. Across the layers the effective
# conductivity is the harmonic mean of 1 and 4, along them the arithmetic one.
lam = solve_all(PhysicalParams(kappa=iso(laminate(1.0, 4.0))), no_hole_cell(), 64)
print("laminate K =\n", lam.effective.K)
print("expected diag(1.6, 2.5)")

# Now punch the default hole [0.25, 0.75]^2 into a unit-conductivity cell.
# Heat has to go around the hole, so K drops below 1 in both directions.
holed = solve_all(PhysicalParams(kappa=iso(constant(1.0))), default_cell(), 32)
print("\nunit kappa with hole, K =\n", holed.effective.K)
print("eigenvalues", np.linalg.eigvalsh(holed.effective.K))

# The default parameter set: oscillating kappa and d_i, weak Soret/Dufour terms.
eff = solve_all(PhysicalParams(), default_cell(), 32).effective
print("\ndefault K =\n", eff.K)
print("D_1 =\n", eff.D[0])
print("T_1 =\n", eff.T[0])
# deposition rates are surface integrals scaled by |Y1| = 0.75, |Gamma| = 2
print("A =", np.round(eff.A, 4), " (2/0.75 =", round(2 / 0.75, 4), ")")
print("heat loss factor =", round(eff.heat_loss_factor, 4), " (|Gamma_R|/|Y1| = 1/0.75)")

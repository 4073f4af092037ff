"""One micro run on the perforated domain next to the matching homogenized run.

Run:  python3 demos/02_micro_and_macro.py     (about 10 seconds)
"""
import numpy as np

from perfhom import fem
from perfhom import PerforatedDomain, PhysicalParams, build_perforated_mesh, build_unit_square_mesh, default_cell
from perfhom.cell import solve_all
from perfhom.macro import run_macro
from perfhom.micro import InitialData, run_micro

eps, n = 0.125, 8
params = PhysicalParams()
init = InitialData.default()

micro_mesh = build_perforated_mesh(PerforatedDomain(eps, default_cell()), n)
print(f"micro mesh: {micro_mesh.n_nodes} nodes, {micro_mesh.surface_nodes.size} on pore surfaces")

micro = run_micro(micro_mesh, params, init, t_end=0.1)
print(f"dt = {micro.grid.dt:.5f}, {micro.grid.n_steps} steps, positive: {micro.positive}")

# the homogenized problem lives on the full square, same node spacing
cells = solve_all(params, default_cell(), n)
macro_mesh = build_unit_square_mesh(micro_mesh.nx, eps)
macro = run_macro(macro_mesh, cells.effective, params, init, t_end=0.1)

idx = macro_mesh.node_index[micro_mesh.grid_ids]
for k in (0, 5, 10):
    a, b = micro.snapshots[k], macro.snapshots[k]
    gap = fem.l2_norm(a.theta - b.theta[idx], micro_mesh)
    print(f"t={a.t:.3f}  ||theta_micro - theta_macro|| = {gap:.3e}   "
          f"mean u1 micro {fem.integrate(a.u[0], micro_mesh) / micro_mesh.area:.4f}  "
          f"macro {fem.integrate(b.u[0], macro_mesh):.4f}")

# energy quantities of the a-priori estimate, for the micro run
d = micro.diagnostics
print("\n||grad theta||^2 over time:", np.round(d.grad_theta_sq, 4))
print("int ||d_t u||^2:", np.round(d.du_int[-1], 5))
print("deposited v on the surface at T: min", micro.final.v.min().round(4), "max", micro.final.v.max().round(4))

"""
Bringing your own system
========================

The bundled example is only a config file. Here a scalar-input plant with
three scheduling vertices is described in code, simulated, and handed to the
same pipeline. A hexagonal template (three bands) replaces the box.
"""
import numpy as np

from lpv_rci.datamatrices import build, informativity
from lpv_rci.lmi import build_program, variable_counts
from lpv_rci.polytope import symmetric_band_vertices
from lpv_rci.synthesis import SynthesisConfig, SynthesisInfeasible, synthesize
from lpv_rci.trajectory import ConstraintSets, LpvPlant, generate_excitation, simulate
from lpv_rci.verify import monte_carlo_invariance, vertex_invariance

A = (np.array([[1.05, 0.3], [0.0, 0.9]]),
     np.array([[0.95, 0.1], [-0.1, 1.0]]),
     np.array([[1.0, 0.2], [0.05, 0.85]]))
B = np.array([[0.0], [1.0]])
plant = LpvPlant(A, B)

P = np.eye(3)  # p lives in the unit simplex
cs = ConstraintSets(
    H_x=np.vstack([np.eye(2), -np.eye(2)]) / 5.0,  # |x_i| <= 5
    H_u=np.array([[0.5], [-0.5]]),                  # |u| <= 2
    H_w=np.eye(2) / 0.02,                           # |w_i| <= 0.02
    scheduling_vertices=P,
)

u, p, w = generate_excitation(40, [[-2.0, 2.0]], P, seed=4, H_w=cs.H_w)
traj = simulate(plant, [0.0, 0.0], u, p, w, P)
dm = build(traj, cs)
print("informativity:", informativity(dm, cs).to_dict())

angles = np.pi / 6 + np.arange(3) * np.pi / 3
C = np.column_stack([np.cos(angles), np.sin(angles)])
theta = symmetric_band_vertices(C).vertices
print(f"template has {len(theta)} vertices")
print("variables per program:", variable_counts(build_program(dm, cs, C, theta)))

try:
    res = synthesize(dm, SynthesisConfig(C=C, constraints=cs, max_iters=4))
except SynthesisInfeasible as exc:
    raise SystemExit(f"no invariant set for this data: {exc}")

print(f"volume {res.volume:.3f} after {len(res.volume_history)} iterations ({res.status})")
print("vertex check:", vertex_invariance(res, plant.M, cs).passed)
mc = monte_carlo_invariance(res, cs, plant=plant, trials=200, seed=0, init="boundary")
print(f"monte carlo: {mc.violating_trials} of {mc.trials} trials violated")

"""
RCI set from one trajectory
===========================

Collect 20 samples from the parameter-varying double integrator, check that
the data pins down the model set, then grow a polytopic invariant set and its
gain-scheduled controller. Run with ``python demos/quickstart.py``.
"""
import numpy as np

from lpv_rci import presets
from lpv_rci.datamatrices import build, informativity
from lpv_rci.synthesis import SynthesisConfig, synthesize
from lpv_rci.verify import containment, monte_carlo_invariance, vertex_invariance

np.set_printoptions(precision=3, suppress=True)

setup = presets.load_setup()
cs = setup.constraints
traj = setup.collect(T=20, seed=0)

# the regressor [p kron x; u] needs full row rank for a bounded model set
dm = build(traj, cs)
rep = informativity(dm, cs)
print(f"rank(Xpu) = {rep.rank_Xpu} of {rep.required_rank}, bounded model set: {rep.bounded}")

results = {}
for nc in (2, 3):
    cfg = SynthesisConfig(C=setup.C(nc), constraints=cs, max_iters=5)
    res = synthesize(dm, cfg)
    results[nc] = res
    print(f"\nn_c = {nc}: volume {res.volume:.2f} ({res.status})")
    print("  history:", " -> ".join(f"{v:.2f}" for v in res.volume_history))
    print("  W =", res.W.round(2).tolist())
    for l, K in enumerate(res.K_list, start=1):
        print(f"  K{l} =", K.round(2).tolist())

res = results[3]

# figures recomputed from vertices and simulations, not from the solver
print("\ncontainment:", containment(res, cs).passed)
print("vertex check on the true plant:", vertex_invariance(res, setup.plant.M, cs).passed)
mc = monte_carlo_invariance(res, cs, plant=setup.plant, trials=300, horizon=50, seed=1)
print(f"closed loop: {mc.violating_trials}/{mc.trials} trials left S (max |C W^-1 x| = {mc.max_norm:.4f})")

# without feedback the unstable plant leaves S quickly
mc0 = monte_carlo_invariance(res, cs, plant=setup.plant, trials=300, horizon=50, seed=1,
                             K_list=[np.zeros((1, 2))] * 2)
print(f"open loop:   {mc0.violating_trials}/{mc0.trials} trials left S")

# vertices of S, ready for plotting
print("\nvertices of S:\n", res.set_vertices())

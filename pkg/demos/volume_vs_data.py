"""
How much data is enough
=======================

Every extra sample can only shrink the set of models consistent with the
data, so the certified set should not get smaller as the record grows. This
runs the synthesis on nested prefixes of a single 200-sample experiment.
"""
from lpv_rci import presets
from lpv_rci.synthesis import SynthesisConfig
from lpv_rci.verify import volume_vs_T

setup = presets.load_setup()
traj = setup.collect(T=200, seed=0)
cfg = SynthesisConfig(C=setup.C(3), constraints=setup.constraints, max_iters=5)

# T=3 is too short: five regressor rows need at least five columns
table = volume_vs_T(traj, [3, 20, 50, 100, 200], cfg)
for row in table.rows:
    vol = "-" if row.volume is None else f"{row.volume:7.2f}"
    print(f"T={row.T:4d}  rank={row.rank}  volume={vol}  {row.status}  {row.seconds:5.1f}s")

solved = table.rows[1:]
print("trend non-decreasing (5% slack):",
      all(b.volume >= a.volume * 0.95 for a, b in zip(solved, solved[1:])))

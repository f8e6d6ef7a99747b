"""How S falls off as the two quantum dots become less identical.

Run:  python demos/ideal_and_noisy_chsh.py
"""

from qdbell.noise import cross_visibility, local_visibility, noise_from_visibilities
from qdbell.optimize import OptimizeConfig, Scenario, optimize_angles

cfg = OptimizeConfig(restarts=4)

# identical, pure, lossless emitters: the heralded state is a Bell state
settings, res = optimize_angles(Scenario().params(), "postselected", cfg)
print(f"ideal emitters: S = {res.s_value:.12f}")

# dephasing and spectral wandering lower both visibilities; V_beta (two dots)
# drops faster than V_alpha (one dot) because of the detuning
print("\n V_alpha  V_beta   S(postselected)")
for va, vb in [(1.0, 1.0), (0.95, 0.8), (0.9, 0.7), (0.86, 0.67), (0.8, 0.6)]:
    noise = noise_from_visibilities(va, vb)
    assert abs(local_visibility(noise) - va) < 1e-9 and abs(cross_visibility(noise) - vb) < 1e-9
    _, res = optimize_angles(Scenario(v_alpha=va, v_beta=vb).params(), "postselected", cfg)
    print(f"  {va:.2f}    {vb:.2f}    {res.s_value:.4f}")

# an imperfect single-photon source (g2 > 0) adds a fully distinguishable photon
print("\n g2     S(postselected), V = 0.95")
for g2 in (0.0, 0.02, 0.05, 0.1):
    _, res = optimize_angles(Scenario(v_alpha=0.95, g2=g2).params(), "postselected", cfg)
    print(f"  {g2:.2f}   {res.s_value:.4f}")

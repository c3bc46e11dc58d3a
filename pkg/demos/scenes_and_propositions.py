"""
Scenes, propositions and the SOZ rule
=====================================

A generated scene carries a brain outline, gray / white / vascular regions,
activated voxels and a BOLD time course.  Six propositions are evaluated on
it and combined into the SOZ rule.
"""

from raresage.knowledge.soz import PROPOSITIONS, evaluate_propositions, kappa_soz
from raresage.synthgen import SceneSpec, gen_scene, gen_scenes

for kind in ("soz", "rsn", "noise"):
    pv = evaluate_propositions(gen_scene(SceneSpec(kind, seed=3)))
    bits = " ".join(f"{p}={int(b)}" for p, b in zip(PROPOSITIONS, pv.booleans()))
    print(f"{kind:5s} {bits}  clusters={pv.cluster_count}  kappa={kappa_soz(pv)}")

# Rule agreement over many seeds
for kind in ("soz", "rsn", "noise"):
    rate = sum(kappa_soz(evaluate_propositions(s)) for s in gen_scenes(kind, 50)) / 50
    print(f"{kind:5s} satisfies the rule in {100 * rate:.0f}% of 50 scenes")

import numpy as np
from dynroute.instance import load_instance
from dynroute.simulator import DynamicConfig, run_episode
from dynroute.policies import PolicySpec, Policy
from dynroute.dataset import anticipative_baseline_cost
from dynroute.pchgs import HgsParams

instances = {f"bench-{x}": load_instance(f"tests/fixtures/bench_{x}.json") for x in "ab"}
model = "/tmp/model2_e0.05_l0.05_0.97.json"
for ss in (8, 10):
    costs = {"ml_co": [], "greedy": [], "ant": []}
    for name, inst in instances.items():
        for k in range(10):
            cfg = DynamicConfig(n_epochs=5, sample_size=ss, instance_seed=2000 + k)
            for kind in ("ml_co", "greedy"):
                spec = PolicySpec(kind=kind, seed=3, budget_iters=100, stall_iters=50, model_path=model)
                costs[kind].append(run_episode(inst, cfg, Policy(spec, inst, cfg)).total_cost)
            costs["ant"].append(anticipative_baseline_cost(inst, cfg, HgsParams(budget_iters=150, stall_iters=80, init_pool=10, seed=k)))
    g, m, a = (np.mean(costs[k]) for k in ("greedy", "ml_co", "ant"))
    wins = sum(mm < gg for mm, gg in zip(costs["ml_co"], costs["greedy"]))
    print(f"ss={ss}: greedy {g:.0f} ({g/a-1:+.1%}), ml_co {m:.0f} ({m/a-1:+.1%}), margin {(g-m)/g:+.1%}, wins {wins}/20, ant {a:.0f}", flush=True)

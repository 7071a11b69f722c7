import time, dataclasses
import numpy as np
from dynroute.instance import load_instance
from dynroute.simulator import DynamicConfig, run_episode
from dynroute.dataset import build_scenario_samples
from dynroute.learning import PerturbationConfig, TrainConfig, train, save_model
from dynroute.pchgs import HgsParams
from dynroute.policies import PolicySpec, Policy

instances = {f"bench-{x}": load_instance(f"tests/fixtures/bench_{x}.json") for x in "ab"}

def build(sample_size):
    base = DynamicConfig(n_epochs=5, sample_size=sample_size, instance_seed=0)
    samples = []
    for name, inst in instances.items():
        for k in range(3):
            cfg = dataclasses.replace(base, instance_seed=1000 + k)
            ss, _ = build_scenario_samples(inst, cfg, HgsParams(budget_iters=200, stall_iters=100, init_pool=10, seed=1000+k))
            samples.extend(ss)
    return samples, base

def evaluate(model_path, eval_ss, budget=100):
    costs = {"ml_co": [], "greedy": []}
    for name, inst in instances.items():
        for k in range(5):
            cfg = DynamicConfig(n_epochs=5, sample_size=eval_ss, instance_seed=2000 + k)
            for kind in costs:
                spec = PolicySpec(kind=kind, seed=3, budget_iters=budget, stall_iters=50, model_path=model_path)
                costs[kind].append(run_episode(inst, cfg, Policy(spec, inst, cfg)).total_cost)
    g, m = np.mean(costs["greedy"]), np.mean(costs["ml_co"])
    return (g - m) / g

data8, base8 = build(8)
data10, base10 = build(10)
print(f"usable: ss8={sum(1 for s in data8 if s.state.open)}, ss10={sum(1 for s in data10 if s.state.open)}", flush=True)

runs = [
    ("A ss10train emax10", data10, base10, dict(epsilon=0.05, exact_auto_max=10), dict(learning_rate=0.05, lr_decay=0.97)),
    ("B eps.03 ss8", data8, base8, dict(epsilon=0.03, exact_auto_max=8), dict(learning_rate=0.05, lr_decay=0.97)),
    ("C batch3 ss8", data8, base8, dict(epsilon=0.05, exact_auto_max=8), dict(learning_rate=0.05, lr_decay=0.97, batch_size=3)),
    ("D val.2 ss8", data8, base8, dict(epsilon=0.05, exact_auto_max=8), dict(learning_rate=0.05, lr_decay=0.97, val_fraction=0.2)),
]
for label, data, base, pkw, tkw in runs:
    t0 = time.perf_counter()
    pcfg = PerturbationConfig(n_samples=10, seed=5,
                              inner_params=HgsParams(budget_iters=50, stall_iters=25, init_pool=6, seed=0), **pkw)
    tkw.setdefault("batch_size", 5)
    tcfg = TrainConfig(epochs=50, optimizer="adam", seed=6, **tkw)
    res = train(data, instances, base, set_kind="complete", model_kind="mlp", pcfg=pcfg, tcfg=tcfg)
    path = f"/tmp/model3_{label.split()[0]}.json"
    save_model(res.model, path)
    drop = 1 - res.log[-1]["train_loss"]/res.log[0]["train_loss"]
    m10 = evaluate(path, 10)
    m20 = evaluate(path, 20)
    print(f"{label}: drop {drop:.0%}, vs greedy ss10 {m10:+.1%}, ss20 {m20:+.1%} [{time.perf_counter()-t0:.0f}s]", flush=True)

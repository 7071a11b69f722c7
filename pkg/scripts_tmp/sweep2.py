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

samples, base = build(8)
print(f"{sum(1 for s in samples if s.state.open)} usable samples", flush=True)
for eps, lr, decay in ((0.1, 0.05, 0.97), (0.05, 0.05, 0.97), (0.1, 0.03, 1.0)):
    t0 = time.perf_counter()
    pcfg = PerturbationConfig(epsilon=eps, n_samples=10, seed=5, exact_auto_max=8,
                              inner_params=HgsParams(budget_iters=50, stall_iters=25, init_pool=6, seed=0))
    tcfg = TrainConfig(epochs=50, batch_size=5, learning_rate=lr, lr_decay=decay, optimizer="adam", seed=6)
    res = train(samples, instances, base, set_kind="complete", model_kind="mlp", pcfg=pcfg, tcfg=tcfg)
    path = f"/tmp/model2_e{eps}_l{lr}_{decay}.json"
    save_model(res.model, path)
    drop = 1 - res.log[-1]["train_loss"]/res.log[0]["train_loss"]
    m20 = evaluate(path, 20)
    m10 = evaluate(path, 10)
    print(f"eps={eps} lr={lr} dec={decay}: drop {drop:.0%}, vs greedy: ss20 {m20:+.1%}, ss10 {m10:+.1%} [{time.perf_counter()-t0:.0f}s]", flush=True)

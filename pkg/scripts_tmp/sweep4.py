import time, dataclasses
import numpy as np
from dynroute.instance import load_instance
from dynroute.simulator import DynamicConfig, run_episode
from dynroute.dataset import build_scenario_samples
from dynroute.learning import PerturbationConfig, TrainConfig, train, save_model
from dynroute.pchgs import HgsParams
from dynroute.policies import PolicySpec, Policy

instances = {f"bench-{x}": load_instance(f"tests/fixtures/bench_{x}.json") for x in "ab"}

def build(sample_size, n_epochs=5, epoch_duration=3600):
    base = DynamicConfig(n_epochs=n_epochs, sample_size=sample_size, instance_seed=0,
                         epoch_duration=epoch_duration, dispatch_offset=epoch_duration)
    samples = []
    for name, inst in instances.items():
        for k in range(3):
            cfg = dataclasses.replace(base, instance_seed=1000 + k)
            ss, _ = build_scenario_samples(inst, cfg, HgsParams(budget_iters=200, stall_iters=100, init_pool=10, seed=1000+k))
            samples.extend(ss)
    return samples, base

def evaluate20(model_path, eval_ss=10, budget=100):
    costs = {"ml_co": [], "greedy": []}
    for name, inst in instances.items():
        for k in range(10):
            cfg = DynamicConfig(n_epochs=5, sample_size=eval_ss, instance_seed=2000 + k)
            for kind in costs:
                spec = PolicySpec(kind=kind, seed=3, budget_iters=budget, stall_iters=50, model_path=model_path)
                costs[kind].append(run_episode(inst, cfg, Policy(spec, inst, cfg)).total_cost)
    g, m = np.mean(costs["greedy"]), np.mean(costs["ml_co"])
    wins = sum(mm < gg for mm, gg in zip(costs["ml_co"], costs["greedy"]))
    return (g - m) / g, wins

# first: re-evaluate existing candidates on the full 20-episode protocol
for path, label in (("/tmp/model2_e0.05_l0.05_0.97.json", "prev-best e.05"),
                    ("/tmp/model3_C.json", "batch3 e.05")):
    m, w = evaluate20(path)
    print(f"eval20 {label}: margin {m:+.1%} wins {w}/20", flush=True)

data8, base8 = build(8)
dataH, baseH = build(6, n_epochs=8, epoch_duration=2400)
print(f"usable: ss8={sum(1 for s in data8 if s.state.open)}, H={sum(1 for s in dataH if s.state.open)}", flush=True)

runs = [
    ("E lr.08 dec.95", data8, base8, dict(epsilon=0.05), dict(learning_rate=0.08, lr_decay=0.95)),
    ("F seed1", data8, base8, dict(epsilon=0.05), dict(learning_rate=0.05, lr_decay=0.97, model_seed=1)),
    ("G eps.07", data8, base8, dict(epsilon=0.07), dict(learning_rate=0.05, lr_decay=0.97)),
    ("H 8x2400 grid", dataH, baseH, dict(epsilon=0.05), dict(learning_rate=0.05, lr_decay=0.97)),
]
for label, data, base, pkw, tkw in runs:
    t0 = time.perf_counter()
    pcfg = PerturbationConfig(n_samples=10, seed=5, exact_auto_max=8,
                              inner_params=HgsParams(budget_iters=50, stall_iters=25, init_pool=6, seed=0), **pkw)
    tkw.setdefault("batch_size", 5)
    tcfg = TrainConfig(epochs=50, optimizer="adam", seed=6, **tkw)
    res = train(data, instances, base, set_kind="complete", model_kind="mlp", pcfg=pcfg, tcfg=tcfg)
    path = f"/tmp/model4_{label.split()[0]}.json"
    save_model(res.model, path)
    drop = 1 - res.log[-1]["train_loss"]/res.log[0]["train_loss"]
    m, w = evaluate20(path)
    print(f"{label}: drop {drop:.0%}, margin {m:+.1%} wins {w}/20 [{time.perf_counter()-t0:.0f}s]", flush=True)

"""Mini-batch SGD over the smoothed regret loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..instance import StaticInstance
from ..simulator import DynamicConfig
from ..dataset import TrainingSample
from .features import extract_features_raw, fit_standardization
from .loss import PerturbationConfig, inner_for_sample, perturbed_loss_and_grad
from .models import PrizeModel, backprop, init_model, predict_prizes


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, log: list):
        self.log = log
        super().__init__(f"non-finite loss estimate in epoch {epoch}")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 4
    learning_rate: float = 0.05
    lr_decay: float = 1.0
    optimizer: str = "adam"
    val_fraction: float = 0.0
    seed: int = 0
    model_seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class TrainResult:
    model: PrizeModel
    log: list[dict] = field(default_factory=list)


class _Adam:
    def __init__(self, model: PrizeModel, lr: float):
        self.lr = lr
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.mw = [np.zeros_like(w) for w in model.weights]
        self.vw = [np.zeros_like(w) for w in model.weights]
        self.mb = [np.zeros_like(b) for b in model.biases]
        self.vb = [np.zeros_like(b) for b in model.biases]

    def step(self, model: PrizeModel, grads_w, grads_b, lr: float) -> None:
        self.t += 1
        for i in range(len(model.weights)):
            self.mw[i] = self.b1 * self.mw[i] + (1 - self.b1) * grads_w[i]
            self.vw[i] = self.b2 * self.vw[i] + (1 - self.b2) * grads_w[i] ** 2
            self.mb[i] = self.b1 * self.mb[i] + (1 - self.b1) * grads_b[i]
            self.vb[i] = self.b2 * self.vb[i] + (1 - self.b2) * grads_b[i] ** 2
            mw_hat = self.mw[i] / (1 - self.b1**self.t)
            vw_hat = self.vw[i] / (1 - self.b2**self.t)
            mb_hat = self.mb[i] / (1 - self.b1**self.t)
            vb_hat = self.vb[i] / (1 - self.b2**self.t)
            model.weights[i] -= lr * mw_hat / (np.sqrt(vw_hat) + self.eps)
            model.biases[i] -= lr * mb_hat / (np.sqrt(vb_hat) + self.eps)


def train(
    samples: list[TrainingSample],
    instances: dict[str, StaticInstance],
    cfg: DynamicConfig,
    set_kind: str = "complete",
    model_kind: str = "mlp",
    pcfg: PerturbationConfig | None = None,
    tcfg: TrainConfig | None = None,
) -> TrainResult:
    """Fit a prize model on imitation samples.

    Standardization and the output scale come from the training split only and
    are frozen into the model. Deterministic given the seeds and an
    iteration-budget inner solver.
    """
    pcfg = pcfg or PerturbationConfig()
    tcfg = tcfg or TrainConfig()
    tcfg.validate()
    usable = [s for s in samples if len(s.state.open) > 0]
    if not usable:
        raise ValueError("dataset has no samples with open requests")

    rng = np.random.default_rng([tcfg.seed, len(usable)])
    order = rng.permutation(len(usable))
    n_val = int(round(tcfg.val_fraction * len(usable)))
    val_idx = sorted(order[:n_val].tolist())
    train_idx = sorted(order[n_val:].tolist())
    if not train_idx:
        raise ValueError("validation split leaves no training samples")

    raw = [
        extract_features_raw(s.state, instances[s.instance], cfg, set_kind) for s in usable
    ]
    fcfg = fit_standardization([raw[i] for i in train_idx], set_kind)
    feats = [
        (r - np.asarray(fcfg.mean)) / np.asarray(fcfg.scale) for r in raw
    ]
    output_scale = float(
        max(instances[usable[i].instance].travel.max() for i in train_idx)
    )
    model = init_model(model_kind, fcfg, seed=tcfg.model_seed, output_scale=output_scale)
    model.meta = {
        "epsilon": pcfg.epsilon,
        "n_samples": pcfg.n_samples,
        "seed": tcfg.seed,
        "model_seed": tcfg.model_seed,
        "set_kind": set_kind,
        "exact_inner": pcfg.exact_inner,
    }
    inners: dict[int, object] = {}

    def inner_at(i: int):
        if i not in inners:
            inners[i] = inner_for_sample(usable[i], instances[usable[i].instance], cfg, pcfg)
        return inners[i]
    eps_eff = pcfg.epsilon * model.output_scale
    z_rng = np.random.default_rng([pcfg.seed, 7])
    val_z = {
        i: np.random.default_rng([pcfg.seed, 13, i]).standard_normal(
            (pcfg.n_samples, len(usable[i].state.open))
        )
        for i in val_idx
    }

    adam = _Adam(model, tcfg.learning_rate) if tcfg.optimizer == "adam" else None
    log: list[dict] = []
    best = (float("inf"), model.copy_weights())

    def eval_loss(i: int, z: np.ndarray | None) -> tuple[float, np.ndarray]:
        theta = predict_prizes(model, feats[i])
        import dataclasses as _dc

        eff = _dc.replace(pcfg, epsilon=eps_eff)
        out = perturbed_loss_and_grad(theta, usable[i], inner_at(i), eff, z=z)
        return out.loss, out.grad

    for epoch in range(tcfg.epochs):
        lr = tcfg.learning_rate * (tcfg.lr_decay**epoch)
        perm = rng.permutation(train_idx)
        epoch_losses: list[float] = []
        for start in range(0, len(perm), tcfg.batch_size):
            batch = perm[start : start + tcfg.batch_size]
            grads_w = [np.zeros_like(w) for w in model.weights]
            grads_b = [np.zeros_like(b) for b in model.biases]
            for i in batch:
                z = z_rng.standard_normal((pcfg.n_samples, len(usable[i].state.open)))
                loss, grad_theta = eval_loss(int(i), z)
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch, log)
                epoch_losses.append(loss)
                gw, gb = backprop(model, feats[int(i)], grad_theta)
                for li in range(len(grads_w)):
                    grads_w[li] += gw[li] / len(batch)
                    grads_b[li] += gb[li] / len(batch)
            if lr > 0:
                if adam is not None:
                    adam.step(model, grads_w, grads_b, lr)
                else:
                    for li in range(len(model.weights)):
                        model.weights[li] -= lr * grads_w[li]
                        model.biases[li] -= lr * grads_b[li]
        train_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        row = {"epoch": epoch, "train_loss": train_loss}
        if val_idx:
            val_loss = float(np.mean([eval_loss(i, val_z[i])[0] for i in val_idx]))
            row["val_loss"] = val_loss
            if val_loss < best[0]:
                best = (val_loss, model.copy_weights())
        log.append(row)

    if val_idx and best[0] < float("inf"):
        model.set_weights(*best[1])
    model.meta["trained_epochs"] = tcfg.epochs
    return TrainResult(model=model, log=log)

"""Loss, optimizers, the mini-batch training loop, and hyperparameter search.

Training follows the usual pattern: shuffle the training windows each epoch
(seeded), walk mini-batches (final partial batch kept), backpropagate through
the encoder and then the LSTM, clip the global gradient norm, and step the
optimizer. A chronological tail of the training split (15% by default) is
held out for validation-driven early stopping; the parameters from the best
validation epoch are the ones reported.

SGD applies the LSTM learning rate to LSTM weights and the transformer
learning rate to encoder and head weights. The adaptive-momentum optimizer
relaxes its momentum factor toward a ceiling once per epoch:
mu <- mu + rate * (mu_target - mu).
"""

import copy
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import pso as P
from .model import ModelParams, backward_batch, build_model, forward_batch
from .preprocessing import SplitSpec, WindowedDataset, invert_standardization
from .metrics import EvalReport, evaluate
from .rng import SeededRng

DIVERGED_FITNESS = 1e18


def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. the predictions."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("cannot compute a loss over zero samples")
    err = pred - target
    return float(np.mean(err * err)), (2.0 / pred.size) * err


@dataclass
class TrainConfig:
    lstm_lr: float = 1e-3
    transformer_lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 100
    iterations_per_epoch: int = 1000
    patience: int = 10
    min_delta: float = 1e-9
    optimizer: str = "sgd"  # sgd | adam | adaptive-momentum
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum_lr: float = 1e-3
    momentum_init: float = 0.9
    momentum_update_rate: float = 0.1
    momentum_target: float = 0.99
    grad_clip_norm: float = 5.0
    val_fraction: float = 0.15
    lstm_layers: int = 2
    head_width: int = 64
    seed: int = 0

    def validate(self):
        positive = {
            "batch_size": self.batch_size,
            "iterations_per_epoch": self.iterations_per_epoch,
            "patience": self.patience,
            "lstm_lr": self.lstm_lr,
            "transformer_lr": self.transformer_lr,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in ("sgd", "adam", "adaptive-momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    train_losses: list
    val_losses: list
    stopped_epoch: int
    best_epoch: int
    train_mse_initial: float
    train_mse_final: float
    wall_time_s: float
    params: ModelParams
    used_train_indices: np.ndarray

    def summary(self) -> dict:
        return {
            "train_losses": [float(v) for v in self.train_losses],
            "val_losses": [float(v) for v in self.val_losses],
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "train_mse_initial": self.train_mse_initial,
            "train_mse_final": self.train_mse_final,
        }


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

class SgdOptimizer:
    """Plain gradient descent with per-component learning rates."""

    def __init__(self, lstm_lr=1e-3, transformer_lr=1e-4):
        self.lstm_lr = lstm_lr
        self.transformer_lr = transformer_lr

    def _lr(self, name):
        return self.lstm_lr if name.startswith("lstm.") else self.transformer_lr

    def step(self, model: ModelParams, grads: ModelParams):
        grad_map = dict(grads.named_arrays())
        for name, arr in model.named_arrays():
            arr -= self._lr(name) * grad_map[name]

    def advance_epoch(self):
        pass


class AdamOptimizer:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, model: ModelParams, grads: ModelParams):
        self.t += 1
        grad_map = dict(grads.named_arrays())
        for name, arr in model.named_arrays():
            g = grad_map[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(arr)
                self.v[name] = np.zeros_like(arr)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            arr -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def advance_epoch(self):
        pass


class AdaptiveMomentumOptimizer:
    """Heavy-ball updates whose momentum relaxes toward a ceiling per epoch."""

    def __init__(self, lr=1e-3, mu=0.9, update_rate=0.1, mu_target=0.99):
        self.lr = lr
        self.mu = mu
        self.update_rate = update_rate
        self.mu_target = mu_target
        self.velocity = {}

    def step(self, model: ModelParams, grads: ModelParams):
        grad_map = dict(grads.named_arrays())
        for name, arr in model.named_arrays():
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(arr)
            v = self.mu * v - self.lr * grad_map[name]
            self.velocity[name] = v
            arr += v

    def advance_epoch(self):
        self.mu = min(
            self.mu + self.update_rate * (self.mu_target - self.mu), self.mu_target
        )


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SgdOptimizer(cfg.lstm_lr, cfg.transformer_lr)
    if cfg.optimizer == "adam":
        return AdamOptimizer(cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return AdaptiveMomentumOptimizer(
        cfg.momentum_lr, cfg.momentum_init, cfg.momentum_update_rate, cfg.momentum_target
    )


def clip_gradients(grads: ModelParams, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(a * a)) for _, a in grads.named_arrays()))
    if total > max_norm > 0:
        scale = max_norm / total
        for _, arr in grads.named_arrays():
            arr *= scale
    return total


class EarlyStopping:
    """Patience counter over validation losses.

    The best epoch tracks any strict improvement; the patience streak resets
    only on improvements larger than ``min_delta``.
    """

    def __init__(self, patience: int, min_delta: float = 1e-9):
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.min_delta = min_delta
        self.best_value = math.inf
        self.best_epoch = 0
        self.streak = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record epoch (1-based) validation loss; True means stop now."""
        improved_enough = value < self.best_value - self.min_delta
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
        self.streak = 0 if improved_enough else self.streak + 1
        return self.streak >= self.patience


def _batched_predictions(dataset: WindowedDataset, indices, model, batch=256):
    preds = np.empty(len(indices))
    for start in range(0, len(indices), batch):
        chunk = indices[start : start + batch]
        preds[start : start + len(chunk)], _ = forward_batch(
            dataset.features[chunk], model
        )
    return preds


def dataset_mse(dataset: WindowedDataset, indices, model) -> float:
    preds = _batched_predictions(dataset, indices, model)
    loss, _ = mse_loss(preds, dataset.targets[indices])
    return loss


def carve_validation(train_indices: np.ndarray, fraction: float):
    """Chronological tail of the training indices becomes validation."""
    n = len(train_indices)
    if n < 2:
        raise ValueError(f"need at least 2 training windows, got {n}")
    n_val = max(1, int(math.floor(fraction * n)))
    return train_indices[: n - n_val], train_indices[n - n_val :]


def build_model_from_point(
    hp: P.HyperparamPoint,
    n_features: int,
    lookback: int,
    cfg: TrainConfig,
    rng: SeededRng,
    lstm_enabled: bool = True,
    transformer_enabled: bool = True,
) -> ModelParams:
    return build_model(
        n_features=n_features,
        lookback=lookback,
        lstm_hidden=hp.lstm_hidden,
        lstm_layers=cfg.lstm_layers,
        transformer_layers=hp.transformer_layers,
        attention_heads=hp.attention_heads,
        d_model=hp.d_model,
        head_width=cfg.head_width,
        lstm_enabled=lstm_enabled,
        transformer_enabled=transformer_enabled,
        rng=rng,
    )


def train(
    dataset: WindowedDataset,
    split: SplitSpec,
    hp: P.HyperparamPoint,
    cfg: TrainConfig,
    rng: SeededRng | None = None,
    init_rng: SeededRng | None = None,
    shuffle_rng: SeededRng | None = None,
    lstm_enabled: bool = True,
    transformer_enabled: bool = True,
    model: ModelParams | None = None,
) -> TrainReport:
    """Mini-batch training with early stopping on a held-out tail."""
    cfg.validate()
    if len(split.train) == 0:
        raise ValueError("empty training split")
    base = rng or SeededRng(cfg.seed)
    init_rng = init_rng or base.split(1)
    shuffle_rng = shuffle_rng or base.split(2)

    if model is None:
        model = build_model_from_point(
            hp, dataset.n_features, dataset.lookback, cfg, init_rng,
            lstm_enabled, transformer_enabled,
        )
    opt = make_optimizer(cfg)
    if cfg.optimizer == "sgd":
        # the resolved hyperparameter point owns the component rates
        opt.lstm_lr = hp.lstm_lr
        opt.transformer_lr = hp.transformer_lr

    inner_train, inner_val = carve_validation(split.train, cfg.val_fraction)
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    train_losses, val_losses = [], []
    used = set()
    best_params = copy.deepcopy(model)
    started = time.perf_counter()
    initial_mse = dataset_mse(dataset, inner_train, model)

    stopped_epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        order = inner_train[shuffle_rng.permutation(len(inner_train))]
        n_batches = min(
            cfg.iterations_per_epoch,
            math.ceil(len(inner_train) / cfg.batch_size),
        )
        epoch_sse = 0.0
        epoch_count = 0
        for b in range(n_batches):
            batch_idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            used.update(int(i) for i in batch_idx)
            preds, caches = forward_batch(dataset.features[batch_idx], model)
            loss, d_pred = mse_loss(preds, dataset.targets[batch_idx])
            grads = backward_batch(d_pred, caches, model)
            clip_gradients(grads, cfg.grad_clip_norm)
            opt.step(model, grads)
            epoch_sse += loss * len(batch_idx)
            epoch_count += len(batch_idx)
        opt.advance_epoch()
        train_losses.append(epoch_sse / epoch_count)
        val_loss = dataset_mse(dataset, inner_val, model)
        val_losses.append(val_loss)
        stopped_epoch = epoch
        if val_loss < stopper.best_value:
            best_params = copy.deepcopy(model)
        if stopper.update(epoch, val_loss):
            break

    final_model = best_params if cfg.epochs > 0 else model
    final_mse = dataset_mse(dataset, inner_train, final_model)
    return TrainReport(
        train_losses=train_losses,
        val_losses=val_losses,
        stopped_epoch=stopped_epoch,
        best_epoch=stopper.best_epoch,
        train_mse_initial=initial_mse,
        train_mse_final=final_mse,
        wall_time_s=time.perf_counter() - started,
        params=final_model,
        used_train_indices=np.array(sorted(used), dtype=np.intp),
    )


def evaluate_on_indices(
    dataset: WindowedDataset, indices, model: ModelParams
) -> EvalReport:
    """Metrics over the given windows, in de-standardized target units."""
    preds = _batched_predictions(dataset, indices, model)
    stats = dataset.target_stats()
    return evaluate(
        invert_standardization(preds, stats),
        invert_standardization(dataset.targets[indices], stats),
        units=dataset.target_name,
    )


# ---------------------------------------------------------------------------
# cross-validation, grid search, swarm search
# ---------------------------------------------------------------------------

def cross_validate(
    dataset: WindowedDataset,
    folds: SplitSpec,
    hp: P.HyperparamPoint,
    cfg: TrainConfig,
    rng: SeededRng | None = None,
    train_fn=None,
):
    """Hold out each fold in turn; returns (per-fold reports, aggregates).

    ``train_fn(dataset, fold_split, hp, cfg, rng) -> predictor`` can replace
    the real training (e.g. with a trivial baseline) for diagnostics; the
    predictor maps a window batch to predictions.
    """
    if folds.folds is None or len(folds.folds) < 2:
        raise ValueError("need a SplitSpec with at least 2 folds")
    rng = rng or SeededRng(cfg.seed)
    reports = []
    for k, holdout in enumerate(folds.folds):
        train_idx = np.sort(
            np.concatenate([f for j, f in enumerate(folds.folds) if j != k])
        )
        fold_split = SplitSpec(train=train_idx, test=holdout)
        if train_fn is None:
            result = train(dataset, fold_split, hp, cfg, rng=rng.split(k))
            predictor = lambda w, m=result.params: forward_batch(w, m)[0]
        else:
            predictor = train_fn(dataset, fold_split, hp, cfg, rng.split(k))
        preds = predictor(dataset.features[holdout])
        stats = dataset.target_stats()
        reports.append(
            evaluate(
                invert_standardization(preds, stats),
                invert_standardization(dataset.targets[holdout], stats),
                units=dataset.target_name,
            )
        )
    aggregates = {}
    for metric in ("mae", "mape", "rmse", "mse"):
        values = [getattr(r, metric) for r in reports]
        if any(v is None for v in values):
            aggregates[metric] = {"mean": None, "std": None}
        else:
            arr = np.array(values)
            aggregates[metric] = {"mean": float(arr.mean()), "std": float(arr.std())}
    return reports, aggregates


DEFAULT_GRID = {
    "lr": (1e-3, 1e-4),
    "batch_size": (32, 64),
    "transformer_layers": (4, 6),
}


def grid_search(
    dataset: WindowedDataset,
    split: SplitSpec,
    grid: dict | None = None,
    hp: P.HyperparamPoint | None = None,
    cfg: TrainConfig | None = None,
    rng: SeededRng | None = None,
):
    """Train every lr x batch x layers cell; rows sorted by validation loss.

    The grid learning rate drives the LSTM component; duplicate cells are
    collapsed before any training happens.
    """
    grid = dict(DEFAULT_GRID if grid is None else grid)
    hp = hp or P.HyperparamPoint()
    cfg = cfg or TrainConfig()
    rng = rng or SeededRng(cfg.seed)
    cells = sorted(
        {
            (float(lr), int(batch), int(layers))
            for lr in grid["lr"]
            for batch in grid["batch_size"]
            for layers in grid["transformer_layers"]
        }
    )
    if not cells:
        raise ValueError("empty grid")
    rows = []
    for i, (lr, batch, layers) in enumerate(cells):
        cell_hp = replace(hp, lstm_lr=lr, transformer_layers=layers)
        cell_cfg = replace(cfg, batch_size=batch)
        result = train(dataset, split, cell_hp, cell_cfg, rng=rng.split(i))
        rows.append(
            {
                "lr": lr,
                "batch_size": batch,
                "transformer_layers": layers,
                "val_loss": min(result.val_losses) if result.val_losses else math.inf,
            }
        )
    rows.sort(key=lambda r: r["val_loss"])
    return rows


@dataclass
class SearchBudget:
    """Truncated training used to score one hyperparameter candidate."""

    epochs: int = 5
    patience: int = 2
    fitness_seed: int = 1234


def pso_hyperparameter_search(
    dataset: WindowedDataset,
    split: SplitSpec,
    space: P.SearchSpace,
    swarm_cfg: P.SwarmConfig,
    budget: SearchBudget,
    cfg: TrainConfig | None = None,
):
    """Swarm-search the model configuration space.

    Fitness of a position: decode it, train with the proxy budget on the
    training split's own train/validation carve, and return the best
    validation MSE. Returns (best HyperparamPoint, best fitness, history).
    """
    cfg = cfg or TrainConfig()
    proxy = replace(cfg, epochs=budget.epochs, patience=budget.patience)

    def fitness(x):
        hp = P.decode_position(x, space)
        result = train(
            dataset, split, hp, proxy, rng=SeededRng(budget.fitness_seed)
        )
        value = min(result.val_losses) if result.val_losses else math.inf
        return value if math.isfinite(value) else DIVERGED_FITNESS

    objective = P.Objective(name="proxy-validation-mse", dim=6, fn=fitness)
    run_cfg = replace(swarm_cfg, bounds=space.bounds())
    best_position, best_value, history = P.run(run_cfg, objective)
    return P.decode_position(best_position, space), best_value, history

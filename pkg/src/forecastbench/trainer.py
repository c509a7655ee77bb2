"""Mini-batch training with early stopping, retraining and grid evaluation."""
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import optimizers
from .data import prepare
from .errors import ConfigError, DimensionError, DivergedTrainingError, DomainError, NumericError
from .models import MODEL_NAMES, build_model
from .optimizers import KINDS, OptimizerConfig


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    patience: int = 10
    max_epochs: int = 500
    seed: int = 42
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lstm_activation: str = "relu"
    max_restarts: int = 4

    def __post_init__(self):
        if self.max_restarts < 0:
            raise ConfigError("max_restarts must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")

    def to_dict(self):
        return {"batch_size": self.batch_size, "patience": self.patience,
                "max_epochs": self.max_epochs, "seed": self.seed,
                "optimizer": self.optimizer.to_dict(), "lstm_activation": self.lstm_activation,
                "max_restarts": self.max_restarts, "loss": "mae"}


@dataclass
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    steps: int = 0

    @property
    def epochs(self):
        return len(self.records)

    @property
    def best_val_mae(self):
        return self.records[self.best_epoch - 1].val_mae if self.best_epoch else math.nan


@dataclass
class EvalReport:
    model: str
    optimizer: str
    val_mae: float
    test_mae: float
    epochs: int
    steps: int = 0
    seed: int = 0
    error: str = None
    draw: int = 0           # index of the weight draw that was kept
    history: TrainingHistory = None
    test_predictions: np.ndarray = None
    test_targets: np.ndarray = None
    test_origins: np.ndarray = None
    trained: object = None   # the retrained Model


def mae(pred, actual):
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {actual.shape}")
    if pred.size == 0:
        raise DomainError("MAE of empty vectors")
    return float(np.mean(np.abs(pred - actual)))


def mae_grad(pred, actual):
    """Subgradient of the batch MAE: ``sign(pred - actual) / n`` (0 at ties)."""
    return np.sign(pred - actual) / pred.shape[0]


def evaluate_mae(model, dataset):
    return mae(model.predict(dataset.inputs), dataset.targets)


def _shuffle_rng(seed):
    return np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))


def run_epoch(model, dataset, state, cfg, rng):
    """One shuffled pass with an optimizer step per mini-batch.

    Returns the sample-weighted mean batch MAE and the new optimizer state.
    """
    n = len(dataset)
    order = rng.permutation(n)
    inputs, targets = dataset.inputs, dataset.targets
    total = 0.0
    params = model.get_params()
    for start in range(0, n, cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        x, y = inputs[idx], targets[idx]
        pred, caches = model.forward(x)
        total += float(np.sum(np.abs(pred - y)))
        grads = model.backward(caches, mae_grad(pred, y))
        params, state = optimizers.step(params, grads, state, cfg.optimizer)
        model.set_params(params)
    return total / n, state


def train(model, train_set, val_set, cfg, early_stopping=True, max_epochs=None):
    """Fit ``model`` in place and return ``(model, history)``.

    With ``early_stopping`` the run ends once validation MAE has failed to
    strictly improve for ``cfg.patience`` consecutive epochs, and the
    parameters of the best epoch are restored. Without it exactly
    ``max_epochs`` epochs are run and ``val_set`` may be None.
    """
    if len(train_set) == 0 or (val_set is not None and len(val_set) == 0):
        raise DomainError("training and validation sets must be non-empty")
    if early_stopping and val_set is None:
        raise ConfigError("early stopping needs a validation set")
    epochs = cfg.max_epochs if max_epochs is None else max_epochs
    if epochs < 1:
        raise ConfigError("max_epochs must be >= 1")
    rng = _shuffle_rng(cfg.seed)
    state = optimizers.init_state(model.get_params(), cfg.optimizer)
    history = TrainingHistory()
    best, best_params, wait = math.inf, None, 0
    for epoch in range(1, epochs + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                train_mae, state = run_epoch(model, train_set, state, cfg, rng)
                val_mae = evaluate_mae(model, val_set) if val_set is not None else math.nan
        except NumericError as exc:
            raise DivergedTrainingError(epoch, str(exc)) from exc
        if not math.isfinite(train_mae) or (val_set is not None and not math.isfinite(val_mae)):
            raise DivergedTrainingError(epoch, "non-finite loss")
        history.records.append(EpochRecord(epoch, train_mae, val_mae))
        history.steps = state.t
        if not early_stopping:
            continue
        if val_mae < best:
            best, wait = val_mae, 0
            history.best_epoch = epoch
            best_params = [p.copy() for p in model.get_params()]
        else:
            wait += 1
            if wait >= cfg.patience:
                history.stopped_early = True
                break
    if early_stopping:
        model.set_params(best_params)
    else:
        history.best_epoch = history.epochs
    return model, history


def draw_seed(seed, draw):
    """Seed of the ``draw``-th initialisation; draw 0 is ``seed`` itself."""
    if draw == 0:
        return seed
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, draw]).generate_state(1)[0])


def hidden_is_dead(model, inputs):
    """True when some hidden layer outputs exactly zero for every sample."""
    h = inputs.reshape(len(inputs), -1) if model.spec.layout == "flat" else inputs
    for layer in model.layers[:-1]:
        h, _ = layer.forward(h)
        if layer.kind != "flatten" and not np.any(h):
            return True
    return False


def constant_baseline_mae(dataset):
    """MAE of the best constant predictor (the median target)."""
    return mae(np.full_like(dataset.targets, np.median(dataset.targets)), dataset.targets)


def is_degenerate_fit(model, dataset):
    """A fit that has not halved the constant-predictor training error.

    Such a network is stuck with (nearly) all hidden ReLU units inactive, a
    stationary point that gradient steps cannot leave.
    """
    return evaluate_mae(model, dataset) >= 0.5 * constant_baseline_mae(dataset)


def fit_with_restarts(name, train_set, val_set, cfg):
    """Early-stopped fit that redraws the initial weights after a degenerate outcome.

    Draws whose hidden representation is identically zero on the training
    inputs are skipped before training. After training, a degenerate fit
    (see :func:`is_degenerate_fit`) triggers a new draw, at most
    ``cfg.max_restarts`` times; the last attempt is kept either way.
    Returns ``(model, history, draw)``.
    """
    channels = train_set.inputs.shape[2]
    draw, budget = 0, cfg.max_restarts
    while True:
        model = build_model(name, draw_seed(cfg.seed, draw), cfg.lstm_activation, channels)
        if budget > 0 and hidden_is_dead(model, train_set.inputs):
            draw, budget = draw + 1, budget - 1
            continue
        model, history = train(model, train_set, val_set, cfg)
        if budget == 0 or not is_degenerate_fit(model, train_set):
            return model, history, draw
        draw, budget = draw + 1, budget - 1


def retrain_and_evaluate(name, combined_set, best_epoch, test_set, cfg, val_mae=math.nan,
                         draw=0):
    """Train a freshly initialised model on train+val for ``best_epoch`` epochs, then score it on test.

    ``draw`` selects the same initial weights the early-stopped run kept. The
    test set is read once, after training.
    """
    if best_epoch < 1:
        raise ConfigError("best_epoch must be >= 1")
    model = build_model(name, draw_seed(cfg.seed, draw), cfg.lstm_activation,
                        channels=combined_set.inputs.shape[2])
    _, history = train(model, combined_set, None, cfg, early_stopping=False, max_epochs=best_epoch)
    x, y = test_set.inputs, test_set.targets
    pred = model.predict(x)
    return EvalReport(name, cfg.optimizer.kind, val_mae, mae(pred, y), best_epoch,
                      steps=history.steps, seed=cfg.seed, draw=draw, test_predictions=pred,
                      test_targets=y,
                      test_origins=test_set.origins, trained=model)


def cell_seed(base_seed, model_name, opt_kind):
    ss = np.random.SeedSequence([base_seed & 0xFFFFFFFF, zlib.crc32(model_name.encode()),
                                 zlib.crc32(opt_kind.encode())])
    return int(ss.generate_state(1)[0])


def cell_config(cfg, model_name, opt_kind):
    opt = replace(cfg.optimizer, kind=opt_kind, lr=None) if opt_kind != cfg.optimizer.kind \
        else cfg.optimizer
    return replace(cfg, optimizer=opt, seed=cell_seed(cfg.seed, model_name, opt_kind))


def run_cell(prepared, model_name, cfg):
    """Early-stopped fit, then retrain on train+val and test once."""
    opt = cfg.optimizer.kind
    try:
        _, history, draw = fit_with_restarts(model_name, prepared.train, prepared.val, cfg)
    except DivergedTrainingError as exc:
        return EvalReport(model_name, opt, math.nan, math.nan, exc.epoch, seed=cfg.seed,
                          error=str(exc))
    combined = prepared.train.concat(prepared.val)
    try:
        report = retrain_and_evaluate(model_name, combined, history.best_epoch, prepared.test,
                                      cfg, val_mae=history.best_val_mae, draw=draw)
    except DivergedTrainingError as exc:
        return EvalReport(model_name, opt, history.best_val_mae, math.nan, history.best_epoch,
                          seed=cfg.seed, error=f"retraining: {exc}", draw=draw, history=history)
    report.history = history
    return report


def _grid_worker(args):
    prepared, model_name, cfg = args
    return run_cell(prepared, model_name, cfg)


def run_experiment_grid(series, model_names=MODEL_NAMES, optimizer_kinds=KINDS, cfg=None,
                        parallel=1, use_volume=False):
    """Evaluate every (model, optimizer) cell; reports come back in model-major order."""
    cfg = cfg or TrainConfig()
    for name in model_names:
        if name not in MODEL_NAMES:
            raise ConfigError(f"unknown model {name!r}; valid names: {', '.join(MODEL_NAMES)}")
    for kind in optimizer_kinds:
        if kind not in KINDS:
            raise ConfigError(f"unknown optimizer {kind!r}; expected one of {', '.join(KINDS)}")
    prepared = prepare(series, use_volume=use_volume)
    jobs = [(prepared, m, cell_config(cfg, m, o)) for m in model_names for o in optimizer_kinds]
    if parallel <= 1:
        return [_grid_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_grid_worker, jobs))

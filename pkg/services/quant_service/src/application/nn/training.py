"""
Minibatch ADAM training on MSE with Keras-style early stopping.
"""

import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.application.nn.layers import mse_loss
from src.application.nn.network import Mode, Network
from src.application.nn.optim import AdamOptimizer
from src.application.preprocessing import assemble_input
from src.config.logger_config import log
from src.core.exceptions import DivergenceError, ShapeError
from src.domain.models import InputConfig, TrainConfig
from src.domain.results import EpochRecord, TrainingHistory
from src.domain.spectra import Dataset
from src.infrastructure.workers import parallel_map
from shared.libs.observability.metrics import EPOCHS_TRAINED, TRAINING_LOSS


def resolve_input_config(
    net: Network, dataset: Dataset, input_cfg: Optional[InputConfig] = None
) -> InputConfig:
    """Explicit config, else the one stored with the network, else defaults on the dataset window."""
    if input_cfg is not None:
        return input_cfg
    if net.input_config is not None:
        return net.input_config
    return InputConfig(window=dataset.window)


def dataset_arrays(
    dataset: Dataset, input_cfg: InputConfig, metabolites: Tuple[str, ...]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Network inputs (N, rows, cols) and label matrix (N, L) of a dataset.

    Raises:
        ShapeError: If the dataset is empty or lacks one of `metabolites`.
    """
    if len(dataset) == 0:
        raise ShapeError("Dataset is empty")
    unknown = [m for m in metabolites if m not in dataset.metabolites]
    if unknown:
        raise ShapeError(f"Dataset has no labels for {unknown}")
    inputs = parallel_map(lambda s: assemble_input(s, input_cfg).data, dataset.samples)
    labels = np.stack([s.label_vector(metabolites) for s in dataset.samples])
    return np.stack(inputs), labels


def _check_shape(net: Network, x: np.ndarray, name: str) -> None:
    expected = net.input_shape[1:]
    if x.shape[1:] != expected:
        raise ShapeError(f"{name} inputs have shape {x.shape[1:]}, network expects {expected}")


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, order.size, batch_size)]
    if len(batches) > 1 and batches[-1].size == 1:
        # batch norm cannot normalise a single sample
        batches.pop()
    return batches


def _train_epoch(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    optimizer: AdamOptimizer,
    batch_size: int,
    shuffle_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
) -> float:
    net.set_mode(Mode.TRAIN)
    total, seen = 0.0, 0
    for index in _batches(shuffle_rng.permutation(x.shape[0]), batch_size):
        out = net.forward(x[index], dropout_rng)
        loss, grad = mse_loss(out, y[index])
        if not np.isfinite(loss):
            return float("nan")
        net.backward(grad)
        params, grads = [], []
        for _, _, param, param_grad in net.trainable():
            params.append(param)
            grads.append(param_grad)
        optimizer.step(params, grads)
        total += loss * index.size
        seen += index.size
    return total / max(seen, 1)


def train(
    net: Network,
    train_ds: Dataset,
    val_ds: Dataset,
    cfg: TrainConfig,
    input_cfg: Optional[InputConfig] = None,
) -> Tuple[Network, TrainingHistory]:
    """
    Train `net` in place and return it with its history.

    Each epoch shuffles the training set with a generator seeded from
    cfg.seed, then scores the validation set in inference mode. An epoch
    improves when its validation loss drops below best - min_delta; training
    stops after `early_stop_patience` epochs without improvement and, with
    `restore_best`, reloads the weights and batch-norm statistics of the
    best epoch.

    Raises:
        ShapeError: If dataset inputs do not match the network input shape.
        DivergenceError: If a loss becomes NaN; carries the history so far.
    """
    input_cfg = resolve_input_config(net, train_ds, input_cfg)
    x_train, y_train = dataset_arrays(train_ds, input_cfg, net.metabolites)
    x_val, y_val = dataset_arrays(val_ds, input_cfg, net.metabolites)
    _check_shape(net, x_train, "Training")
    _check_shape(net, x_val, "Validation")
    net.input_config = input_cfg

    shuffle_seed, dropout_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.Generator(np.random.Philox(shuffle_seed))
    dropout_rng = np.random.Generator(np.random.Philox(dropout_seed))
    optimizer = AdamOptimizer(cfg)

    history = TrainingHistory()
    best_loss = np.inf
    best_state: Optional[Dict[str, np.ndarray]] = None
    wait = 0

    log.info(
        "Training started",
        train=len(train_ds),
        val=len(val_ds),
        batch=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        parameters=net.parameter_count(),
    )
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            started = time.perf_counter()
            train_loss = _train_epoch(
                net, x_train, y_train, optimizer, cfg.batch_size, shuffle_rng, dropout_rng
            )
            predicted = net.predict_batch(x_val)
            diff = predicted - y_val
            val_loss = float(np.mean(diff * diff))
            val_error = float(np.mean(np.abs(diff)))

            if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
                raise DivergenceError(
                    f"Loss became NaN in epoch {epoch}", history=history
                )

            history.epochs.append(
                EpochRecord(
                    epoch=epoch,
                    train_loss=train_loss,
                    val_loss=val_loss,
                    val_error=val_error,
                    duration_s=time.perf_counter() - started,
                )
            )
            EPOCHS_TRAINED.inc()
            TRAINING_LOSS.labels(phase="train").set(train_loss)
            TRAINING_LOSS.labels(phase="val").set(val_loss)
            log.info(
                "Epoch complete",
                epoch=epoch,
                train_loss=round(train_loss, 8),
                val_loss=round(val_loss, 8),
                val_error=round(val_error, 6),
            )

            if val_loss < best_loss - cfg.early_stop_min_delta:
                best_loss = val_loss
                history.best_epoch = epoch
                best_state = net.state_dict()
                wait = 0
            else:
                wait += 1
                if wait >= cfg.early_stop_patience:
                    history.stopped_early = True
                    log.info("Early stopping", epoch=epoch, best_epoch=history.best_epoch)
                    break
    finally:
        net.set_mode(Mode.INFERENCE)

    if cfg.restore_best and best_state is not None:
        net.load_state_dict(best_state)
    return net, history

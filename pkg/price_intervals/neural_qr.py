"""Two-headed quantile MLP trained with PyTorch Lightning.

The network maps ``p`` scaled lags to raw (lower, upper) outputs. Training
uses either the combined pinball loss at two quantile levels or the smoothed
quality-driven (QD) loss, Adam, an explicit L2 penalty on the weights and
early stopping on a chronological validation split.
"""
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import copy
import struct

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

import pytorch_lightning as pl
from pytorch_lightning import Callback
from pytorch_lightning.callbacks import EarlyStopping

from price_intervals import _logger as log
from price_intervals.data import LagMatrix, MinMaxScaler
from price_intervals.errors import DataFormatError, TrainingDivergedError

LOSS_KINDS = ("pb", "qd")
MODEL_MAGIC = b"PIQR"
MODEL_VERSION = 1
DTYPE = torch.float64


def _check_range(name: str, value, lo, hi):
    if not lo <= value <= hi:
        raise ValueError(f"{name} must lie in [{lo}, {hi}], got {value}.")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    Ranges follow the tuning grid (quantile levels for PB, Lagrangian up to 1
    and softening for QD), 1-3 hidden layers of 4-128 neurons, 1-12 lags, batch
    sizes 8-64, at most 1000 epochs and learning rate in [1e-5, 1e-2].
    """
    loss: str = "pb"
    tau_low: float = 0.05
    tau_high: float = 0.95
    alpha: float = 0.1
    lagrangian: float = 0.1
    softening: float = 100.0
    hidden_layers: int = 2
    neurons: int = 32
    lags: int = 5
    learning_rate: float = 1e-3
    l2: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 50
    seed: int = 0
    train_ratio: float = 0.9

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, "
                             f"got {self.loss!r}.")
        _check_range("tau_low", self.tau_low, 0.01, 0.15)
        _check_range("tau_high", self.tau_high, 0.8, 0.99)
        _check_range("alpha", self.alpha, 1e-6, 1 - 1e-6)
        # lagrangian = 0 drops the coverage penalty.
        _check_range("lagrangian", self.lagrangian, 0.0, 1.0)
        _check_range("softening", self.softening, 50.0, 200.0)
        _check_range("hidden_layers", self.hidden_layers, 1, 3)
        _check_range("neurons", self.neurons, 4, 128)
        _check_range("lags", self.lags, 1, 12)
        _check_range("learning_rate", self.learning_rate, 1e-5, 1e-2)
        # 0 switches the penalty off.
        _check_range("l2", self.l2, 0.0, 1e-2)
        _check_range("batch_size", self.batch_size, 8, 64)
        _check_range("max_epochs", self.max_epochs, 1, 1000)
        _check_range("patience", self.patience, 1, 1000)

    @property
    def widths(self) -> List[int]:
        return [self.lags] + [self.neurons] * self.hidden_layers + [2]


def pinball_loss(q_hat: torch.Tensor, y: torch.Tensor,
                 tau: float) -> torch.Tensor:
    """Batch-mean pinball loss; the subgradient at ``q_hat == y`` is the one
    of the ``q_hat >= y`` branch."""
    return torch.where(q_hat >= y, (1.0 - tau) * (q_hat - y),
                       tau * (y - q_hat)).mean()


def soft_qd_loss(lower: torch.Tensor, upper: torch.Tensor, y: torch.Tensor,
                 alpha: float, lam: float, s: float) -> torch.Tensor:
    k = torch.sigmoid(s * (y - lower)) * torch.sigmoid(s * (upper - y))
    n = y.shape[0]
    total = k.sum()
    captured = torch.where(total > 0, ((upper - lower) * k).sum() / total,
                           torch.zeros_like(total))
    shortfall = torch.clamp((1.0 - alpha) - k.mean(), min=0.0)
    return captured + lam * n / (alpha * (1.0 - alpha)) * shortfall**2


def interval_loss(outputs: torch.Tensor, y: torch.Tensor,
                  config: TrainConfig) -> torch.Tensor:
    """Data term of the training objective on raw two-head outputs."""
    lower, upper = outputs[:, 0], outputs[:, 1]
    if config.loss == "pb":
        return 0.5 * (pinball_loss(lower, y, config.tau_low) +
                      pinball_loss(upper, y, config.tau_high))
    return soft_qd_loss(lower, upper, y, config.alpha, config.lagrangian,
                        config.softening)


class QuantileMLP(pl.LightningModule):
    """Affine + ReLU hidden layers and an identity output layer with two
    nodes.

    Args:
        widths (list): Layer widths, input first and 2 last.
        config (TrainConfig): Loss and optimizer settings; only needed for
            training.
        seed (int): Seed of the He-uniform weight initialization.
    """

    def __init__(self,
                 widths: Sequence[int],
                 config: Optional[TrainConfig] = None,
                 seed: int = 0):
        super().__init__()
        widths = [int(w) for w in widths]
        if len(widths) < 2 or widths[-1] != 2 or min(widths) < 1:
            raise ValueError(f"Invalid layer widths {widths}; the last layer "
                             "needs exactly 2 outputs.")
        self.widths = widths
        self.config = config or TrainConfig(lags=min(max(widths[0], 1), 12))
        self.layers = torch.nn.ModuleList([
            torch.nn.Linear(n_in, n_out, dtype=DTYPE)
            for n_in, n_out in zip(widths[:-1], widths[1:])
        ])
        self.val_history: List[float] = []
        self._init_weights(seed)

    def _init_weights(self, seed: int):
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for layer in self.layers:
                bound = float(np.sqrt(6.0 / layer.in_features))
                layer.weight.copy_(
                    (torch.rand(
                        layer.weight.shape, generator=generator, dtype=DTYPE)
                     * 2.0 - 1.0) * bound)
                layer.bias.zero_()

    def forward(self, x):
        for layer in self.layers[:-1]:
            x = torch.relu(layer(x))
        return self.layers[-1](x)

    def l2_penalty(self) -> torch.Tensor:
        return self.config.l2 * sum(
            torch.sum(layer.weight**2) for layer in self.layers)

    def objective(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return interval_loss(self(x), y, self.config) + self.l2_penalty()

    def training_step(self, batch, batch_idx):
        x, y = batch
        loss = self.objective(x, y)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(self.current_epoch)
        return loss

    def validation_step(self, batch, batch_idx):
        x, y = batch
        loss = interval_loss(self(x), y, self.config)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(self.current_epoch,
                                        "non-finite validation loss")
        self.log("val_loss", loss, prog_bar=False)
        # One validation batch per epoch.
        self.val_history.append(float(loss))
        return loss

    def configure_optimizers(self):
        return torch.optim.Adam(
            self.parameters(),
            lr=self.config.learning_rate,
            betas=(0.9, 0.999),
            eps=1e-8)


class BestStateCallback(Callback):
    """Keeps a copy of the weights of the best validation epoch."""

    def __init__(self):
        self.best_loss = float("inf")
        self.best_epoch = -1
        self.best_state = None

    def on_validation_end(self, trainer, pl_module):
        loss = pl_module.val_history[-1]
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = trainer.current_epoch
            self.best_state = copy.deepcopy(pl_module.state_dict())


@dataclass
class TrainResult:
    model: QuantileMLP
    val_history: List[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    epochs_run: int = 0


def _tensor(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=float), dtype=DTYPE)


def forward(model: QuantileMLP, x) -> np.ndarray:
    """Raw (lower, upper) outputs for one feature vector or a batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.widths[0], ) or x.ndim > 2:
        raise ValueError(f"Expected {model.widths[0]} features per row, got "
                         f"an array of shape {x.shape}.")
    with torch.no_grad():
        return model(_tensor(x)).numpy()


def backward(model: QuantileMLP, features, targets,
             config: Optional[TrainConfig] = None) -> Dict[str, np.ndarray]:
    """Exact gradients of the batch objective (loss plus L2 penalty).

    Returns a mapping from parameter name (as in ``named_parameters``) to
    its gradient.
    """
    if config is not None:
        model.config = config
    x, y = _tensor(features), _tensor(targets).reshape(-1)
    if y.numel() == 0:
        raise ValueError("backward needs a non-empty batch.")
    model.zero_grad()
    model.objective(x, y).backward()
    grads = {
        name: param.grad.detach().numpy().copy()
        for name, param in model.named_parameters()
    }
    model.zero_grad()
    return grads


def train(dataset: LagMatrix, config: TrainConfig) -> TrainResult:
    """Fits a fresh network on a lag matrix already scaled to [0, 1].

    The first ``config.train_ratio`` of the rows train the network, the rest
    are the validation set, evaluated in one batch after every epoch.
    Training stops after ``config.patience`` epochs without improvement and
    the weights of the best validation epoch are returned.

    Raises:
        TrainingDivergedError: The loss became non-finite.
    """
    if dataset.p != config.lags:
        raise ValueError(f"Lag matrix has {dataset.p} lags but the config "
                         f"asks for {config.lags}.")
    train_rows, val_rows = dataset.split(config.train_ratio)
    pl.seed_everything(config.seed, workers=True)

    train_loader = DataLoader(
        TensorDataset(
            _tensor(train_rows.features), _tensor(train_rows.targets)),
        batch_size=config.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(config.seed))
    val_loader = DataLoader(
        TensorDataset(_tensor(val_rows.features), _tensor(val_rows.targets)),
        batch_size=len(val_rows))

    model = QuantileMLP(config.widths, config, seed=config.seed)
    best = BestStateCallback()
    trainer = pl.Trainer(
        accelerator="cpu",
        devices=1,
        max_epochs=config.max_epochs,
        deterministic=True,
        logger=False,
        enable_checkpointing=False,
        enable_progress_bar=False,
        enable_model_summary=False,
        num_sanity_val_steps=0,
        precision="64-true",
        callbacks=[
            EarlyStopping(
                monitor="val_loss", patience=config.patience, mode="min"),
            best
        ])
    trainer.fit(model, train_loader, val_loader)

    if best.best_state is None:
        raise TrainingDivergedError(trainer.current_epoch,
                                    "no finite validation loss")
    model.load_state_dict(best.best_state)
    model.eval()
    log.debug(f"trained {config.widths} for {len(model.val_history)} "
              f"epochs, best epoch {best.best_epoch} with val loss "
              f"{best.best_loss:.6f}")
    return TrainResult(
        model=model,
        val_history=list(model.val_history),
        best_epoch=best.best_epoch,
        best_val_loss=best.best_loss,
        epochs_run=len(model.val_history))


class Interval(NamedTuple):
    lower: float
    upper: float


def predict_interval(model: QuantileMLP, scaler: MinMaxScaler,
                     lags: Sequence[float]) -> Interval:
    """Interval in original units from the ``p`` most recent values, most
    recent first.

    Heads are ordered before inverse scaling, so crossed raw outputs still
    give ``lower <= upper``.
    """
    lags = np.asarray(lags, dtype=float)
    if lags.shape != (model.widths[0], ):
        raise ValueError(f"Expected {model.widths[0]} lags, got "
                         f"{lags.size}.")
    raw = forward(model, scaler.apply(lags))
    lower, upper = scaler.invert(np.sort(raw))
    return Interval(lower=float(lower), upper=float(upper))


def save_model(model: QuantileMLP, path: str):
    """Writes the network as a flat little-endian binary record.

    Layout: magic ``PIQR``, uint32 version, uint32 layer count ``L``,
    ``L + 1`` uint32 widths, then per layer the weight matrix (out x in,
    row-major) and the bias vector as float64.
    """
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<II", MODEL_VERSION, len(model.widths) - 1))
        f.write(np.asarray(model.widths, dtype="<u4").tobytes())
        for layer in model.layers:
            f.write(layer.weight.detach().numpy().astype("<f8").tobytes())
            f.write(layer.bias.detach().numpy().astype("<f8").tobytes())


def load_model(path: str,
               config: Optional[TrainConfig] = None) -> QuantileMLP:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MODEL_MAGIC:
        raise DataFormatError(f"{path} is not a quantile network record")
    version, n_layers = struct.unpack_from("<II", blob, 4)
    if version != MODEL_VERSION:
        raise DataFormatError(f"unsupported network record version {version}"
                              f" in {path}, expected {MODEL_VERSION}")
    offset = 12
    widths = np.frombuffer(blob, dtype="<u4", count=n_layers + 1,
                           offset=offset).tolist()
    offset += 4 * (n_layers + 1)
    model = QuantileMLP(widths, config)
    with torch.no_grad():
        for layer, n_in, n_out in zip(model.layers, widths[:-1], widths[1:]):
            for param, count in ((layer.weight, n_in * n_out),
                                 (layer.bias, n_out)):
                values = np.frombuffer(
                    blob, dtype="<f8", count=count, offset=offset)
                param.copy_(torch.from_numpy(values.copy()).view(
                    param.shape))
                offset += 8 * count
    if offset != len(blob):
        raise DataFormatError(f"{len(blob) - offset} trailing bytes in {path}")
    model.eval()
    return model

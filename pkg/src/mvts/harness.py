"""Training orchestration: pretraining, fine-tuning, checkpoints, sweeps.

Checkpoints store parameters as little-endian float32 in a named table; a
model rebuilt from a checkpoint therefore starts from the float32 values, and
saving/reloading reproduces its eval forwards bitwise. One seeded generator
per run drives sampling, initialization, batching, partitions, and dropout,
so a (config, seed) pair fixes the whole trajectory.
"""

from __future__ import annotations

import json
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import heads as heads_mod
from .configio import from_dict, to_dict
from .data import WindowedDataset, sample_balanced, standardize_dataset
from .encoder import (
    LAYER_PLAN,
    ChannelRepresentation,
    ConvBlockParams,
    EncoderParams,
    encode_channels,
    init_encoder_params,
)
from .errors import ConfigError, DataError, FormatError, MvtsError
from .heads import HeadParams, balanced_accuracy, classify_logits, cross_entropy, init_head_params
from .losses import LOSS_NAMES, LossConfig, compute_loss
from .mpnn import (
    MessageParams,
    MpnnParams,
    ReadoutParams,
    aggregate,
    init_mpnn_params,
)
from .optim import adamw_step, init_adamw
from .tensor import Tensor, zero_grads
from .views import PER_CHANNEL, STRATEGIES, TWO_GROUP, per_channel_views, random_partition, two_group_views

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1

PRETRAIN_ALIASES = {"lambda": "lam"}

MODE_FULL = "full"
MODE_PROBE = "probe"
HEAD_MPNN = "mpnn"
HEAD_COMBINER = "linear_combiner"


@dataclass
class PretrainConfig:
    strategy: str
    loss: str
    tau: float = 0.5
    lam: float = 1.0
    hierarchy_enabled: bool = True
    epochs: int = 10
    lr: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 64
    dropout: float = 0.1
    seed: int = 0
    mpnn_rounds: int = 1

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.loss not in LOSS_NAMES:
            raise ConfigError(f"unknown loss {self.loss!r}, expected one of {LOSS_NAMES}")
        self.loss_config().validate()
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.mpnn_rounds < 1:
            raise ConfigError(f"mpnn_rounds must be >= 1, got {self.mpnn_rounds}")

    def loss_config(self) -> LossConfig:
        return LossConfig(tau=self.tau, lam=self.lam, hierarchy_enabled=self.hierarchy_enabled)

    @classmethod
    def from_dict(cls, data) -> "PretrainConfig":
        cfg = from_dict(cls, data, aliases=PRETRAIN_ALIASES)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return to_dict(self, aliases=PRETRAIN_ALIASES)


@dataclass
class FinetuneConfig:
    samples_per_class: int
    mode: str = MODE_FULL
    head: str = HEAD_MPNN
    lr: float = 5e-4
    weight_decay: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 40
    patience: int = 7
    seed: int = 0
    from_scratch: bool = False

    def validate(self) -> None:
        if self.mode not in (MODE_FULL, MODE_PROBE):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.head not in (HEAD_MPNN, HEAD_COMBINER):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.samples_per_class < 1:
            raise ConfigError(f"samples_per_class must be >= 1, got {self.samples_per_class}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 1 <= self.patience < self.max_epochs:
            raise ConfigError(
                f"patience must satisfy 1 <= patience < max_epochs, got "
                f"{self.patience} vs {self.max_epochs}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    @classmethod
    def from_dict(cls, data) -> "FinetuneConfig":
        cfg = from_dict(cls, data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return to_dict(self)


# ---------------------------------------------------------------------------
# Checkpoints.


@dataclass
class ModelCheckpoint:
    params: dict[str, np.ndarray]  # name -> float32 array
    config: dict
    version: int = CKPT_VERSION

    @property
    def seed(self):
        return self.config.get("seed")


def build_checkpoint(
    encoder: EncoderParams, mpnn: MpnnParams | None, config: dict
) -> ModelCheckpoint:
    table: dict[str, np.ndarray] = {}
    for name, tensor in encoder.named():
        table[name] = tensor.data.astype("<f4")
    if mpnn is not None:
        for name, tensor in mpnn.named():
            table[name] = tensor.data.astype("<f4")
    return ModelCheckpoint(params=table, config=dict(config))


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    parts = [CKPT_MAGIC, struct.pack("<II", ckpt.version, len(ckpt.params))]
    for name, arr in ckpt.params.items():
        raw = name.encode("utf-8")
        if len(raw) > 65535:
            raise FormatError(f"parameter name {name!r} too long")
        a = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    blob = json.dumps(ckpt.config, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _need(buf: bytes, offset: int, count: int, what: str) -> None:
    if offset + count > len(buf):
        raise FormatError(
            f"truncated checkpoint: {what} needs {count} bytes at byte {offset}"
        )


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    _need(buf, 0, 4, "magic")
    if buf[:4] != CKPT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r} at byte 0, expected {CKPT_MAGIC!r}")
    off = 4
    _need(buf, off, 8, "header")
    version, count = struct.unpack_from("<II", buf, off)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at byte {off}")
    off += 8
    params: dict[str, np.ndarray] = {}
    for i in range(count):
        _need(buf, off, 2, f"parameter {i} name length")
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        _need(buf, off, nlen, f"parameter {i} name")
        name = buf[off : off + nlen].decode("utf-8")
        off += nlen
        _need(buf, off, 1, f"parameter {name} rank")
        (rank,) = struct.unpack_from("<B", buf, off)
        off += 1
        _need(buf, off, 4 * rank, f"parameter {name} dims")
        dims = struct.unpack_from(f"<{rank}I", buf, off)
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        _need(buf, off, 4 * size, f"parameter {name} data")
        arr = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(dims).copy()
        off += 4 * size
        if name in params:
            raise FormatError(f"duplicate parameter name {name!r} at byte {off}")
        params[name] = arr
    _need(buf, off, 4, "config length")
    (clen,) = struct.unpack_from("<I", buf, off)
    off += 4
    _need(buf, off, clen, "config echo")
    config = json.loads(buf[off : off + clen].decode("utf-8"))
    off += clen
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} unexpected trailing bytes at byte {off}")
    return ModelCheckpoint(params=params, config=config, version=version)


def _param(table: dict[str, np.ndarray], name: str, shape: tuple[int, ...]) -> Tensor:
    if name not in table:
        raise ConfigError(f"checkpoint is missing parameter {name!r}")
    arr = table[name]
    if tuple(arr.shape) != shape:
        raise ConfigError(f"checkpoint parameter {name!r} has shape {arr.shape}, expected {shape}")
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def encoder_from_checkpoint(ckpt: ModelCheckpoint, group_divisor: int = 2) -> EncoderParams:
    blocks = []
    for i, (c_in, c_out, k, stride, padding) in enumerate(LAYER_PLAN):
        prefix = f"encoder.block{i}"
        blocks.append(
            ConvBlockParams(
                conv_w=_param(ckpt.params, f"{prefix}.conv_w", (c_out, c_in, k)),
                conv_b=_param(ckpt.params, f"{prefix}.conv_b", (c_out, 1)),
                gn_scale=_param(ckpt.params, f"{prefix}.gn_scale", (c_out,)),
                gn_shift=_param(ckpt.params, f"{prefix}.gn_shift", (c_out,)),
                stride=stride,
                padding=padding,
                num_groups=c_out // group_divisor,
            )
        )
    rate = float(ckpt.config.get("dropout", 0.1))
    return EncoderParams(blocks=blocks, dropout_rate=rate)


def checkpoint_has_mpnn(ckpt: ModelCheckpoint) -> bool:
    return any(name.startswith("mpnn.") for name in ckpt.params)


def mpnn_from_checkpoint(ckpt: ModelCheckpoint) -> MpnnParams:
    rounds = 0
    while f"mpnn.message{rounds}.w" in ckpt.params:
        rounds += 1
    if rounds == 0:
        raise ConfigError("checkpoint holds no message-passing parameters")
    dim = 64
    messages = [
        MessageParams(
            weight=_param(ckpt.params, f"mpnn.message{k}.w", (2 * dim, dim)),
            bias=_param(ckpt.params, f"mpnn.message{k}.b", (dim,)),
        )
        for k in range(rounds)
    ]
    readout = ReadoutParams(
        w1=_param(ckpt.params, "mpnn.readout.w1", (dim, dim)),
        b1=_param(ckpt.params, "mpnn.readout.b1", (dim,)),
        w2=_param(ckpt.params, "mpnn.readout.w2", (dim, dim)),
        b2=_param(ckpt.params, "mpnn.readout.b2", (dim,)),
    )
    rate = float(ckpt.config.get("dropout", 0.1))
    return MpnnParams(messages=messages, readout=readout, dropout_rate=rate)


# ---------------------------------------------------------------------------
# Pretraining.


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    wall_seconds: float


@dataclass
class PretrainResult:
    checkpoint: ModelCheckpoint
    history: list[EpochLog]
    step_losses: list[float]


def _batches(n: int, batch_size: int, order: np.ndarray | None = None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield idx[start : start + batch_size]


def pretrain(
    cfg: PretrainConfig,
    train_ds: WindowedDataset,
    val_ds: WindowedDataset,
    on_step=None,
) -> PretrainResult:
    """Contrastive pretraining on standardized windows; no early stopping."""
    cfg.validate()
    c = train_ds.num_channels
    if val_ds.num_channels != c:
        raise ConfigError(
            f"train/val channel counts differ: {c} vs {val_ds.num_channels}"
        )
    if cfg.strategy == TWO_GROUP and c < 4:
        raise ConfigError(f"two_group strategy needs C >= 4 channels, dataset has {c}")
    if cfg.strategy == PER_CHANNEL and c < 2:
        raise ConfigError(f"per_channel strategy needs C >= 2 channels, dataset has {c}")

    x_train = standardize_dataset(train_ds)
    x_val = standardize_dataset(val_ds)
    loss_cfg = cfg.loss_config()

    rng = np.random.default_rng(cfg.seed)
    encoder = init_encoder_params(rng, dropout_rate=cfg.dropout)
    mpnn = None
    if cfg.strategy == TWO_GROUP:
        mpnn = init_mpnn_params(rng, rounds=cfg.mpnn_rounds, dropout_rate=cfg.dropout)
    params = encoder.tensors() + (mpnn.tensors() if mpnn is not None else [])
    opt = init_adamw(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    def batch_loss(x_batch: np.ndarray, train: bool, gen: np.random.Generator) -> Tensor:
        x = Tensor(x_batch)
        reps = encode_channels(x, encoder, train=train, rng=gen)
        if cfg.strategy == PER_CHANNEL:
            views = per_channel_views(reps)
        else:
            partition = random_partition(c, gen)
            views = two_group_views(reps, partition, mpnn, train=train, rng=gen)
        return compute_loss(cfg.loss, views, loss_cfg)

    step_losses: list[float] = []
    history: list[EpochLog] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(train_ds.num_windows)
        epoch_losses = []
        for idx in _batches(train_ds.num_windows, cfg.batch_size, order):
            loss = batch_loss(x_train[idx], train=True, gen=rng)
            value = loss.item()
            if not np.isfinite(value):
                raise MvtsError(f"non-finite pretraining loss at step {step}")
            zero_grads(params)
            loss.backward()
            adamw_step(params, [p.grad for p in params], opt)
            step_losses.append(value)
            epoch_losses.append(value)
            if on_step is not None:
                on_step(step, value)
            step += 1
        # Validation uses its own stream so its draws never touch training.
        val_rng = np.random.default_rng([cfg.seed, epoch, 0x5A])
        val_losses = []
        for idx in _batches(val_ds.num_windows, cfg.batch_size):
            val_losses.append(batch_loss(x_val[idx], train=False, gen=val_rng).item())
        history.append(
            EpochLog(
                epoch=epoch,
                train_loss=float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                val_loss=float(np.mean(val_losses)) if val_losses else float("nan"),
                wall_seconds=time.perf_counter() - t0,
            )
        )
    ckpt = build_checkpoint(encoder, mpnn, cfg.to_dict())
    return PretrainResult(checkpoint=ckpt, history=history, step_losses=step_losses)


# ---------------------------------------------------------------------------
# Fine-tuning.


@dataclass
class RunRecord:
    model: str  # pretrained | scratch
    mode: str
    loss: str  # pretraining loss name, or "none"
    strategy: str  # pretraining strategy, or "none"
    n_per_class: int
    seed: int
    balanced_accuracy: float


@dataclass
class FinetuneResult:
    record: RunRecord
    history: list[EpochLog]
    best_epoch: int
    epochs_ran: int
    encoder: EncoderParams
    mpnn: MpnnParams | None
    head: HeadParams


def finetune(
    cfg: FinetuneConfig,
    ckpt: ModelCheckpoint | None,
    train_ds: WindowedDataset,
    val_ds: WindowedDataset,
    test_ds: WindowedDataset,
    val_loss_schedule=None,
) -> FinetuneResult:
    """Supervised fine-tuning with early stopping and best-epoch restore.

    `val_loss_schedule` substitutes the computed per-epoch validation loss
    with scripted values (index = epoch-1); training still runs normally.
    Channel count may differ from pretraining — nothing here depends on it.
    """
    cfg.validate()
    if cfg.from_scratch and ckpt is not None:
        raise ConfigError("from_scratch was requested but a checkpoint was also given")
    if not cfg.from_scratch and ckpt is None:
        raise ConfigError("need a checkpoint unless from_scratch is set")
    for name, ds in (("train", train_ds), ("val", val_ds), ("test", test_ds)):
        if ds.labels is None:
            raise DataError(f"{name} dataset has no labels")
    num_classes = train_ds.num_classes if train_ds.num_classes > 0 else int(train_ds.labels.max()) + 1
    c_d = train_ds.num_channels

    rng = np.random.default_rng(cfg.seed)
    train_sub = sample_balanced(train_ds, cfg.samples_per_class, rng)
    val_sub = sample_balanced(val_ds, cfg.samples_per_class, rng)

    if cfg.from_scratch:
        encoder = init_encoder_params(rng, dropout_rate=0.1)
        mpnn = init_mpnn_params(rng, rounds=1, dropout_rate=0.1) if cfg.head == HEAD_MPNN else None
        pre_loss, pre_strategy = "none", "none"
    else:
        encoder = encoder_from_checkpoint(ckpt)
        if cfg.head == HEAD_MPNN:
            if checkpoint_has_mpnn(ckpt):
                mpnn = mpnn_from_checkpoint(ckpt)
            else:
                mpnn = init_mpnn_params(
                    rng, rounds=1, dropout_rate=float(ckpt.config.get("dropout", 0.1))
                )
        else:
            mpnn = None
        pre_loss = str(ckpt.config.get("loss", "unknown"))
        pre_strategy = str(ckpt.config.get("strategy", "unknown"))
    head = init_head_params(
        rng, num_classes, num_channels=c_d if cfg.head == HEAD_COMBINER else None
    )

    x_train, y_train = standardize_dataset(train_sub), train_sub.labels
    x_val, y_val = standardize_dataset(val_sub), val_sub.labels
    x_test, y_test = standardize_dataset(test_ds), test_ds.labels

    probe = cfg.mode == MODE_PROBE
    trainables = list(head.tensors())
    if not probe:
        trainables = encoder.tensors() + (mpnn.tensors() if mpnn is not None else []) + trainables
    opt = init_adamw(trainables, lr=cfg.lr, weight_decay=cfg.weight_decay)

    def backbone(x_batch: np.ndarray, train: bool, gen) -> Tensor | list[Tensor]:
        """Frozen-in-probe part: encoder (+ MPNN on the mpnn head)."""
        x = Tensor(x_batch)
        reps = encode_channels(x, encoder, train=train, rng=gen)
        if cfg.head == HEAD_MPNN:
            return aggregate(reps, mpnn, train=train, rng=gen)
        return [r.values for r in reps]

    def head_logits(feat, train: bool) -> Tensor:
        if cfg.head == HEAD_MPNN:
            z = feat
        else:
            z = heads_mod.combine_linear(
                [ChannelRepresentation(v, i) for i, v in enumerate(feat)], head.combiner
            )
        return classify_logits(z, head)

    if probe:
        # Frozen features never change; compute once in eval mode.
        def cache(x_all: np.ndarray):
            out = None
            for idx in _batches(x_all.shape[0], cfg.batch_size):
                feat = backbone(x_all[idx], train=False, gen=None)
                arrs = [feat.data] if cfg.head == HEAD_MPNN else [v.data for v in feat]
                if out is None:
                    out = [[a] for a in arrs]
                else:
                    for slot, a in zip(out, arrs):
                        slot.append(a)
            return [np.concatenate(slot, axis=0) for slot in out]

        cache_train = cache(x_train)
        cache_val = cache(x_val)
        cache_test = cache(x_test)

        def logits_for(cached, idx, train: bool, gen) -> Tensor:
            feats = [Tensor(a[idx]) for a in cached]
            feat = feats[0] if cfg.head == HEAD_MPNN else feats
            return head_logits(feat, train)

        def train_logits(idx, gen):
            return logits_for(cache_train, idx, True, gen)

        def eval_logits(split, idx):
            cached = {"val": cache_val, "test": cache_test}[split]
            return logits_for(cached, idx, False, None)
    else:

        def train_logits(idx, gen):
            return head_logits(backbone(x_train[idx], train=True, gen=gen), True)

        def eval_logits(split, idx):
            x_all = {"val": x_val, "test": x_test}[split]
            return head_logits(backbone(x_all[idx], train=False, gen=None), False)

    n_train = x_train.shape[0]
    history: list[EpochLog] = []
    best_val = np.inf
    best_epoch = 0
    best_state: list[np.ndarray] = []
    since_best = 0
    epochs_ran = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n_train)
        epoch_losses = []
        for idx in _batches(n_train, cfg.batch_size, order):
            logits = train_logits(idx, rng)
            loss = cross_entropy(logits, y_train[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise MvtsError(f"non-finite fine-tuning loss in epoch {epoch}")
            zero_grads(trainables)
            loss.backward()
            adamw_step(trainables, [p.grad for p in trainables], opt)
            epoch_losses.append(value)
        if val_loss_schedule is not None:
            val_loss = float(val_loss_schedule[min(epoch - 1, len(val_loss_schedule) - 1)])
        else:
            total, count = 0.0, 0
            for idx in _batches(x_val.shape[0], cfg.batch_size):
                loss = cross_entropy(eval_logits("val", idx), y_val[idx])
                total += loss.item() * len(idx)
                count += len(idx)
            val_loss = total / count
        history.append(
            EpochLog(
                epoch=epoch,
                train_loss=float(np.mean(epoch_losses)),
                val_loss=val_loss,
                wall_seconds=time.perf_counter() - t0,
            )
        )
        epochs_ran = epoch
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = [t.data.copy() for t in trainables]
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    for tensor, saved in zip(trainables, best_state):
        tensor.data = saved.copy()

    preds = []
    for idx in _batches(x_test.shape[0], cfg.batch_size):
        logits = eval_logits("test", idx)
        preds.append(np.argmax(logits.data, axis=1))
    accuracy = balanced_accuracy(np.concatenate(preds), y_test, num_classes)

    record = RunRecord(
        model="scratch" if cfg.from_scratch else "pretrained",
        mode=cfg.mode,
        loss=pre_loss,
        strategy=pre_strategy,
        n_per_class=cfg.samples_per_class,
        seed=cfg.seed,
        balanced_accuracy=accuracy,
    )
    return FinetuneResult(
        record=record,
        history=history,
        best_epoch=best_epoch,
        epochs_ran=epochs_ran,
        encoder=encoder,
        mpnn=mpnn,
        head=head,
    )


# ---------------------------------------------------------------------------
# Sweeps.


@dataclass
class SweepCell:
    model: str
    mode: str
    n_per_class: int
    seed: int
    record: RunRecord | None = None
    error: str | None = None


@dataclass
class SummaryRow:
    model: str
    mode: str
    means: dict[int, float | None]
    failures: int


@dataclass
class SweepResult:
    cells: list[SweepCell]
    summary: list[SummaryRow]
    samples: list[int]


def sweep(
    base_cfg: FinetuneConfig,
    ckpt: ModelCheckpoint | None,
    train_ds: WindowedDataset,
    val_ds: WindowedDataset,
    test_ds: WindowedDataset,
    samples: list[int],
    seeds: list[int],
    modes: tuple[str, ...] = (MODE_FULL, MODE_PROBE),
    max_workers: int = 1,
) -> SweepResult:
    """Grid of {scratch, pretrained} x modes x samples x seeds.

    Cell failures are captured, not fatal. Models requiring a checkpoint are
    skipped when none is given.
    """
    variants = [("scratch", True)] if ckpt is None else [("pretrained", False), ("scratch", True)]
    cells: list[SweepCell] = []
    for model, scratch in variants:
        for mode in modes:
            for n in samples:
                for seed in seeds:
                    cells.append(SweepCell(model=model, mode=mode, n_per_class=n, seed=seed))

    def run(cell: SweepCell) -> None:
        cfg = replace(
            base_cfg,
            mode=cell.mode,
            samples_per_class=cell.n_per_class,
            seed=cell.seed,
            from_scratch=(cell.model == "scratch"),
        )
        try:
            result = finetune(
                cfg,
                None if cfg.from_scratch else ckpt,
                train_ds,
                val_ds,
                test_ds,
            )
            cell.record = result.record
        except Exception as exc:  # cell-level isolation, sweep continues
            cell.error = f"{type(exc).__name__}: {exc}"

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            list(pool.map(run, cells))
    else:
        for cell in cells:
            run(cell)

    summary: list[SummaryRow] = []
    for model, _ in variants:
        for mode in modes:
            means: dict[int, float | None] = {}
            failures = 0
            for n in samples:
                values = [
                    c.record.balanced_accuracy
                    for c in cells
                    if c.model == model and c.mode == mode and c.n_per_class == n and c.record
                ]
                failures += sum(
                    1
                    for c in cells
                    if c.model == model and c.mode == mode and c.n_per_class == n and c.error
                )
                means[n] = sum(values) / len(values) if values else None
            summary.append(SummaryRow(model=model, mode=mode, means=means, failures=failures))
    return SweepResult(cells=cells, summary=summary, samples=list(samples))


def sweep_max_workers() -> int:
    """Worker cap from MVTS_THREADS; defaults to serial."""
    raw = os.environ.get("MVTS_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"MVTS_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)

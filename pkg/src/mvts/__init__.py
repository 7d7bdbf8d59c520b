"""Channel-agnostic contrastive pretraining for multivariate time series.

A single-channel convolutional encoder shared across channels, a message
passing network that fuses arbitrary channel groups, three contrastive
objectives (NT-Xent, TS2Vec, COCOA), and a training harness with balanced
few-label fine-tuning. Everything runs on a small reverse-mode autodiff
engine over float64 numpy arrays; gradients are verified against central
finite differences and the losses against direct-summation oracles.
"""

from .data import (
    SynthConfig,
    WindowedDataset,
    generate_synthetic,
    read_cts,
    sample_balanced,
    select_channels,
    split_dataset,
    standardize_dataset,
    standardize_window,
    subset,
    write_cts,
)
from .encoder import (
    LAYER_PLAN,
    REP_DIM,
    ChannelRepresentation,
    EncoderParams,
    encode,
    encode_channels,
    encoder_output_len,
    init_encoder_params,
)
from .errors import ConfigError, DataError, DimensionError, FormatError, MvtsError, UsageError
from .gradcheck import run_gradient_suite, run_oracle_suite
from .harness import (
    FinetuneConfig,
    FinetuneResult,
    ModelCheckpoint,
    PretrainConfig,
    PretrainResult,
    build_checkpoint,
    encoder_from_checkpoint,
    finetune,
    load_checkpoint,
    mpnn_from_checkpoint,
    pretrain,
    save_checkpoint,
    sweep,
)
from .heads import HeadParams, balanced_accuracy, classify, classify_logits, cross_entropy, init_head_params
from .losses import LossConfig, cocoa, compute_loss, nt_xent, nt_xent_pair, ts2vec, ts2vec_dual
from .mpnn import MpnnParams, NodeStateSet, aggregate, init_mpnn_params, message_round, readout
from .optim import AdamWState, adamw_step, init_adamw
from .tensor import Tensor, default_dtype, set_default_dtype
from .views import Partition, ViewSet, per_channel_views, random_partition, two_group_views

__version__ = "0.1.0"

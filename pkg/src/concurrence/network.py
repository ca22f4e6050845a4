"""The concurrence network: two convolutional encoders and a covariance head.

Each encoder is a stack of identical blocks (batch normalization, strided
valid convolution, dropout, ReLU) that halve the channel count per block.
The head centers each encoded channel over time, forms the channel-by-channel
cross-covariance matrix of the two encodings, and reduces it with a learned
weight matrix to a single score per segment pair. A pair is predicted
temporally aligned when the score is positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import BatchNormState, Tensor, batchnorm1d, conv1d, dropout, relu

__all__ = [
    "EncoderConfig",
    "ConcurrenceModel",
    "output_length",
    "build_model",
    "pscs",
    "pscs_batch",
]


@dataclass
class EncoderConfig:
    """Architecture and training hyperparameters shared by both encoders.

    Defaults are the stock recipe: three blocks, 512 first-block channels
    halved at each subsequent block, kernel 5 stride 3 in the first block
    and kernel 3 stride 2 afterwards, dropout 0.25, Adam at 1e-4 for 100
    iterations.
    """

    num_blocks: int = 3
    first_channels: int = 512
    first_kernel: int = 5
    kernel: int = 3
    first_stride: int = 3
    stride: int = 2
    dropout_rate: float = 0.25
    learning_rate: float = 1e-4
    num_iterations: int = 100

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.first_channels < 1:
            raise ValueError("first_channels must be >= 1")
        if self.first_channels % (2 ** (self.num_blocks - 1)) != 0:
            raise ValueError(
                f"first_channels={self.first_channels} must be divisible by "
                f"2**(num_blocks-1)={2 ** (self.num_blocks - 1)}"
            )
        if min(self.first_kernel, self.kernel) < 1:
            raise ValueError("kernel sizes must be >= 1")
        if min(self.first_stride, self.stride) < 1:
            raise ValueError("strides must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def block_channels(self) -> list[int]:
        """Output channels per block: C, C/2, C/4, ..."""
        return [self.first_channels // (2 ** b) for b in range(self.num_blocks)]

    def block_kernels(self) -> list[int]:
        return [self.first_kernel] + [self.kernel] * (self.num_blocks - 1)

    def block_strides(self) -> list[int]:
        return [self.first_stride] + [self.stride] * (self.num_blocks - 1)

    @property
    def out_channels(self) -> int:
        """Channel count of the final block (the encoding dimension)."""
        return self.first_channels // (2 ** (self.num_blocks - 1))


def output_length(w: int, config: EncoderConfig) -> int:
    """Encoded segment length after all blocks' valid strided convolutions."""
    length = int(w)
    kernels = config.block_kernels()
    strides = config.block_strides()
    for b in range(config.num_blocks):
        if length < kernels[b]:
            raise ValueError(
                f"segment too short at block {b + 1}: length {length} < kernel {kernels[b]}"
            )
        length = (length - kernels[b]) // strides[b] + 1
    return length


@dataclass
class EncoderBlock:
    """Parameters and buffers of one batchnorm/conv/dropout/relu block."""

    bn_gamma: Tensor
    bn_beta: Tensor
    conv_w: Tensor
    conv_b: Tensor
    stride: int
    bn_state: BatchNormState


@dataclass
class ConcurrenceModel:
    """Two encoder parameter stacks plus the covariance weight matrix."""

    config: EncoderConfig
    kx: int
    ky: int
    w: int
    w_prime: int
    f_blocks: list[EncoderBlock] = field(default_factory=list)
    g_blocks: list[EncoderBlock] = field(default_factory=list)
    alpha: Tensor = None

    def trainable_parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for blk in self.f_blocks + self.g_blocks:
            params.extend([blk.bn_gamma, blk.bn_beta, blk.conv_w, blk.conv_b])
        params.append(self.alpha)
        return params

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """All model state in a fixed, serialization-stable order."""
        out: list[tuple[str, np.ndarray]] = []
        for prefix, blocks in (("f", self.f_blocks), ("g", self.g_blocks)):
            for b, blk in enumerate(blocks):
                base = f"{prefix}.block{b}"
                out.append((f"{base}.bn_gamma", blk.bn_gamma.data))
                out.append((f"{base}.bn_beta", blk.bn_beta.data))
                out.append((f"{base}.bn_running_mean", blk.bn_state.mean))
                out.append((f"{base}.bn_running_var", blk.bn_state.var))
                out.append((f"{base}.conv_w", blk.conv_w.data))
                out.append((f"{base}.conv_b", blk.conv_b.data))
        out.append(("alpha", self.alpha.data))
        return out


def _init_blocks(config: EncoderConfig, in_channels: int,
                 rng: np.random.Generator) -> list[EncoderBlock]:
    blocks = []
    channels = config.block_channels()
    kernels = config.block_kernels()
    strides = config.block_strides()
    cin = in_channels
    for b in range(config.num_blocks):
        cout, k = channels[b], kernels[b]
        fan_in = cin * k
        bound = 1.0 / np.sqrt(fan_in)
        blocks.append(EncoderBlock(
            bn_gamma=Tensor(np.ones(cin), requires_grad=True),
            bn_beta=Tensor(np.zeros(cin), requires_grad=True),
            conv_w=Tensor(rng.uniform(-bound, bound, size=(cout, cin, k)), requires_grad=True),
            conv_b=Tensor(np.zeros(cout), requires_grad=True),
            stride=strides[b],
            bn_state=BatchNormState(cin),
        ))
        cin = cout
    return blocks


def build_model(config: EncoderConfig, kx: int, ky: int, w: int,
                rng: np.random.Generator) -> ConcurrenceModel:
    """Construct a fresh model. Fails fast if ``w`` is too short for the stack.

    Conv weights are fan-in uniform, biases zero, batchnorm affine terms at
    identity, and the covariance weights are normal with standard deviation
    1/sqrt(Kf*Kg) so initial scores are O(1).
    """
    if kx < 1 or ky < 1:
        raise ValueError("input channel counts must be >= 1")
    w_prime = output_length(w, config)
    kf = kg = config.out_channels
    model = ConcurrenceModel(config=config, kx=kx, ky=ky, w=w, w_prime=w_prime)
    model.f_blocks = _init_blocks(config, kx, rng)
    model.g_blocks = _init_blocks(config, ky, rng)
    model.alpha = Tensor(rng.normal(0.0, 1.0 / np.sqrt(kf * kg), size=(kf, kg)),
                         requires_grad=True)
    return model


def _encode(blocks: list[EncoderBlock], x: Tensor, mode: str,
            rate: float, rng: np.random.Generator) -> Tensor:
    h = x
    for blk in blocks:
        h = batchnorm1d(h, blk.bn_gamma, blk.bn_beta, blk.bn_state, mode)
        h = conv1d(h, blk.conv_w, blk.conv_b, stride=blk.stride)
        h = dropout(h, rate, mode, rng)
        h = relu(h)
    return h


def pscs_batch(model: ConcurrenceModel, x_segs: np.ndarray, y_segs: np.ndarray,
               mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Scores for a batch of segment pairs; shape (N,).

    ``x_segs`` is (N, Kx, w) and ``y_segs`` is (N, Ky, w). Train mode uses
    batch statistics and active dropout (drawing masks from ``rng``), and
    updates the batchnorm running buffers; eval mode is deterministic.
    """
    x_segs = np.asarray(x_segs, dtype=np.float64)
    y_segs = np.asarray(y_segs, dtype=np.float64)
    if x_segs.ndim != 3 or y_segs.ndim != 3:
        raise ValueError("segment batches must be (N, K, w)")
    if x_segs.shape[0] != y_segs.shape[0]:
        raise ValueError("x and y batches differ in length")
    if x_segs.shape[1] != model.kx or y_segs.shape[1] != model.ky:
        raise ValueError("segment channel counts do not match the model")
    if x_segs.shape[2] != model.w or y_segs.shape[2] != model.w:
        raise ValueError(f"segments must have length w={model.w}")
    if mode == "train" and rng is None:
        raise ValueError("train mode needs an rng for dropout")
    if rng is None:
        rng = np.random.default_rng(0)  # never consumed in eval mode

    rate = model.config.dropout_rate
    f_out = _encode(model.f_blocks, Tensor(x_segs), mode, rate, rng)
    g_out = _encode(model.g_blocks, Tensor(y_segs), mode, rate, rng)
    f_centered = f_out - f_out.mean(axis=2, keepdims=True)
    g_centered = g_out - g_out.mean(axis=2, keepdims=True)
    cov = (f_centered @ g_centered.swap_last_axes()) * (1.0 / model.w_prime)
    return (cov * model.alpha).sum(axis=(1, 2))


def pscs(model: ConcurrenceModel, x_seg: np.ndarray, y_seg: np.ndarray,
         mode: str = "eval", rng: np.random.Generator | None = None) -> float:
    """Score one segment pair. Positive means predicted concurrent.

    Train-mode batch statistics here come from this single pair only; the
    training loop instead scores whole minibatches through
    :func:`pscs_batch` so normalization sees the full batch.
    """
    x_seg = np.asarray(x_seg, dtype=np.float64)
    y_seg = np.asarray(y_seg, dtype=np.float64)
    if x_seg.ndim != 2 or y_seg.ndim != 2:
        raise ValueError("segments must be (K, w) arrays")
    scores = pscs_batch(model, x_seg[None], y_seg[None], mode, rng)
    return float(scores.data[0])

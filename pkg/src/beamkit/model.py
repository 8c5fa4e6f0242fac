"""Causal neural beamformer: embedding network, weight head, filter-and-sum.

The network consumes a multichannel complex spectrogram as stacked
real/imaginary channel planes and emits framewise complex beamforming
weights (or a single reference-channel mask), which are applied by a
conjugate filter-and-sum.  Every stage is causal along time: frame ``t``
of any intermediate or output tensor depends only on input frames
``<= t``.

Layout convention: all internal feature maps are ``(batch, channels,
time, freq)``.  A P-channel spectrogram enters as ``2P`` planes ordered
``[Re(ch 0..P-1), Im(ch 0..P-1)]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .autodiff import (
    LSTM,
    AxisNorm,
    Conv2d,
    ConvTranspose2d,
    Initializer,
    Linear,
    Module,
    ModuleList,
    PReLU,
    Tensor,
    concat,
    glu,
    no_grad,
    relu,
)
from .errors import ConfigError, ValidationError
from .stft import ComplexSpectrogram, compress

__all__ = [
    "ModelConfig",
    "NeuralBeamformer",
    "build_model",
    "tiny_config",
    "filter_and_sum",
    "filter_and_sum_ri",
    "ri_stack",
    "ri_unstack",
    "REFERENCE_CHANNEL",
]

REFERENCE_CHANNEL = 0

BF_TYPES = ("conv", "recurrent", "mask")


@dataclass(frozen=True)
class ModelConfig:
    """Every architectural knob of the beamformer, with defaults at full scale.

    ``bf_type`` selects the weight head: ``"conv"`` is a pointwise
    convolution from the embedding channels to ``2·mics`` filter planes;
    ``"recurrent"`` is channel layer-norm, two frequency-shared
    unidirectional LSTMs, and a two-layer fully-connected head;
    ``"mask"`` is the recurrent head emitting a single complex mask that
    is applied to the reference channel only (no beamforming).

    ``multi_output=False`` restricts any head to the single-mask output;
    it is forced by ``bf_type="mask"`` and must agree with it.
    """

    mics: int = 9
    freq_bins: int = 161
    embedding_channels: int = 64
    encoder_layers: int = 5
    glu_kernel: tuple[int, int] = (2, 3)
    glu_stride: tuple[int, int] = (1, 2)
    unet_block_depths_encoder: tuple[int, ...] = (4, 3, 2, 1, 0)
    unet_block_depths_decoder: tuple[int, ...] = (1, 2, 3, 4, 0)
    unet_kernel: tuple[int, int] = (1, 3)
    unet_stride: tuple[int, int] = (1, 2)
    stcn_groups: int = 3
    stcm_per_group: int = 6
    stcm_kernel: int = 5
    stcm_dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    stcm_squeeze_channels: int = 64
    bf_type: str = "recurrent"
    lstm_hidden: int = 64
    lstm_layers: int = 2
    use_unet_blocks: bool = True
    multi_output: bool | None = None
    compression: bool = True
    compression_exponent: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "glu_kernel", tuple(self.glu_kernel))
        object.__setattr__(self, "glu_stride", tuple(self.glu_stride))
        object.__setattr__(self, "unet_kernel", tuple(self.unet_kernel))
        object.__setattr__(self, "unet_stride", tuple(self.unet_stride))
        object.__setattr__(
            self, "unet_block_depths_encoder", tuple(self.unet_block_depths_encoder)
        )
        object.__setattr__(
            self, "unet_block_depths_decoder", tuple(self.unet_block_depths_decoder)
        )
        object.__setattr__(self, "stcm_dilations", tuple(self.stcm_dilations))
        if self.multi_output is None:
            object.__setattr__(self, "multi_output", self.bf_type != "mask")
        self.validate()

    # -- validation ------------------------------------------------------
    def validate(self):
        if self.mics < 1:
            raise ConfigError(f"mics must be >= 1, got {self.mics}")
        if self.freq_bins < 2:
            raise ConfigError(f"freq_bins must be >= 2, got {self.freq_bins}")
        if self.embedding_channels < 1:
            raise ConfigError("embedding_channels must be >= 1")
        if self.encoder_layers < 1:
            raise ConfigError("encoder_layers must be >= 1")
        for name, depths in (
            ("unet_block_depths_encoder", self.unet_block_depths_encoder),
            ("unet_block_depths_decoder", self.unet_block_depths_decoder),
        ):
            if len(depths) != self.encoder_layers:
                raise ConfigError(
                    f"{name} must list one depth per layer "
                    f"({self.encoder_layers}), got {depths}"
                )
            if any(d < 0 for d in depths):
                raise ConfigError(f"{name} entries must be >= 0, got {depths}")
        if len(self.stcm_dilations) != self.stcm_per_group:
            raise ConfigError(
                f"stcm_dilations must list one dilation per block "
                f"({self.stcm_per_group}), got {self.stcm_dilations}"
            )
        if self.stcn_groups < 0 or self.stcm_per_group < 1:
            raise ConfigError("temporal stack sizes must be positive")
        if self.stcm_kernel < 1 or any(d < 1 for d in self.stcm_dilations):
            raise ConfigError("temporal kernel and dilations must be >= 1")
        if self.bf_type not in BF_TYPES:
            raise ConfigError(f"bf_type must be one of {BF_TYPES}, got {self.bf_type!r}")
        if self.bf_type == "mask" and self.multi_output:
            raise ConfigError("bf_type 'mask' emits a single mask; multi_output must be False")
        if self.lstm_hidden < 1 or self.lstm_layers < 1:
            raise ConfigError("lstm_hidden and lstm_layers must be >= 1")
        if not 0.0 < self.compression_exponent <= 1.0:
            raise ConfigError(
                f"compression_exponent must be in (0, 1], got {self.compression_exponent}"
            )
        self.encoder_widths()  # raises on an inconsistent width chain

    # -- derived geometry --------------------------------------------------
    @property
    def input_channels(self) -> int:
        return 2 * self.mics

    @property
    def head_output_channels(self) -> int:
        return 2 * self.mics if self.multi_output else 2

    def encoder_widths(self) -> list[int]:
        """Frequency widths [input, after layer 1, ..., after layer n]."""
        widths = [self.freq_bins]
        for i in range(self.encoder_layers):
            nxt = downsampled_width(widths[-1], self.glu_kernel[1], self.glu_stride[1])
            if nxt < 2:
                raise ConfigError(
                    f"encoder layer {i + 1} would reduce the frequency width "
                    f"to {nxt} (chain {widths}); reduce encoder_layers or "
                    f"increase freq_bins"
                )
            widths.append(nxt)
            if self.use_unet_blocks:
                depth = self.unet_block_depths_encoder[i]
                inner = nxt
                for j in range(depth):
                    inner = downsampled_width(
                        inner, self.unet_kernel[1], self.unet_stride[1]
                    )
                    if inner < 2:
                        raise ConfigError(
                            f"encoder layer {i + 1} sub-unet stage {j + 1} "
                            f"would reduce the frequency width to {inner}"
                        )
        return widths

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        coerced = dict(raw)
        for name in (
            "glu_kernel",
            "glu_stride",
            "unet_kernel",
            "unet_stride",
            "unet_block_depths_encoder",
            "unet_block_depths_decoder",
            "stcm_dilations",
        ):
            if name in coerced and coerced[name] is not None:
                coerced[name] = tuple(coerced[name])
        return cls(**coerced)


def tiny_config() -> ModelConfig:
    """A desk-scale configuration that trains in seconds, not hours."""
    return ModelConfig(
        mics=2,
        embedding_channels=8,
        encoder_layers=3,
        unet_block_depths_encoder=(2, 1, 0),
        unet_block_depths_decoder=(1, 2, 0),
        stcn_groups=1,
        stcm_per_group=2,
        stcm_dilations=(1, 2),
        stcm_squeeze_channels=16,
        lstm_hidden=16,
    )


def downsampled_width(width: int, kernel: int, stride: int) -> int:
    """Output width of a stride-``stride`` conv with left zero-padding.

    The layer pads ``(kernel-1)//2`` zeros on the low-frequency side only,
    so the default (kernel 3, stride 2) chain maps 161→80→40→20→10→5.
    """
    pad = (kernel - 1) // 2
    return (width + pad - kernel) // stride + 1


# ---------------------------------------------------------------------------
# building blocks


class _NormAct(Module):
    """Per-frame frequency normalization followed by PReLU.

    Statistics are taken over the frequency axis independently at every
    (batch, channel, frame) — unlike whole-utterance instance
    normalization this keeps the layer strictly causal.
    """

    def __init__(self, channels: int, init: Initializer, axes: tuple[int, ...] = (3,)):
        super().__init__()
        self.norm = AxisNorm(channels, axes, init)
        self.act = PReLU(channels, init)

    def forward(self, x: Tensor) -> Tensor:
        return self.act(self.norm(x))


class _DownUnit(Module):
    """Stride-2 frequency halving conv + norm + PReLU (time kernel 1)."""

    def __init__(self, channels: int, kernel: tuple[int, int], stride: tuple[int, int], init):
        super().__init__()
        kt, kf = kernel
        self.conv = Conv2d(
            channels,
            channels,
            kernel,
            init,
            stride=stride,
            padding=((kt - 1, 0), ((kf - 1) // 2, 0)),
        )
        self.post = _NormAct(channels, init)

    def forward(self, x: Tensor) -> Tensor:
        return self.post(self.conv(x))


class _UpUnit(Module):
    """Transposed conv doubling the frequency width, then norm + PReLU.

    The raw transposed output is trimmed: the first frequency column
    (the image of the encoder's left padding) is dropped and the result
    is cropped or right-padded to the mirror target width.  With a time
    kernel of 1 no time trimming is needed.
    """

    def __init__(self, in_channels, out_channels, kernel, stride, target_width, init):
        super().__init__()
        if kernel[0] != 1:
            raise ConfigError("frequency refiner requires a time kernel of 1")
        self.deconv = ConvTranspose2d(in_channels, out_channels, kernel, init, stride=stride)
        self.post = _NormAct(out_channels, init)
        self.target_width = int(target_width)

    def forward(self, x: Tensor) -> Tensor:
        y = self.deconv(x)
        y = adjust_width(y, self.target_width)
        return self.post(y)


def adjust_width(x: Tensor, target: int) -> Tensor:
    """Drop the leftmost frequency column, then crop/pad on the right."""
    width = x.shape[-1] - 1
    y = x.narrow(3, 1, width)
    if width > target:
        return y.narrow(3, 0, target)
    if width < target:
        return y.pad(((0, 0), (0, 0), (0, 0), (0, target - width)))
    return y


class FrequencyUnet(Module):
    """A small frequency-axis U-Net applied residually inside a layer.

    ``depth`` halving stages compress the frequency axis, mirrored
    upsampling stages restore it; inner skip connections are channel
    concatenations.  All kernels have time extent 1, so the block is
    per-frame (trivially causal).  The caller adds the block's output to
    its input.
    """

    def __init__(self, channels, depth, width, kernel, stride, init):
        super().__init__()
        if depth < 1:
            raise ConfigError("FrequencyUnet depth must be >= 1; use None to skip")
        self.depth = depth
        widths = [width]
        for _ in range(depth):
            widths.append(downsampled_width(widths[-1], kernel[1], stride[1]))
        self.downs = ModuleList(
            _DownUnit(channels, kernel, stride, init) for _ in range(depth)
        )
        ups = []
        for j in range(depth):
            in_ch = channels if j == 0 else 2 * channels
            ups.append(
                _UpUnit(in_ch, channels, kernel, stride, widths[depth - 1 - j], init)
            )
        self.ups = ModuleList(ups)

    def forward(self, x: Tensor) -> Tensor:
        skips = []
        cur = x
        for down in self.downs:
            cur = down(cur)
            skips.append(cur)
        for j, up in enumerate(self.ups):
            inp = cur if j == 0 else concat([cur, skips[self.depth - 1 - j]], axis=1)
            cur = up(inp)
        return cur


class GatedConvLayer(Module):
    """Encoder layer: gated conv halving frequency, then a residual refiner."""

    def __init__(self, in_channels, channels, cfg: ModelConfig, unet_depth, out_width, init):
        super().__init__()
        kt, kf = cfg.glu_kernel
        pad = ((kt - 1, 0), ((kf - 1) // 2, 0))  # causal: past frames only
        self.conv_linear = Conv2d(in_channels, channels, cfg.glu_kernel, init,
                                  stride=cfg.glu_stride, padding=pad)
        self.conv_gate = Conv2d(in_channels, channels, cfg.glu_kernel, init,
                                stride=cfg.glu_stride, padding=pad)
        self.post = _NormAct(channels, init)
        self.refiner = None
        if cfg.use_unet_blocks and unet_depth > 0:
            self.refiner = FrequencyUnet(
                channels, unet_depth, out_width, cfg.unet_kernel, cfg.unet_stride, init
            )

    def forward(self, x: Tensor) -> Tensor:
        y = self.post(glu(self.conv_linear(x), self.conv_gate(x)))
        if self.refiner is not None:
            y = self.refiner(y) + y
        return y


class GatedDeconvLayer(Module):
    """Decoder layer: gated transposed conv doubling frequency + refiner.

    Time: the transposed conv's trailing frame (which would depend on
    future input) is dropped, keeping the layer causal.  Frequency: the
    raw output is trimmed to the mirror width of the encoder chain.
    """

    def __init__(self, in_channels, channels, cfg: ModelConfig, unet_depth, target_width, init):
        super().__init__()
        self.kernel_time = cfg.glu_kernel[0]
        self.deconv_linear = ConvTranspose2d(in_channels, channels, cfg.glu_kernel,
                                             init, stride=cfg.glu_stride)
        self.deconv_gate = ConvTranspose2d(in_channels, channels, cfg.glu_kernel,
                                           init, stride=cfg.glu_stride)
        self.post = _NormAct(channels, init)
        self.target_width = int(target_width)
        self.refiner = None
        if cfg.use_unet_blocks and unet_depth > 0:
            self.refiner = FrequencyUnet(
                channels, unet_depth, target_width, cfg.unet_kernel, cfg.unet_stride, init
            )

    def _trim(self, y: Tensor, frames: int) -> Tensor:
        if y.shape[2] != frames:
            y = y.narrow(2, 0, frames)
        return adjust_width(y, self.target_width)

    def forward(self, x: Tensor) -> Tensor:
        frames = x.shape[2]
        lin = self._trim(self.deconv_linear(x), frames)
        gate = self._trim(self.deconv_gate(x), frames)
        y = self.post(glu(lin, gate))
        if self.refiner is not None:
            y = self.refiner(y) + y
        return y


class SqueezedTemporalBlock(Module):
    """Residual causal dilated temporal convolution with channel squeeze.

    The wide feature vector (channels × final frequency width, flattened)
    is squeezed through a pointwise conv, filtered along time by a
    dilated causal conv, and expanded back; the block adds its input.
    Normalization is over the channel axis per frame (causal).
    """

    def __init__(self, wide, squeeze, kernel, dilation, init):
        super().__init__()
        self.squeeze = Conv2d(wide, squeeze, (1, 1), init)
        self.pre = _ChannelNormAct(squeeze, init)
        self.dilated = Conv2d(
            squeeze,
            squeeze,
            (kernel, 1),
            init,
            dilation=(dilation, 1),
            padding=(((kernel - 1) * dilation, 0), (0, 0)),
        )
        self.mid = _ChannelNormAct(squeeze, init)
        self.expand = Conv2d(squeeze, wide, (1, 1), init)

    def forward(self, x: Tensor) -> Tensor:
        y = self.pre(self.squeeze(x))
        y = self.mid(self.dilated(y))
        return self.expand(y) + x


class _ChannelNormAct(Module):
    """PReLU then per-frame channel layer-norm (order: act after conv)."""

    def __init__(self, channels: int, init: Initializer):
        super().__init__()
        self.act = PReLU(channels, init)
        self.norm = AxisNorm(channels, (1,), init)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.act(x))


class PointwiseConvHead(Module):
    """Weight head: 1×1 conv from embedding channels to output planes."""

    def __init__(self, channels: int, out_channels: int, init: Initializer):
        super().__init__()
        self.proj = Conv2d(channels, out_channels, (1, 1), init)

    def forward(self, emb: Tensor) -> Tensor:
        return self.proj(emb)


class RecurrentSubbandHead(Module):
    """Weight head: channel LN → stacked LSTMs per subband → 2 FC layers.

    The LSTMs run along time independently for every frequency index
    with one shared set of weights, mirroring classical beamformers that
    treat subbands independently.
    """

    def __init__(self, channels, hidden, layers, out_channels, init):
        super().__init__()
        self.norm = AxisNorm(channels, (1,), init)
        sizes = [channels] + [hidden] * layers
        self.lstms = ModuleList(
            LSTM(sizes[i], sizes[i + 1], init) for i in range(layers)
        )
        self.fc_hidden = Linear(hidden, hidden, init)
        self.fc_out = Linear(hidden, out_channels, init)

    def forward(self, emb: Tensor) -> Tensor:
        n, c, t, f = emb.shape
        y = self.norm(emb)
        seq = y.transpose(0, 3, 2, 1).reshape((n * f, t, c))
        for lstm in self.lstms:
            seq = lstm(seq)
        h = relu(self.fc_hidden(seq))
        out = self.fc_out(h)
        out_ch = out.shape[-1]
        return out.reshape((n, f, t, out_ch)).transpose(0, 3, 2, 1)


# ---------------------------------------------------------------------------
# filter-and-sum


def filter_and_sum_ri(weights: Tensor, mixture: Tensor) -> Tensor:
    """Conjugate filter-and-sum on stacked real/imaginary planes.

    ``weights`` carries ``2·K`` planes ``[Re(0..K-1), Im(0..K-1)]`` and
    ``mixture`` ``2·P`` planes with ``K <= P``; the first ``K`` mixture
    channels are filtered (``K=1`` is the reference-mask case).  Output
    planes are ``[Re, Im]`` of ``sum_k conj(w_k) · x_k``.
    """
    if weights.shape[1] % 2 or mixture.shape[1] % 2:
        raise ValidationError("real/imaginary planes must pair up")
    k = weights.shape[1] // 2
    p = mixture.shape[1] // 2
    if k > p:
        raise ValidationError(
            f"{k} filters cannot apply to {p} mixture channels"
        )
    wr, wi = weights.narrow(1, 0, k), weights.narrow(1, k, k)
    xr, xi = mixture.narrow(1, 0, k), mixture.narrow(1, p, k)
    out_re = (wr * xr + wi * xi).sum(axis=1, keepdims=True)
    out_im = (wr * xi - wi * xr).sum(axis=1, keepdims=True)
    return concat([out_re, out_im], axis=1)


def filter_and_sum(weights: np.ndarray, spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Conjugate filter-and-sum on complex arrays: ``Σ_p conj(M^p)·X^p``.

    ``weights`` has the spectrogram's (freq, time, channel) shape; the
    result is a single-channel spectrogram with the same geometry.
    """
    weights = np.asarray(weights, dtype=np.complex128)
    if weights.shape != spec.data.shape:
        raise ValidationError(
            f"weights shape {weights.shape} does not match spectrogram "
            f"shape {spec.data.shape}"
        )
    combined = np.sum(np.conj(weights) * spec.data, axis=2, keepdims=True)
    return spec.with_data(combined)


def ri_stack(spec: ComplexSpectrogram) -> np.ndarray:
    """(freq, time, chan) complex → (2·chan, time, freq) stacked planes."""
    moved = np.transpose(spec.data, (2, 1, 0))
    return np.concatenate([moved.real, moved.imag], axis=0)


def ri_unstack(planes: np.ndarray, template: ComplexSpectrogram) -> ComplexSpectrogram:
    """(2, time, freq) planes → single-channel complex spectrogram."""
    if planes.ndim != 3 or planes.shape[0] != 2:
        raise ValidationError(f"expected (2, time, freq) planes, got {planes.shape}")
    data = (planes[0] + 1j * planes[1]).T[:, :, None]
    return template.with_data(np.ascontiguousarray(data))


# ---------------------------------------------------------------------------
# the model


class NeuralBeamformer(Module):
    """Embedding network + weight head + conjugate filter-and-sum.

    ``post_processor`` is an optional seam applied after beamforming in
    :meth:`enhance_spectrogram`: any callable mapping (enhanced
    single-channel spectrogram, reference-channel spectrogram) to a
    refined single-channel spectrogram.  The default is identity.
    """

    def __init__(self, cfg: ModelConfig, init: Initializer):
        super().__init__()
        self.cfg = cfg
        c = cfg.embedding_channels
        widths = cfg.encoder_widths()

        encoder = []
        for i in range(cfg.encoder_layers):
            in_ch = cfg.input_channels if i == 0 else c
            encoder.append(
                GatedConvLayer(
                    in_ch, c, cfg, cfg.unet_block_depths_encoder[i], widths[i + 1], init
                )
            )
        self.encoder = ModuleList(encoder)

        wide = c * widths[-1]
        blocks = []
        for _ in range(cfg.stcn_groups):
            for dilation in cfg.stcm_dilations:
                blocks.append(
                    SqueezedTemporalBlock(
                        wide, cfg.stcm_squeeze_channels, cfg.stcm_kernel, dilation, init
                    )
                )
        self.temporal = ModuleList(blocks)

        decoder = []
        for i in range(cfg.encoder_layers):
            target = widths[cfg.encoder_layers - 1 - i]
            decoder.append(
                GatedDeconvLayer(
                    2 * c, c, cfg, cfg.unet_block_depths_decoder[i], target, init
                )
            )
        self.decoder = ModuleList(decoder)

        out_ch = cfg.head_output_channels
        if cfg.bf_type == "conv":
            self.head = PointwiseConvHead(c, out_ch, init)
        else:  # "recurrent" and "mask" share the recurrent structure
            self.head = RecurrentSubbandHead(
                c, cfg.lstm_hidden, cfg.lstm_layers, out_ch, init
            )

        self.post_processor: Callable | None = None
        self._final_width = widths[-1]

    # -- stages ----------------------------------------------------------
    def embed(self, x: Tensor) -> Tensor:
        """RI input planes (N, 2P, T, F) → embedding (N, C, T, F)."""
        if x.ndim != 4 or x.shape[1] != self.cfg.input_channels:
            raise ValidationError(
                f"expected (batch, {self.cfg.input_channels}, time, freq) "
                f"input, got {x.shape}"
            )
        if x.shape[3] != self.cfg.freq_bins:
            raise ConfigError(
                f"input has {x.shape[3]} frequency bins, model expects "
                f"{self.cfg.freq_bins}"
            )
        skips = []
        cur = x
        for layer in self.encoder:
            cur = layer(cur)
            skips.append(cur)

        n, c, t, w = cur.shape
        flat = cur.transpose(0, 1, 3, 2).reshape((n, c * w, t, 1))
        for block in self.temporal:
            flat = block(flat)
        cur = flat.reshape((n, c, w, t)).transpose(0, 1, 3, 2)

        for i, layer in enumerate(self.decoder):
            skip = skips[self.cfg.encoder_layers - 1 - i]
            cur = layer(concat([cur, skip], axis=1))
        return cur

    def beam_weights(self, embedding: Tensor) -> Tensor:
        """Embedding (N, C, T, F) → weight planes (N, 2K, T, F)."""
        return self.head(embedding)

    def forward(self, x: Tensor) -> Tensor:
        """RI input planes → enhanced (N, 2, T, F) RI planes."""
        weights = self.beam_weights(self.embed(x))
        return filter_and_sum_ri(weights, x)

    # -- spectrogram-level convenience ------------------------------------
    def enhance_spectrogram(self, spec: ComplexSpectrogram) -> ComplexSpectrogram:
        """Run the full pipeline on one multichannel spectrogram.

        The output lives in the compressed domain when compression is
        enabled (decompress before waveform synthesis), matching the
        domain the loss is computed in.
        """
        if spec.data.shape[2] != self.cfg.mics:
            raise ConfigError(
                f"spectrogram has {spec.data.shape[2]} channels, model "
                f"expects {self.cfg.mics}"
            )
        if spec.data.shape[0] != self.cfg.freq_bins:
            raise ConfigError(
                f"spectrogram has {spec.data.shape[0]} frequency bins, "
                f"model expects {self.cfg.freq_bins}"
            )
        if self.cfg.compression:
            spec = compress(spec, self.cfg.compression_exponent)
        with no_grad():
            planes = self.forward(Tensor(ri_stack(spec)[None]))
        enhanced = ri_unstack(planes.data[0], spec)
        if self.post_processor is not None:
            reference = spec.with_data(spec.data[:, :, :1])
            enhanced = self.post_processor(enhanced, reference)
        return enhanced


def build_model(cfg: ModelConfig, seed: int) -> NeuralBeamformer:
    """Construct the network with deterministic seeded initialization."""
    return NeuralBeamformer(cfg, Initializer(seed))

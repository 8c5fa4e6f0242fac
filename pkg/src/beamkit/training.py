"""Adam optimizer, plateau schedule, trainer, and evaluation harness.

The trainer consumes a scene-corpus manifest, crops every utterance to a
fixed-length leading segment, and runs mini-batch gradient descent on
the spectral loss with per-epoch validation, plateau-driven learning
rate halving, and best-checkpoint tracking.  Everything is seeded and
single-threaded, so reruns with the same inputs are byte-identical —
loss curves, checkpoints, and metric tables alike.

The evaluation harness regenerates each manifest scene from its
recorded seed (bit-exactly), runs the system under test next to the
always-computed oracle mask-based MVDR baseline, and reports SI-SNR and
SNR per scene with per-mixing-SNR aggregate means.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autodiff import Tensor, load_checkpoint, no_grad, save_checkpoint
from .errors import (
    ConfigError,
    ConfigMismatchError,
    DivergenceError,
    NonFiniteError,
    ValidationError,
)
from .metrics import SATURATION_DB, loss_tensors, si_snr_db, snr_db
from .model import ModelConfig, NeuralBeamformer, build_model, ri_stack
from .mvdr import oracle_mvdr_enhance
from .rooms import read_manifest, rebuild_scene_audio
from .signals import WaveBuffer
from .stft import StftConfig, compress, decompress, istft, stft
from .wavio import read_wav, write_wav

__all__ = [
    "TrainConfig",
    "OptimState",
    "TrainResult",
    "MetricsRow",
    "EvaluationResult",
    "adam_step",
    "lr_schedule",
    "train",
    "evaluate",
    "save_model_checkpoint",
    "enhance_waveform",
    "load_trained_model",
    "write_jsonl",
    "format_aligned",
]

CHECKPOINT_META_KIND = "model_checkpoint"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the desk-scale trainer.

    ``learning_rate=0`` is allowed as a diagnostic mode that freezes the
    parameters while exercising the full loop.  ``grad_accumulation``
    splits each batch into that many sequentially-processed chunks whose
    gradients are summed in a fixed order before the optimizer step, so
    results remain deterministic.
    """

    epochs: int = 20
    batch_size: int = 2
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    plateau_patience: int = 2
    segment_seconds: float = 2.0
    lambda_ri: float = 0.5
    lambda_mag: float = 0.5
    seed: int = 0
    grad_accumulation: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise ConfigError(
                f"learning_rate must be finite and >= 0, got {self.learning_rate}"
            )
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.plateau_patience < 1:
            raise ConfigError(
                f"plateau_patience must be >= 1, got {self.plateau_patience}"
            )
        if self.segment_seconds <= 0.0:
            raise ConfigError(
                f"segment_seconds must be > 0, got {self.segment_seconds}"
            )
        if self.lambda_ri < 0.0 or self.lambda_mag < 0.0:
            raise ConfigError("loss term weights must be >= 0")
        if self.grad_accumulation < 1:
            raise ConfigError(
                f"grad_accumulation must be >= 1, got {self.grad_accumulation}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown training config fields: {sorted(unknown)}")
        return cls(**raw)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimState:
    """Adam accumulators plus the plateau-halving schedule state.

    The learning rate never increases: it starts at the configured value
    and is halved by :func:`lr_schedule` whenever validation loss fails
    to improve for ``patience`` consecutive epochs.  A zero learning
    rate is the diagnostic freeze mode; otherwise it stays positive
    (halving cannot reach zero).
    """

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 2
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    plateau_count: int = 0
    best_val_loss: float = math.inf
    halvings: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise ConfigError(
                f"learning_rate must be finite and >= 0, got {self.learning_rate}"
            )
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")


def adam_step(params: dict, grads: dict, state: OptimState) -> OptimState:
    """One Adam update (bias-corrected) applied to ``params`` in place.

    ``params`` maps names to leaf tensors and ``grads`` maps the same
    names to gradient arrays (missing or ``None`` entries count as zero
    gradients).  Parameters are visited in sorted-name order so the
    update sequence is deterministic.  Returns ``state`` for chaining.
    """
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for name in sorted(params):
        param = params[name]
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        grad = np.asarray(grad)
        if grad.shape != param.data.shape:
            raise ValidationError(
                f"gradient for {name!r} has shape {grad.shape}, parameter "
                f"has {param.data.shape}"
            )
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(param.data)
            state.second_moment[name] = np.zeros_like(param.data)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad**2
        m_hat = m / bias1
        v_hat = v / bias2
        param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


def lr_schedule(state: OptimState, validation_loss: float) -> OptimState:
    """Plateau rule: halve the learning rate after ``patience`` stalls.

    An epoch improves only if its validation loss is strictly below the
    best seen so far (no minimum delta).  Improvement resets the stall
    counter; once the counter reaches ``patience`` the learning rate is
    halved and the counter resets.
    """
    if not math.isfinite(validation_loss):
        raise ValidationError(
            f"validation loss must be finite, got {validation_loss}"
        )
    if validation_loss < state.best_val_loss:
        state.best_val_loss = validation_loss
        state.plateau_count = 0
    else:
        state.plateau_count += 1
        if state.plateau_count >= state.patience:
            state.learning_rate *= 0.5
            state.halvings += 1
            state.plateau_count = 0
    return state


# ---------------------------------------------------------------------------
# structured records


def write_jsonl(path: str | os.PathLike, records: list[dict]) -> str:
    """Write records as line-delimited JSON with sorted keys."""
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def format_aligned(records: list[dict], columns: list[str]) -> str:
    """Render records as an aligned-column text table."""

    def cell(value) -> str:
        if value is None:
            return "-"
        if isinstance(value, bool):
            return str(value)
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    rows = [[cell(record.get(col)) for col in columns] for record in records]
    widths = [
        max(len(col), *(len(row[i]) for row in rows)) if rows else len(col)
        for i, col in enumerate(columns)
    ]
    lines = ["  ".join(col.rjust(widths[i]) for i, col in enumerate(columns))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(row[i].rjust(widths[i]) for i in range(len(columns))))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# corpus loading


def _load_examples(
    manifest_path: str | os.PathLike,
    model_cfg: ModelConfig,
    stft_cfg: StftConfig,
    segment_seconds: float,
):
    """Manifest → list of (input_planes, target_planes) training pairs.

    Each utterance is cropped to its leading ``segment_seconds`` (the
    full utterance if shorter), transformed, compressed when the model
    compresses, and stacked into real/imaginary planes.  All utterances
    must share a length so batches stack.
    """
    header, scenes = read_manifest(manifest_path)
    if not scenes:
        raise ValidationError(f"{manifest_path}: manifest lists no scenes")
    root = os.path.dirname(os.path.abspath(os.fspath(manifest_path)))

    examples = []
    segment = None
    for record in scenes:
        mixture = read_wav(os.path.join(root, record["mixture_path"]))
        target = read_wav(os.path.join(root, record["target_path"]))
        if mixture.num_channels != model_cfg.mics:
            raise ConfigMismatchError(
                f"scene {record['id']} has {mixture.num_channels} channels, "
                f"model expects {model_cfg.mics}"
            )
        if target.num_channels != 1:
            raise ValidationError(
                f"scene {record['id']} target must be mono, got "
                f"{target.num_channels} channels"
            )
        want = int(round(segment_seconds * mixture.sample_rate))
        take = min(want, mixture.num_samples, target.num_samples)
        if segment is None:
            segment = take
        elif take != segment:
            raise ValidationError(
                f"scene {record['id']} yields a {take}-sample segment; "
                f"previous scenes yielded {segment} (batching needs equal "
                "lengths)"
            )
        mixture = WaveBuffer(mixture.data[:, :segment], mixture.sample_rate)
        target = WaveBuffer(target.data[:, :segment], target.sample_rate)

        mix_spec = stft(mixture, stft_cfg)
        tgt_spec = stft(target, stft_cfg)
        if model_cfg.compression:
            mix_spec = compress(mix_spec, model_cfg.compression_exponent)
            tgt_spec = compress(tgt_spec, model_cfg.compression_exponent)
        examples.append((ri_stack(mix_spec), ri_stack(tgt_spec)))
    return examples


def _check_geometry(model: NeuralBeamformer, stft_cfg: StftConfig):
    if stft_cfg.freq_bins != model.cfg.freq_bins:
        raise ConfigMismatchError(
            f"transform yields {stft_cfg.freq_bins} frequency bins, model "
            f"expects {model.cfg.freq_bins}"
        )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    """Loss curve records plus the tracked best-validation state."""

    records: list
    best_epoch: int
    best_val_loss: float
    best_state: dict
    best_checkpoint: str | None = None
    final_checkpoint: str | None = None
    loss_curve_path: str | None = None
    summary_path: str | None = None


def _batch_loss(model, inputs, targets, cfg, backward_scale: float | None):
    """Forward (and optionally backward) on one stacked batch.

    Returns the ``(total, ri, mag)`` per-bin mean loss values.  With
    ``backward_scale`` set, ``scale·total`` is backpropagated so chunked
    gradient accumulation sums to the full-batch-mean gradient: a chunk
    holding ``n_c`` of ``N`` batch items contributes ``n_c/N`` of it.
    """
    total, ri, mag = loss_tensors(
        model.forward(Tensor(inputs)),
        Tensor(targets),
        cfg.lambda_ri,
        cfg.lambda_mag,
    )
    if backward_scale is not None:
        (total * backward_scale).backward()
    return float(total.data), float(ri.data), float(mag.data)


def train(
    model: NeuralBeamformer,
    manifest_path: str | os.PathLike,
    cfg: TrainConfig = TrainConfig(),
    stft_cfg: StftConfig = StftConfig(),
    val_manifest_path: str | os.PathLike | None = None,
    out_dir: str | os.PathLike | None = None,
) -> TrainResult:
    """Mini-batch training with per-epoch validation and plateau halving.

    Scenes come from ``manifest_path``; validation runs over
    ``val_manifest_path`` when given, else over the training set.  With
    ``out_dir`` set, the loss curve (line-delimited JSON), an aligned
    text summary, and best/final checkpoints are written there.  The
    model is left holding its final-epoch parameters; the best
    validation state is returned (and saved) separately.

    Raises
    ------
    DivergenceError
        When any batch produces a non-finite loss or activation; the
        error names the 1-based epoch and batch.
    """
    _check_geometry(model, stft_cfg)
    examples = _load_examples(manifest_path, model.cfg, stft_cfg, cfg.segment_seconds)
    if val_manifest_path is not None:
        val_examples = _load_examples(
            val_manifest_path, model.cfg, stft_cfg, cfg.segment_seconds
        )
    else:
        val_examples = examples

    params = dict(model.named_parameters())
    state = OptimState(
        learning_rate=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        epsilon=cfg.epsilon,
        patience=cfg.plateau_patience,
    )
    rng = np.random.default_rng(np.random.SeedSequence((int(cfg.seed), 0x7261494E)))

    out_dir = os.fspath(out_dir) if out_dir is not None else None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    records: list[dict] = []
    best_epoch = 0
    best_state = model.state_dict()
    best_path = os.path.join(out_dir, "checkpoint_best.bkt") if out_dir else None
    final_path = os.path.join(out_dir, "checkpoint_final.bkt") if out_dir else None

    def run_validation() -> float:
        losses = []
        with no_grad():
            for start in range(0, len(val_examples), cfg.batch_size):
                chunk = val_examples[start : start + cfg.batch_size]
                inputs = np.stack([ex[0] for ex in chunk])
                targets = np.stack([ex[1] for ex in chunk])
                total, _, _ = _batch_loss(
                    model, inputs, targets, cfg, backward_scale=None
                )
                losses.append((total, len(chunk)))
        weight = sum(n for _, n in losses)
        return sum(v * n for v, n in losses) / weight

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(examples))
        epoch_lr = state.learning_rate
        batch_totals: list[tuple[float, float, float, int]] = []
        for batch_index, start in enumerate(range(0, len(order), cfg.batch_size), 1):
            # The shuffle chooses each batch's composition; stacking in
            # sorted index order makes equal-composition batches
            # bit-identical regardless of the draw order.
            picked = np.sort(order[start : start + cfg.batch_size])
            model.zero_grad()
            try:
                chunk_size = max(
                    1, math.ceil(len(picked) / cfg.grad_accumulation)
                )
                batch_total = batch_ri = batch_mag = 0.0
                for chunk_start in range(0, len(picked), chunk_size):
                    chunk = picked[chunk_start : chunk_start + chunk_size]
                    inputs = np.stack([examples[i][0] for i in chunk])
                    targets = np.stack([examples[i][1] for i in chunk])
                    share = len(chunk) / len(picked)
                    total, ri, mag = _batch_loss(
                        model, inputs, targets, cfg, backward_scale=share
                    )
                    batch_total += total * share
                    batch_ri += ri * share
                    batch_mag += mag * share
                if not math.isfinite(batch_total):
                    raise DivergenceError(epoch, batch_index)
                grads = {
                    name: None if p.grad is None else p.grad for name, p in params.items()
                }
                adam_step(params, grads, state)
            except NonFiniteError as exc:
                raise DivergenceError(epoch, batch_index, str(exc)) from exc
            batch_totals.append((batch_total, batch_ri, batch_mag, len(picked)))
        model.zero_grad()

        count = sum(n for _, _, _, n in batch_totals)
        train_loss = sum(v * n for v, _, _, n in batch_totals) / count
        train_ri = sum(v * n for _, v, _, n in batch_totals) / count
        train_mag = sum(v * n for _, _, v, n in batch_totals) / count
        val_loss = run_validation()
        if not math.isfinite(val_loss):
            raise DivergenceError(epoch, 0, "validation loss is not finite")

        improved = val_loss < state.best_val_loss
        if improved:
            best_epoch = epoch
            best_state = model.state_dict()
            if best_path is not None:
                _save_model_checkpoint(
                    best_path, best_state, model.cfg, stft_cfg, cfg, epoch, val_loss
                )
        lr_schedule(state, val_loss)

        records.append(
            {
                "kind": "epoch",
                "epoch": epoch,
                "train_loss": train_loss,
                "train_ri": train_ri,
                "train_mag": train_mag,
                "val_loss": val_loss,
                "learning_rate": epoch_lr,
                "halvings": state.halvings,
                "improved": bool(improved),
            }
        )

    curve_path = summary_path = None
    if out_dir is not None:
        _save_model_checkpoint(
            final_path,
            model.state_dict(),
            model.cfg,
            stft_cfg,
            cfg,
            cfg.epochs,
            records[-1]["val_loss"],
        )
        curve_path = write_jsonl(os.path.join(out_dir, "loss_curve.jsonl"), records)
        summary_path = os.path.join(out_dir, "training_summary.txt")
        columns = [
            "epoch",
            "train_loss",
            "val_loss",
            "train_ri",
            "train_mag",
            "learning_rate",
            "halvings",
            "improved",
        ]
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write(format_aligned(records, columns))

    return TrainResult(
        records=records,
        best_epoch=best_epoch,
        best_val_loss=state.best_val_loss,
        best_state=best_state,
        best_checkpoint=best_path,
        final_checkpoint=final_path,
        loss_curve_path=curve_path,
        summary_path=summary_path,
    )


def _save_model_checkpoint(path, state, model_cfg, stft_cfg, train_cfg, epoch, val_loss):
    meta = {
        "kind": CHECKPOINT_META_KIND,
        "model": model_cfg.to_dict(),
        "stft": asdict(stft_cfg),
        "train": train_cfg.to_dict(),
        "epoch": int(epoch),
        "val_loss": float(val_loss),
    }
    save_checkpoint(path, state, meta)


def save_model_checkpoint(
    path: str | os.PathLike,
    model: NeuralBeamformer,
    stft_cfg: StftConfig = StftConfig(),
    train_cfg: TrainConfig | None = None,
    epoch: int = 0,
    val_loss: float = 0.0,
) -> str:
    """Save a model with enough metadata for :func:`load_trained_model`."""
    _save_model_checkpoint(
        path,
        model.state_dict(),
        model.cfg,
        stft_cfg,
        train_cfg if train_cfg is not None else TrainConfig(),
        epoch,
        val_loss,
    )
    return os.fspath(path)


def load_trained_model(path: str | os.PathLike) -> tuple[NeuralBeamformer, StftConfig, dict]:
    """Rebuild a model (and its transform geometry) from a checkpoint."""
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != CHECKPOINT_META_KIND:
        raise ConfigMismatchError(
            f"{path}: checkpoint metadata kind {meta.get('kind')!r} is not "
            f"{CHECKPOINT_META_KIND!r}"
        )
    model_cfg = ModelConfig.from_dict(meta["model"])
    stft_cfg = StftConfig(**meta["stft"])
    model = build_model(model_cfg, seed=0)
    model.load_state_dict(tensors)
    return model, stft_cfg, meta


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class MetricsRow:
    """Per-scene metrics for the noisy mixture, the system, and the oracle
    MVDR baseline, all against the reference-channel speech image.

    ``saturated`` names every metric field that hit the ±60 dB cap.
    """

    scene_id: str
    snr_db: float
    si_snr_noisy_db: float
    si_snr_enhanced_db: float
    si_snr_mvdr_db: float
    snr_noisy_db: float
    snr_enhanced_db: float
    snr_mvdr_db: float
    saturated: tuple = ()

    METRIC_FIELDS = (
        "si_snr_noisy_db",
        "si_snr_enhanced_db",
        "si_snr_mvdr_db",
        "snr_noisy_db",
        "snr_enhanced_db",
        "snr_mvdr_db",
    )

    def __post_init__(self):
        for name in self.METRIC_FIELDS:
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite, got {getattr(self, name)}")
        unknown = set(self.saturated) - set(self.METRIC_FIELDS)
        if unknown:
            raise ValidationError(f"unknown saturated flags: {sorted(unknown)}")

    @property
    def si_snr_gain_db(self) -> float:
        return self.si_snr_enhanced_db - self.si_snr_noisy_db

    @property
    def snr_gain_db(self) -> float:
        return self.snr_enhanced_db - self.snr_noisy_db

    @property
    def mvdr_si_snr_gain_db(self) -> float:
        return self.si_snr_mvdr_db - self.si_snr_noisy_db

    @property
    def mvdr_snr_gain_db(self) -> float:
        return self.snr_mvdr_db - self.snr_noisy_db

    def to_dict(self) -> dict:
        return {
            "kind": "scene_metrics",
            "scene_id": self.scene_id,
            "snr_db": self.snr_db,
            "si_snr_noisy_db": self.si_snr_noisy_db,
            "si_snr_enhanced_db": self.si_snr_enhanced_db,
            "si_snr_mvdr_db": self.si_snr_mvdr_db,
            "snr_noisy_db": self.snr_noisy_db,
            "snr_enhanced_db": self.snr_enhanced_db,
            "snr_mvdr_db": self.snr_mvdr_db,
            "si_snr_gain_db": self.si_snr_gain_db,
            "snr_gain_db": self.snr_gain_db,
            "mvdr_si_snr_gain_db": self.mvdr_si_snr_gain_db,
            "mvdr_snr_gain_db": self.mvdr_snr_gain_db,
            "saturated": list(self.saturated),
        }


@dataclass
class EvaluationResult:
    rows: list
    aggregates: list
    metrics_path: str | None = None
    summary_path: str | None = None


def enhance_waveform(
    model: NeuralBeamformer, mixture: WaveBuffer, stft_cfg: StftConfig
) -> WaveBuffer:
    """Full waveform pipeline: transform, enhance, undo compression, invert."""
    _check_geometry(model, stft_cfg)
    enhanced = model.enhance_spectrogram(stft(mixture, stft_cfg))
    if model.cfg.compression:
        enhanced = decompress(enhanced, model.cfg.compression_exponent)
    return istft(enhanced, stft_cfg)


def _mvdr_waveform(mixture, speech_img, noise_img, stft_cfg) -> np.ndarray:
    enhanced = oracle_mvdr_enhance(
        stft(mixture, stft_cfg),
        stft(speech_img, stft_cfg),
        stft(noise_img, stft_cfg),
    )
    return istft(enhanced, stft_cfg).data[0]


def evaluate(
    system,
    manifest_path: str | os.PathLike,
    stft_cfg: StftConfig = StftConfig(),
    out_dir: str | os.PathLike | None = None,
    max_scenes: int | None = None,
    dump_audio: bool = False,
) -> EvaluationResult:
    """Score a system against the noisy mixture and the oracle MVDR.

    ``system`` is a trained model, the string ``"identity"`` (the noisy
    reference channel passes through), the string ``"oracle-mvdr"``
    (the baseline itself), or — for diagnostics — a callable
    ``(mixture, speech_image, noise_image) -> mono WaveBuffer``.

    Every scene is regenerated bit-exactly from its manifest seed, so
    the oracle columns have access to the true source images.  Rows are
    aggregated into per-mixing-SNR means plus an overall mean.  With
    ``out_dir`` set, rows and aggregates go to ``metrics.jsonl`` and an
    aligned table to ``metrics_summary.txt``; ``dump_audio`` adds each
    scene's enhanced output under ``audio/``.
    """
    if isinstance(system, str) and system not in ("identity", "oracle-mvdr"):
        raise ConfigError(
            f"system must be a model, 'identity', 'oracle-mvdr', or a "
            f"callable, got {system!r}"
        )
    if isinstance(system, NeuralBeamformer):
        _check_geometry(system, stft_cfg)

    header, scenes = read_manifest(manifest_path)
    if max_scenes is not None:
        scenes = scenes[:max_scenes]
    if not scenes:
        raise ValidationError(f"{manifest_path}: manifest lists no scenes")
    if dump_audio and out_dir is None:
        raise ConfigError("dump_audio requires an output directory")

    audio_dir = None
    if dump_audio:
        audio_dir = os.path.join(os.fspath(out_dir), "audio")
        os.makedirs(audio_dir, exist_ok=True)

    rows: list[MetricsRow] = []
    for record in scenes:
        _, mixture, speech_img, noise_img = rebuild_scene_audio(record, header)
        if isinstance(system, NeuralBeamformer) and (
            mixture.num_channels != system.cfg.mics
        ):
            raise ConfigMismatchError(
                f"scene {record['id']} has {mixture.num_channels} channels, "
                f"model expects {system.cfg.mics}"
            )
        reference = speech_img.data[0]
        noisy = mixture.data[0]
        mvdr_est = _mvdr_waveform(mixture, speech_img, noise_img, stft_cfg)

        if isinstance(system, NeuralBeamformer):
            enhanced = enhance_waveform(system, mixture, stft_cfg).data[0]
        elif system == "identity":
            enhanced = noisy
        elif system == "oracle-mvdr":
            enhanced = mvdr_est
        else:
            out = system(mixture, speech_img, noise_img)
            if not isinstance(out, WaveBuffer) or out.num_channels != 1:
                raise ValidationError(
                    "a callable system must return a mono WaveBuffer"
                )
            enhanced = out.data[0]

        if audio_dir is not None:
            write_wav(
                os.path.join(audio_dir, f"{record['id']}_enhanced.wav"),
                WaveBuffer(enhanced, header["sample_rate"]),
                encoding="float32",
            )

        values = {
            "si_snr_noisy_db": si_snr_db(noisy, reference),
            "si_snr_enhanced_db": si_snr_db(enhanced, reference),
            "si_snr_mvdr_db": si_snr_db(mvdr_est, reference),
            "snr_noisy_db": snr_db(noisy, reference),
            "snr_enhanced_db": snr_db(enhanced, reference),
            "snr_mvdr_db": snr_db(mvdr_est, reference),
        }
        saturated = tuple(
            name for name in MetricsRow.METRIC_FIELDS
            if abs(values[name]) >= SATURATION_DB
        )
        rows.append(
            MetricsRow(
                scene_id=record["id"],
                snr_db=float(record["snr_db"]),
                saturated=saturated,
                **values,
            )
        )

    aggregates = _aggregate(rows)

    metrics_path = summary_path = None
    if out_dir is not None:
        out_dir = os.fspath(out_dir)
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = write_jsonl(
            os.path.join(out_dir, "metrics.jsonl"),
            [row.to_dict() for row in rows] + aggregates,
        )
        summary_path = os.path.join(out_dir, "metrics_summary.txt")
        columns = [
            "bucket",
            "count",
            "si_snr_noisy_db",
            "si_snr_enhanced_db",
            "si_snr_mvdr_db",
            "snr_noisy_db",
            "snr_enhanced_db",
            "snr_mvdr_db",
            "si_snr_gain_db",
            "mvdr_si_snr_gain_db",
        ]
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write(format_aligned(aggregates, columns))

    return EvaluationResult(rows, aggregates, metrics_path, summary_path)


def _aggregate(rows: list) -> list[dict]:
    """Mean metrics per mixing-SNR bucket plus an overall row."""

    def mean_record(bucket, subset) -> dict:
        record = {"kind": "aggregate", "bucket": bucket, "count": len(subset)}
        for name in MetricsRow.METRIC_FIELDS:
            record[name] = float(np.mean([getattr(r, name) for r in subset]))
        record["si_snr_gain_db"] = float(np.mean([r.si_snr_gain_db for r in subset]))
        record["snr_gain_db"] = float(np.mean([r.snr_gain_db for r in subset]))
        record["mvdr_si_snr_gain_db"] = float(
            np.mean([r.mvdr_si_snr_gain_db for r in subset])
        )
        record["mvdr_snr_gain_db"] = float(
            np.mean([r.mvdr_snr_gain_db for r in subset])
        )
        return record

    buckets = sorted({row.snr_db for row in rows})
    records = [
        mean_record(bucket, [r for r in rows if r.snr_db == bucket])
        for bucket in buckets
    ]
    records.append(mean_record("all", rows))
    return records

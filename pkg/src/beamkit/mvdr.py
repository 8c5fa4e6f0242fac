"""Oracle-masked spatial covariance estimation and MVDR beamforming.

This is the classic utterance-level baseline: a time-frequency mask
(here the oracle ideal ratio mask) weights the mixture's outer products
into speech and noise spatial covariance matrices, the speech steering
vector is extracted as the principal eigenvector, and the minimum-variance
distortionless-response solution turns both into one complex weight vector
per frequency bin that is applied to every frame.

All operations are per-frequency and independent across bins.  Arrays use
the (freq, time, channel) spectrogram layout and (freq, mic, mic)
covariance layout throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSteeringError, SolverError, ValidationError
from .model import REFERENCE_CHANNEL, filter_and_sum
from .stft import ComplexSpectrogram

MASK_FLOOR = 1e-8
DIAGONAL_LOADING = 1e-6
POWER_ITERATIONS = 200
POWER_TOLERANCE = 1e-10

STEERING_MODES = ("unit", "reference")


@dataclass(frozen=True)
class SteeringVector:
    """Per-frequency look direction: (freq, mic) complex.

    ``mode`` records the normalization: "unit" for unit Euclidean norm per
    frequency, "reference" for a first component pinned to exactly 1.  In
    both modes the reference-channel component is real and non-negative.
    """

    values: np.ndarray
    mode: str = "unit"

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.complex128)
        if arr.ndim != 2:
            raise ValidationError(
                f"steering vector must be (freq, mic), got ndim={arr.ndim}"
            )
        if self.mode not in STEERING_MODES:
            raise ValidationError(
                f"steering mode must be one of {STEERING_MODES}, got {self.mode!r}"
            )
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise ValidationError("steering vector contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def num_mics(self) -> int:
        return self.values.shape[1]


def irm(speech: ComplexSpectrogram, noise: ComplexSpectrogram) -> np.ndarray:
    """Ideal ratio mask |S|/(|S|+|N|) on the reference channel, (freq, time).

    Bins where both images vanish get 0.5 (no evidence either way).
    """
    s = np.abs(speech.data[:, :, REFERENCE_CHANNEL])
    n = np.abs(noise.data[:, :, REFERENCE_CHANNEL])
    if s.shape != n.shape:
        raise ValidationError(
            f"speech grid {s.shape} does not match noise grid {n.shape}"
        )
    total = s + n
    mask = np.full(s.shape, 0.5)
    active = total > 0.0
    mask[active] = s[active] / total[active]
    return mask


def validate_mask(mask: np.ndarray, spec: ComplexSpectrogram) -> np.ndarray:
    """Check a (freq, time) weighting against a spectrogram's grid."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != spec.data.shape[:2]:
        raise ValidationError(
            f"mask grid {mask.shape} does not match spectrogram grid "
            f"{spec.data.shape[:2]}"
        )
    if not np.all(np.isfinite(mask)):
        raise ValidationError("mask contains non-finite values")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise ValidationError(
            f"mask values must lie in [0, 1], got range "
            f"[{mask.min()}, {mask.max()}]"
        )
    return mask


def spatial_covariance(
    mixture: ComplexSpectrogram, mask: np.ndarray
) -> np.ndarray:
    """Mask-weighted spatial covariance per frequency, (freq, mic, mic).

    ``Φ_f = Σ_t m_{f,t}·X_{f,t}X_{f,t}^H / max(Σ_t m_{f,t}, 1e-8)``,
    symmetrized to be exactly Hermitian.
    """
    mask = validate_mask(mask, mixture)
    x = mixture.data
    weighted = np.einsum("ft,ftp,ftq->fpq", mask, x, np.conj(x))
    denom = np.maximum(mask.sum(axis=1), MASK_FLOOR)
    phi = weighted / denom[:, None, None]
    return 0.5 * (phi + np.conj(np.swapaxes(phi, 1, 2)))


def _principal_eigenvector(mat: np.ndarray, freq_index: int) -> np.ndarray:
    """Dominant eigenvector of one Hermitian PSD matrix by power iteration.

    Starts from the first canonical basis vector so exact ties (such as a
    scaled identity) resolve deterministically to that direction; if the
    start lies in the null space, later basis directions are tried in
    order.
    """
    p = mat.shape[0]
    if not np.any(mat != 0.0):
        raise DegenerateSteeringError(
            f"zero covariance matrix at frequency {freq_index}: "
            "no steering direction exists"
        )
    vec = None
    for start in range(p):
        candidate = np.zeros(p, dtype=np.complex128)
        candidate[start] = 1.0
        if np.linalg.norm(mat @ candidate) > 0.0:
            vec = candidate
            break
    if vec is None:
        raise DegenerateSteeringError(
            f"covariance at frequency {freq_index} annihilates every "
            "canonical direction"
        )
    for _ in range(POWER_ITERATIONS):
        nxt = mat @ vec
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            raise DegenerateSteeringError(
                f"power iteration collapsed at frequency {freq_index}"
            )
        nxt = nxt / norm
        # Compare directions modulo sign so a negative dominant eigenvalue
        # (possible only through rounding; inputs are PSD) still converges.
        if min(np.linalg.norm(nxt - vec), np.linalg.norm(nxt + vec)) < POWER_TOLERANCE:
            vec = nxt
            break
        vec = nxt
    return vec


def _rotate_reference_real(values: np.ndarray) -> np.ndarray:
    """Multiply by a unit phase so the reference component is real ≥ 0.

    If the reference component is numerically zero, the first component of
    meaningful magnitude sets the phase instead, keeping the result
    deterministic.
    """
    out = values.copy()
    for f in range(out.shape[0]):
        row = out[f]
        pivot_idx = REFERENCE_CHANNEL
        if abs(row[pivot_idx]) < 1e-12 * np.linalg.norm(row):
            pivot_idx = int(np.argmax(np.abs(row)))
        pivot = row[pivot_idx]
        if abs(pivot) > 0.0:
            rotated = row * (np.conj(pivot) / abs(pivot))
            # z·conj(z)/|z| is exactly |z|; write that value directly so the
            # pivot component carries no rounding residue in its imaginary
            # part.
            rotated[pivot_idx] = abs(pivot)
            out[f] = rotated
    return out


def noise_compensated_speech_covariance(
    phi_s: np.ndarray, phi_n: np.ndarray
) -> np.ndarray:
    """Speech covariance with the noise estimate subtracted, kept PSD.

    Mask-weighted mixture statistics contaminate the speech covariance
    with noise energy, which biases its principal eigenvector away from
    the speech direction wherever the per-bin SNR is poor.  Subtracting
    the noise covariance estimate removes that bias to first order.  The
    difference can be indefinite, so each matrix is shifted by
    ``trace(Φ_n)·I`` — an upper bound on the magnitude of any negative
    eigenvalue of the difference — which restores positive
    semidefiniteness without moving any eigenvector: the dominant
    direction of the result is the algebraically largest eigenvalue's
    direction of the difference, i.e. the speech subspace when one
    exists.
    """
    phi_s = np.asarray(phi_s, dtype=np.complex128)
    phi_n = np.asarray(phi_n, dtype=np.complex128)
    if phi_s.shape != phi_n.shape or phi_s.ndim != 3:
        raise ValidationError(
            f"covariance stacks must share a (freq, mic, mic) shape, got "
            f"{phi_s.shape} and {phi_n.shape}"
        )
    shift = np.trace(phi_n, axis1=1, axis2=2).real
    p = phi_s.shape[1]
    return phi_s - phi_n + shift[:, None, None] * np.eye(p, dtype=np.complex128)


def steering_from_covariance(phi_s: np.ndarray) -> SteeringVector:
    """Principal eigenvector per frequency as a unit-norm steering vector."""
    phi_s = np.asarray(phi_s, dtype=np.complex128)
    if phi_s.ndim != 3 or phi_s.shape[1] != phi_s.shape[2]:
        raise ValidationError(
            f"covariance must be (freq, mic, mic), got {phi_s.shape}"
        )
    vectors = np.empty(phi_s.shape[:2], dtype=np.complex128)
    for f in range(phi_s.shape[0]):
        vectors[f] = _principal_eigenvector(phi_s[f], f)
    return SteeringVector(_rotate_reference_real(vectors), mode="unit")


def reference_normalize(steering: SteeringVector) -> SteeringVector:
    """Rescale each frequency's vector so the reference component is 1.

    With the distortionless constraint this pins the beamformer to unit
    gain toward the speech image on the reference channel.
    """
    values = steering.values
    ref = values[:, REFERENCE_CHANNEL]
    norms = np.linalg.norm(values, axis=1)
    weak = np.abs(ref) < 1e-8 * norms
    if np.any(weak):
        f = int(np.nonzero(weak)[0][0])
        raise DegenerateSteeringError(
            f"steering at frequency {f} has a vanishing reference component; "
            "reference normalization is undefined"
        )
    return SteeringVector(values / ref[:, None], mode="reference")


def mvdr_weights(phi_n: np.ndarray, steering: SteeringVector) -> np.ndarray:
    """Distortionless minimum-variance weights per frequency, (freq, mic).

    The noise covariance is diagonally loaded with ``1e-6·trace/P`` before
    the solve; the result satisfies ``w^H c = 1`` at machine precision.
    """
    phi_n = np.asarray(phi_n, dtype=np.complex128)
    if phi_n.ndim != 3 or phi_n.shape[1] != phi_n.shape[2]:
        raise ValidationError(
            f"covariance must be (freq, mic, mic), got {phi_n.shape}"
        )
    c = steering.values
    if c.shape != phi_n.shape[:2]:
        raise ValidationError(
            f"steering grid {c.shape} does not match covariance grid "
            f"{phi_n.shape[:2]}"
        )
    p = phi_n.shape[1]
    eye = np.eye(p, dtype=np.complex128)
    weights = np.empty_like(c)
    for f in range(phi_n.shape[0]):
        trace = np.trace(phi_n[f]).real
        loaded = phi_n[f] + (DIAGONAL_LOADING * trace / p) * eye
        try:
            solved = np.linalg.solve(loaded, c[f])
        except np.linalg.LinAlgError as exc:
            raise SolverError(
                f"noise covariance at frequency {f} is singular after "
                f"diagonal loading: {exc}"
            ) from exc
        denom = np.vdot(c[f], solved)
        if not np.isfinite(denom) or abs(denom) < 1e-300:
            raise SolverError(
                f"distortionless normalization degenerate at frequency {f} "
                f"(c^H Φ⁻¹ c = {denom})"
            )
        weights[f] = solved / denom
    return weights


def apply_utterance_beamformer(
    weights: np.ndarray, mixture: ComplexSpectrogram
) -> ComplexSpectrogram:
    """Apply one weight vector per frequency to every frame: ``w_f^H X_{f,t}``."""
    weights = np.asarray(weights, dtype=np.complex128)
    if weights.shape != (mixture.data.shape[0], mixture.data.shape[2]):
        raise ValidationError(
            f"weights grid {weights.shape} does not match spectrogram "
            f"(freq, channel) grid "
            f"{(mixture.data.shape[0], mixture.data.shape[2])}"
        )
    broadcast = np.broadcast_to(
        weights[:, None, :], mixture.data.shape
    )
    return filter_and_sum(broadcast, mixture)


def oracle_mvdr_enhance(
    mixture: ComplexSpectrogram,
    speech: ComplexSpectrogram,
    noise: ComplexSpectrogram,
) -> ComplexSpectrogram:
    """Full oracle pipeline: IRM → covariances → steering → MVDR → apply.

    ``speech`` and ``noise`` are the clean source images used only to form
    the oracle mask; the beamformer itself sees the mixture.  The steering
    vector comes from the noise-compensated speech covariance and is
    reference-normalized, so the output aims at unit gain on the
    reference-channel speech image.
    """
    if speech.data.shape != mixture.data.shape or noise.data.shape != mixture.data.shape:
        raise ValidationError(
            "mixture, speech and noise spectrograms must share one shape, "
            f"got {mixture.data.shape}, {speech.data.shape}, {noise.data.shape}"
        )
    mask = irm(speech, noise)
    phi_s = spatial_covariance(mixture, mask)
    phi_n = spatial_covariance(mixture, 1.0 - mask)
    target = noise_compensated_speech_covariance(phi_s, phi_n)
    steering = reference_normalize(steering_from_covariance(target))
    weights = mvdr_weights(phi_n, steering)
    return apply_utterance_beamformer(weights, mixture)

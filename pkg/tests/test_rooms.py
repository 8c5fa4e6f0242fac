"""Tests for image-method RIRs and scene synthesis."""

import json

import numpy as np
import pytest

from beamkit.errors import (
    EmptySignalError,
    GenerationError,
    GeometryError,
    ManifestSchemaError,
    ValidationError,
)
from beamkit.rooms import (
    Absorption,
    ArraySpec,
    RoomSpec,
    SceneSampling,
    SceneSpec,
    absorption_from_rt60,
    build_corpus,
    default_max_order,
    doa_separation_deg,
    image_method_rir,
    read_manifest,
    rebuild_scene_audio,
    sample_scene,
    synthesize_mixture,
)
from beamkit.signals import WaveBuffer, noise_like, speech_like
from beamkit.wavio import read_wav

C = 343.0
FS = 16000


def make_scene(
    dims=(5.0, 4.0, 3.0),
    rt60=0.5,
    mic_center=(2.0, 2.0, 1.5),
    num_mics=1,
    speech=(3.0, 2.0, 1.5),
    noise=(1.0, 1.0, 1.0),
    snr_db=0.0,
):
    return SceneSpec(
        room=RoomSpec(dims, rt60=rt60),
        array=ArraySpec.uniform_linear(mic_center, num_mics=num_mics),
        speech_position=np.asarray(speech, dtype=float),
        noise_position=np.asarray(noise, dtype=float),
        snr_db=snr_db,
    )


class TestAbsorption:
    def test_sabine_hand_value(self):
        # V = 5*4*3 = 60, S = 2*(20 + 15 + 12) = 94:
        # alpha = 0.161 * 60 / (94 * 0.5) = 9.66 / 47.
        room = RoomSpec((5.0, 4.0, 3.0), rt60=0.5)
        alpha, anechoic = absorption_from_rt60(room)
        assert alpha == pytest.approx(9.66 / 47.0, rel=1e-14)
        assert alpha == pytest.approx(0.2055, abs=5e-5)
        assert not anechoic

    def test_long_rt60_limit(self):
        room = RoomSpec((5.0, 4.0, 3.0), rt60=1e9)
        alpha, anechoic = absorption_from_rt60(room)
        assert 0 < alpha < 1e-8
        assert not anechoic

    def test_short_rt60_clamps_to_anechoic(self):
        # alpha would be 9.66 / (94 * 0.01) ~ 10.3 > 1.
        room = RoomSpec((5.0, 4.0, 3.0), rt60=0.01)
        assert absorption_from_rt60(room) == Absorption(1.0, True)

    def test_invalid_room_rejected(self):
        with pytest.raises(GeometryError):
            RoomSpec((5.0, -4.0, 3.0), rt60=0.5)
        with pytest.raises(ValidationError):
            RoomSpec((5.0, 4.0, 3.0), rt60=0.0)


class TestImageMethod:
    def test_anechoic_direct_path(self):
        # rt60 = 0.05 s in this room implies alpha > 1, i.e. anechoic.
        # Source exactly 1 m from the single mic: one tap at
        # round(16000 / 343) = 47 with amplitude 1 / (4 pi).
        scene = make_scene(rt60=0.05)
        assert absorption_from_rt60(scene.room).anechoic
        rir = image_method_rir(scene, "speech")
        taps = rir.taps[0]
        assert taps[47] == pytest.approx(1.0 / (4.0 * np.pi), rel=1e-12)
        other = np.sum(np.abs(taps)) - np.abs(taps[47])
        assert other == 0.0

    def test_max_order_zero_is_direct_path_regardless_of_alpha(self):
        scene = make_scene(rt60=0.5, num_mics=3)
        rir = image_method_rir(scene, "speech", max_order=0)
        for p in range(3):
            d = np.linalg.norm(scene.array.mic_positions[p] - scene.speech_position)
            idx = int(round(d / C * FS))
            assert rir.taps[p, idx] == pytest.approx(1.0 / (4 * np.pi * d), rel=1e-12)
            assert np.sum(rir.taps[p] != 0.0) == 1

    def test_symmetric_mics_get_identical_rirs(self):
        # Room symmetric about x = 3 with the array centered there; a source
        # on that plane is mirrored onto itself, so the first and last mics
        # (mirror images of each other) must see identical RIRs.
        scene = SceneSpec(
            room=RoomSpec((6.0, 4.0, 3.0), rt60=0.3),
            array=ArraySpec.uniform_linear((3.0, 1.7, 1.5), num_mics=9),
            speech_position=np.array([3.0, 2.9, 1.8]),
            noise_position=np.array([1.0, 1.0, 1.0]),
            snr_db=0.0,
        )
        rir = image_method_rir(scene, "speech", max_order=6)
        np.testing.assert_allclose(rir.taps[0], rir.taps[8], atol=1e-12, rtol=0)
        np.testing.assert_allclose(rir.taps[1], rir.taps[7], atol=1e-12, rtol=0)

    def test_mirrored_scene_reverses_mics(self):
        # Reflecting the source across the array's perpendicular-bisector
        # plane (x = room_length / 2, where the array is centered) maps mic p
        # onto mic P-1-p and leaves the room invariant, so the mirrored
        # scene's RIRs are the original's in reversed mic order.
        room = RoomSpec((6.0, 4.0, 3.0), rt60=0.3)
        array = ArraySpec.uniform_linear((3.0, 1.7, 1.5), num_mics=5)
        base = dict(room=room, array=array, noise_position=np.array([3.0, 3.0, 2.0]), snr_db=0.0)
        scene = SceneSpec(speech_position=np.array([2.2, 2.9, 1.8]), **base)
        mirrored = SceneSpec(speech_position=np.array([3.8, 2.9, 1.8]), **base)
        rir = image_method_rir(scene, "speech", max_order=8)
        rir_m = image_method_rir(mirrored, "speech", max_order=8)
        np.testing.assert_allclose(rir_m.taps, rir.taps[::-1], atol=1e-10, rtol=0)

    def test_leading_tap_is_direct_path(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            scene = sample_scene(rng)
            rir = image_method_rir(scene, "noise", max_order=8)
            d = np.linalg.norm(
                scene.array.mic_positions - scene.noise_position, axis=1
            )
            for p in range(rir.num_mics):
                first = int(np.flatnonzero(rir.taps[p])[0])
                assert first == int(round(d[p] / C * FS))

    def test_rir_length_follows_rt60(self):
        scene = make_scene(rt60=0.25)
        rir = image_method_rir(scene, "speech")
        assert rir.num_taps == int(np.ceil(0.25 * FS))

    def test_energy_decay_on_average(self):
        # Average (per-scene-normalized) energy in consecutive 10 ms windows
        # after the direct path must be non-increasing for absorptive walls.
        rng = np.random.default_rng(22)
        cfg = SceneSampling(rt60_range=(0.3, 0.5))
        width = 160
        num_windows = 8
        profiles = []
        for _ in range(20):
            scene = sample_scene(rng, cfg)
            assert not absorption_from_rt60(scene.room).anechoic
            taps = image_method_rir(scene, "speech", max_order=10).taps[0]
            start = int(np.flatnonzero(taps)[0])
            windows = [
                np.sum(taps[start + w * width : start + (w + 1) * width] ** 2)
                for w in range(num_windows)
            ]
            profiles.append(np.array(windows) / windows[0])
        avg = np.mean(profiles, axis=0)
        assert np.all(np.diff(avg) <= 1e-12)

    def test_sinc_interpolation_conserves_pulse(self):
        scene = make_scene(rt60=0.05)  # anechoic, single mic 1 m away
        rir = image_method_rir(scene, "speech", fractional_delay="sinc8")
        taps = rir.taps[0]
        # The windowed sinc spreads the tap but keeps its mass near 1/(4 pi)
        # and its center of energy at the true fractional delay.
        assert np.sum(taps) == pytest.approx(1.0 / (4 * np.pi), rel=1e-2)
        peak = int(np.argmax(np.abs(taps)))
        assert peak in (46, 47)
        assert np.sum(np.abs(taps[:40])) == 0.0

    def test_source_on_wall_rejected(self):
        with pytest.raises(GeometryError):
            make_scene(speech=(0.0, 2.0, 1.5))

    def test_source_outside_rejected(self):
        with pytest.raises(GeometryError):
            make_scene(noise=(6.0, 2.0, 1.5))

    def test_negative_max_order_rejected(self):
        with pytest.raises(ValidationError):
            image_method_rir(make_scene(), "speech", max_order=-1)

    def test_source_on_mic_rejected(self):
        scene = make_scene(speech=(2.0, 2.0, 1.5))
        with pytest.raises(GeometryError):
            image_method_rir(scene, "speech")

    def test_default_max_order_bounded(self):
        assert default_max_order(RoomSpec((3.0, 3.0, 2.5), rt60=0.7)) == 30
        # ceil(343 * 0.05 / 3) + 1 = ceil(5.717) + 1 = 7
        assert default_max_order(RoomSpec((10.0, 10.0, 3.0), rt60=0.05)) == 7


class TestSynthesizeMixture:
    def setup_method(self):
        self.rng = np.random.default_rng(31)
        self.scene = make_scene(num_mics=3, rt60=0.2, snr_db=0.0)

    def test_additivity_is_bit_exact(self):
        speech = speech_like(0.5, FS, self.rng)
        noise = noise_like(0.5, FS, self.rng)
        mix, sp, nz = synthesize_mixture(speech, noise, self.scene, max_order=4)
        assert np.all(mix.data - sp.data - nz.data == 0.0)
        assert mix.num_channels == 3
        assert mix.num_samples == speech.num_samples

    @pytest.mark.parametrize("snr_db", [-6.0, 0.0, 4.0])
    def test_snr_contract_on_reference_channel(self, snr_db):
        scene = make_scene(num_mics=3, rt60=0.2, snr_db=snr_db)
        speech = speech_like(0.5, FS, self.rng)
        noise = noise_like(0.5, FS, self.rng)
        _, sp, nz = synthesize_mixture(speech, noise, scene, max_order=4)
        measured = 10 * np.log10(np.sum(sp.data[0] ** 2) / np.sum(nz.data[0] ** 2))
        assert measured == pytest.approx(snr_db, abs=1e-6)

    def test_silent_noise_with_flag_gives_pure_speech(self):
        speech = speech_like(0.5, FS, self.rng)
        silent = WaveBuffer(np.zeros(speech.num_samples), FS)
        mix, sp, nz = synthesize_mixture(
            speech, silent, self.scene, max_order=4, allow_silent_noise=True
        )
        np.testing.assert_array_equal(mix.data, sp.data)
        np.testing.assert_array_equal(nz.data, 0.0)

    def test_silent_noise_without_flag_rejected(self):
        speech = speech_like(0.5, FS, self.rng)
        silent = WaveBuffer(np.zeros(speech.num_samples), FS)
        with pytest.raises(EmptySignalError):
            synthesize_mixture(speech, silent, self.scene, max_order=4)

    def test_zero_speech_rejected(self):
        silent = WaveBuffer(np.zeros(8000), FS)
        noise = noise_like(0.5, FS, self.rng)
        with pytest.raises(EmptySignalError):
            synthesize_mixture(silent, noise, self.scene, max_order=4)

    def test_rate_mismatch_rejected(self):
        speech = speech_like(0.5, FS, self.rng)
        noise = noise_like(0.5, 8000, self.rng)
        with pytest.raises(ValidationError):
            synthesize_mixture(speech, noise, self.scene)


class TestSampleScene:
    def test_fixed_seed_is_deterministic(self):
        a = sample_scene(np.random.default_rng(77))
        b = sample_scene(np.random.default_rng(77))
        assert a.room.dimensions == b.room.dimensions
        assert a.room.rt60 == b.room.rt60
        np.testing.assert_array_equal(a.array.mic_positions, b.array.mic_positions)
        np.testing.assert_array_equal(a.speech_position, b.speech_position)
        np.testing.assert_array_equal(a.noise_position, b.noise_position)
        assert a.snr_db == b.snr_db

    def test_constraints_hold_on_every_draw(self):
        rng = np.random.default_rng(78)
        cfg = SceneSampling()
        grid = np.asarray(cfg.source_distances)
        for _ in range(300):
            s = sample_scene(rng, cfg)
            (lx, ly, lz) = s.room.dimensions
            assert 3.0 <= lx <= 10.0 and 3.0 <= ly <= 10.0 and 2.5 <= lz <= 3.0
            assert 0.05 <= s.room.rt60 <= 0.7
            assert s.array.num_mics == 9
            spacing = np.diff(s.array.mic_positions[:, 0])
            np.testing.assert_allclose(spacing, 0.04, atol=1e-12)
            dims = np.asarray(s.room.dimensions)
            assert np.all(s.array.mic_positions > 0.5 - 1e-9)
            assert np.all(s.array.mic_positions < dims - (0.5 - 1e-9))
            center = s.array.center
            for pos in (s.speech_position, s.noise_position):
                assert np.all(pos > 0.1 - 1e-12) and np.all(pos < dims - (0.1 - 1e-12))
                dist = np.linalg.norm(pos - center)
                assert np.min(np.abs(grid - dist)) < 1e-9
            assert doa_separation_deg(s) >= 5.0 - 1e-9
            assert s.snr_db in cfg.snr_grid_db

    def test_snr_histogram_covers_grid(self):
        rng = np.random.default_rng(79)
        seen = {sample_scene(rng).snr_db for _ in range(2000)}
        assert seen == {-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0}

    def test_budget_exhaustion_raises(self):
        cfg = SceneSampling(source_distances=(50.0,), rejection_budget=200)
        with pytest.raises(GenerationError):
            sample_scene(np.random.default_rng(80), cfg)


class TestCorpus:
    CFG = SceneSampling(rt60_range=(0.15, 0.3))

    def test_count_zero_gives_empty_manifest(self, tmp_path):
        path = build_corpus(tmp_path / "c0", count=0, master_seed=1, sampling=self.CFG)
        header, scenes = read_manifest(path)
        assert header["count"] == 0
        assert scenes == []
        assert list((tmp_path / "c0" / "audio").iterdir()) == []

    def test_rebuild_is_byte_identical(self, tmp_path):
        kwargs = dict(count=3, master_seed=42, sampling=self.CFG, duration=0.5, max_order=4)
        p1 = build_corpus(tmp_path / "a", **kwargs)
        p2 = build_corpus(tmp_path / "b", **kwargs)
        assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (
            tmp_path / "b" / "manifest.jsonl"
        ).read_bytes()
        _, scenes = read_manifest(p1)
        assert len(scenes) == 3
        for rec in scenes:
            for key in ("mixture_path", "target_path"):
                b1 = (tmp_path / "a" / rec[key]).read_bytes()
                b2 = (tmp_path / "b" / rec[key]).read_bytes()
                assert b1 == b2

    def test_total_duration_arithmetic(self, tmp_path):
        path = build_corpus(
            tmp_path / "d", count=5, master_seed=7, sampling=self.CFG, duration=2.0, max_order=2
        )
        _, scenes = read_manifest(path)
        total = sum(rec["num_samples"] for rec in scenes) / 16000
        assert total == pytest.approx(5 * 2.0)

    def test_regeneration_from_manifest_seed(self, tmp_path):
        out = tmp_path / "e"
        path = build_corpus(
            out, count=2, master_seed=9, sampling=self.CFG, duration=0.5, max_order=4
        )
        header, scenes = read_manifest(path)
        rec = scenes[1]
        scene, mixture, speech_img, _ = rebuild_scene_audio(rec, header)
        assert scene.snr_db == rec["snr_db"]
        on_disk = read_wav(out / rec["mixture_path"])
        assert np.max(np.abs(on_disk.data - mixture.data.astype(np.float32))) == 0.0
        target = read_wav(out / rec["target_path"])
        assert np.max(np.abs(target.data[0] - speech_img.data[0].astype(np.float32))) == 0.0

    def test_schema_version_mismatch_rejected(self, tmp_path):
        path = build_corpus(tmp_path / "f", count=0, master_seed=1, sampling=self.CFG)
        lines = open(path).read().splitlines()
        header = json.loads(lines[0])
        header["schema_version"] = 999
        with open(path, "w") as fh:
            fh.write(json.dumps(header) + "\n")
        with pytest.raises(ManifestSchemaError, match="999"):
            read_manifest(path)

    def test_empty_pool_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            build_corpus(tmp_path / "g", count=1, master_seed=1, speech_pool=())

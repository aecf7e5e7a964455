import math

import numpy as np
import pytest

from audiocert import audio_io, transforms as tr
from audiocert.errors import AssetError, ConfigError
from audiocert.types import AudioClip

SR = 16000

# Attenuation regression values measured from this implementation
# (4th-order Butterworth cascades via bilinear transform): steady-state RMS
# ratio of a tone through a fixed filter, skipping the 2000-sample transient.
LP2750_AT_5500 = -39.548
LP2750_AT_440 = 0.0
HP750_AT_200 = -46.157
HP750_AT_3000 = 0.0
BP1000_W1_AT_150 = -27.275
BP1000_W1_AT_1000 = -0.014


def steady_attenuation_db(spec, theta, freq):
    clip = audio_io.tone(freq, 0.5, SR)
    out = tr.apply(spec, clip, theta)
    num = np.sqrt((out.samples[2000:] ** 2).mean())
    den = np.sqrt((clip.samples[2000:] ** 2).mean())
    return 20.0 * math.log10(num / den)


@pytest.fixture(scope="module")
def noise_bank():
    bed = AudioClip(np.random.default_rng(0).normal(0.0, 0.1, SR * 2), SR)
    return tr.AssetBank([bed])


class TestGain:
    def test_rms_scales_exactly(self, tone_clip):
        spec = tr.gain(-10, 20)
        for seed in range(5):
            theta = tr.sample_params(spec, seed)
            out = tr.apply(spec, tone_clip, theta)
            expect = 10.0 ** (theta["gain_db"] / 20.0)
            got = np.sqrt((out.samples**2).mean()) / np.sqrt((tone_clip.samples**2).mean())
            assert got == pytest.approx(expect, rel=1e-6)


class TestFilters:
    def test_low_pass_regression(self):
        spec = tr.low_pass(2500, 3000)
        theta = {"cutoff_hz": 2750.0}
        assert steady_attenuation_db(spec, theta, 5500.0) == pytest.approx(LP2750_AT_5500, abs=0.2)
        assert steady_attenuation_db(spec, theta, 440.0) == pytest.approx(LP2750_AT_440, abs=0.05)

    def test_high_pass_regression(self):
        spec = tr.high_pass(500, 1000)
        theta = {"cutoff_hz": 750.0}
        assert steady_attenuation_db(spec, theta, 200.0) == pytest.approx(HP750_AT_200, abs=0.2)
        assert steady_attenuation_db(spec, theta, 3000.0) == pytest.approx(HP750_AT_3000, abs=0.05)

    def test_band_pass_regression(self):
        spec = tr.band_pass((200, 4000), (0.5, 1.99))
        theta = {"center_hz": 1000.0, "width_ratio": 1.0}
        assert steady_attenuation_db(spec, theta, 150.0) == pytest.approx(BP1000_W1_AT_150, abs=0.2)
        assert steady_attenuation_db(spec, theta, 1000.0) == pytest.approx(BP1000_W1_AT_1000, abs=0.05)

    def test_band_edges_from_center_and_ratio(self):
        # width_ratio b puts edges at center*(1 -+ b/2); a tone outside both
        # edges is strongly attenuated, inside passes
        spec = tr.band_pass((1000, 1000), (1.0, 1.0))
        theta = {"center_hz": 1000.0, "width_ratio": 1.0}
        inside = steady_attenuation_db(spec, theta, 1000.0)
        outside = steady_attenuation_db(spec, theta, 4000.0)
        assert inside > -1.0
        assert outside < -20.0

    def test_rejects_edges_beyond_nyquist(self, tone_clip):
        spec = tr.low_pass(2500, 3000)
        with pytest.raises(ConfigError):
            tr.apply(spec, tone_clip, {"cutoff_hz": 9000.0})
        bp = tr.band_pass((200, 4001), (0.5, 2.0))
        with pytest.raises(ConfigError):
            tr.apply(bp, tone_clip, {"center_hz": 4001.0, "width_ratio": 2.0})


class TestNoise:
    def test_gaussian_noise_is_seeded(self, tone_clip):
        spec = tr.gaussian_noise(0.01, 0.03)
        theta = tr.sample_params(spec, 7)
        a = tr.apply(spec, tone_clip, theta)
        b = tr.apply(spec, tone_clip, theta)
        assert np.array_equal(a.samples, b.samples)
        other = dict(theta, noise_seed=theta["noise_seed"] + 1)
        c = tr.apply(spec, tone_clip, other)
        assert not np.array_equal(a.samples, c.samples)
        sigma = np.std(a.samples - tone_clip.samples)
        assert sigma == pytest.approx(theta["sigma"], rel=0.05)

    def test_background_noise_hits_target_snr(self, tone_clip, noise_bank):
        spec = tr.background_noise(noise_bank, 15, 30)
        worst = 0.0
        for i in range(100):
            theta = tr.sample_params(spec, (11, i))
            out = tr.apply(spec, tone_clip, theta)
            mixed = out.samples - tone_clip.samples
            snr = 10.0 * math.log10((tone_clip.samples**2).mean() / (mixed**2).mean())
            worst = max(worst, abs(snr - theta["snr_db"]))
        assert worst <= 0.1

    def test_short_bed_loops(self, tone_clip):
        bed = AudioClip(np.sin(np.arange(900) / 7.0) * 0.1, SR)  # shorter than the clip
        spec = tr.background_noise(tr.AssetBank([bed]), 20, 20)
        theta = tr.sample_params(spec, 3)
        out = tr.apply(spec, tone_clip, theta)
        assert len(out) == len(tone_clip)
        mixed = out.samples - tone_clip.samples
        snr = 10.0 * math.log10((tone_clip.samples**2).mean() / (mixed**2).mean())
        assert snr == pytest.approx(theta["snr_db"], abs=0.1)

    def test_silent_input_rejected(self, noise_bank):
        spec = tr.background_noise(noise_bank, 15, 30)
        silent = AudioClip(np.zeros(SR // 2), SR)
        with pytest.raises(ConfigError):
            tr.apply(spec, silent, tr.sample_params(spec, 1))

    def test_silent_bed_rejected(self, tone_clip):
        bank = tr.AssetBank([AudioClip(np.zeros(SR), SR)])
        spec = tr.background_noise(bank, 15, 30)
        with pytest.raises(AssetError):
            tr.apply(spec, tone_clip, tr.sample_params(spec, 1))


class TestTimeStretch:
    @pytest.mark.parametrize("rate", [0.75, 0.9, 1.0, 1.2, 1.35])
    def test_output_length_exact(self, tone_clip, rate):
        out = tr.apply(tr.time_stretch(0.75, 1.35), tone_clip, {"rate": rate})
        assert len(out) == math.ceil(len(tone_clip) / rate)

    def test_preserves_pitch(self):
        clip = audio_io.tone(440.0, 1.0, SR)
        out = tr.apply(tr.time_stretch(0.8, 0.8), clip, {"rate": 0.8})
        mags = np.abs(np.fft.rfft(out.samples * np.hanning(len(out))))
        f = np.fft.rfftfreq(len(out), 1 / SR)[np.argmax(mags)]
        assert f == pytest.approx(440.0, abs=3.0)

    def test_tiny_clip_falls_back(self):
        clip = AudioClip(np.sin(np.arange(300) / 5.0), SR)  # < one 40 ms window
        out = tr.apply(tr.time_stretch(1.2, 1.2), clip, {"rate": 1.2})
        assert len(out) == math.ceil(300 / 1.2)

    def test_deterministic(self, tone_clip):
        a = tr.apply(tr.time_stretch(1.1, 1.1), tone_clip, {"rate": 1.1})
        b = tr.apply(tr.time_stretch(1.1, 1.1), tone_clip, {"rate": 1.1})
        assert np.array_equal(a.samples, b.samples)


class TestPitchShift:
    @pytest.mark.parametrize("st", [-6.0, 6.0])
    def test_moves_fundamental_preserves_length(self, st):
        clip = audio_io.tone(440.0, 0.5, SR)
        out = tr.apply(tr.pitch_shift(-6, 6), clip, {"semitones": st})
        assert len(out) == len(clip)
        mags = np.abs(np.fft.rfft(out.samples * np.hanning(len(out))))
        f = np.fft.rfftfreq(len(out), 1 / SR)[np.argmax(mags)]
        assert f == pytest.approx(440.0 * 2.0 ** (st / 12.0), abs=5.0)


class TestRir:
    def test_truncates_and_normalizes_peak(self, tone_clip):
        ir = np.zeros(800)
        ir[0] = 1.0
        ir[400] = 0.6
        bank = tr.AssetBank([AudioClip(ir, SR)])
        out = tr.apply(tr.rir(bank), tone_clip, {"asset_index": 0})
        assert len(out) == len(tone_clip)
        assert np.abs(out.samples).max() == pytest.approx(np.abs(tone_clip.samples).max())

    def test_identity_impulse(self, tone_clip):
        ir = np.zeros(16)
        ir[0] = 0.5
        bank = tr.AssetBank([AudioClip(ir, SR)])
        out = tr.apply(tr.rir(bank), tone_clip, {"asset_index": 0})
        assert np.allclose(out.samples, tone_clip.samples, atol=1e-12)


class TestComposite:
    def test_applies_children_in_order(self, tone_clip, noise_bank):
        spec = tr.composite(tr.gain(-10, 10), tr.low_pass(2500, 3000),
                            tr.gaussian_noise(0.01, 0.03))
        theta = tr.sample_params(spec, 99)
        assert [set(t) for t in theta["children"]] == [
            {"gain_db"}, {"cutoff_hz"}, {"sigma", "noise_seed"}]
        out = tr.apply(spec, tone_clip, theta)
        # manual fold gives the identical result
        manual = tone_clip
        for child, ct in zip(spec.children, theta["children"]):
            manual = tr.apply(child, manual, ct)
        assert np.array_equal(out.samples, manual.samples)

    def test_empty_composite_rejected(self):
        with pytest.raises(ConfigError):
            tr.composite()


class TestSampling:
    def test_theta_reproducible_from_seed(self, noise_bank):
        spec = tr.composite(tr.gain(-10, 20), tr.background_noise(noise_bank, 15, 30))
        assert tr.sample_params(spec, (5, 2, 1)) == tr.sample_params(spec, (5, 2, 1))
        assert tr.sample_params(spec, (5, 2, 1)) != tr.sample_params(spec, (5, 2, 2))

    def test_ranges_respected(self):
        spec = tr.time_stretch(0.75, 1.35)
        for i in range(50):
            theta = tr.sample_params(spec, i)
            assert 0.75 <= theta["rate"] <= 1.35

    def test_bad_range_rejected(self):
        with pytest.raises(ConfigError):
            tr.gain(10, -10)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            tr.TransformSpec("reverb")

    def test_missing_assets_rejected(self):
        with pytest.raises(ConfigError):
            tr.TransformSpec(tr.BACKGROUND_NOISE, {"snr_db": (15.0, 30.0)})


class TestAssetBank:
    def test_from_manifest(self, tmp_path, tone_clip):
        audio_io.save_wav(tmp_path / "a.wav", tone_clip)
        audio_io.save_wav(tmp_path / "b.wav", audio_io.tone(100.0, 0.2, 8000))
        man = tmp_path / "assets.txt"
        man.write_text("a.wav\nb.wav\n", encoding="utf-8")
        bank = tr.AssetBank.from_manifest(man, 16000)
        assert len(bank) == 2
        assert bank.clip(1).rate == 16000  # resampled on load

    def test_empty_manifest_rejected(self, tmp_path):
        man = tmp_path / "assets.txt"
        man.write_text("# nothing here\n", encoding="utf-8")
        with pytest.raises(AssetError):
            tr.AssetBank.from_manifest(man, 16000)

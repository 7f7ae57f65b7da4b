import json

import numpy as np
import pytest

import bssgate


def test_version_and_rate():
    assert bssgate.__version__
    assert bssgate.SAMPLE_RATE == 16000


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    audio = rng.uniform(-0.5, 0.5, size=(2, 1600))
    path = tmp_path / "x.wav"
    assert bssgate.write_wav(str(path), audio) == 0
    back, rate = bssgate.read_wav(str(path))
    assert rate == 16000
    assert back.shape == (2, 1600)
    np.testing.assert_allclose(back, audio.astype(np.float32), atol=0)


def test_stft_interior_reconstruction():
    rng = np.random.default_rng(1)
    audio = rng.uniform(-1, 1, size=(1, 16000))
    rec = bssgate.stft_roundtrip(audio)
    interior = slice(320, 15680)
    err = np.sqrt(np.mean((rec[0, interior] - audio[0, interior]) ** 2) / np.mean(audio[0, interior] ** 2))
    assert err <= 1e-6


def test_scene_is_additive_and_seeded():
    a = bssgate.simulate_scene(2.0, seed=5, snr_db=10.0)
    b = bssgate.simulate_scene(2.0, seed=5, snr_db=10.0)
    assert a["mixture"].shape[0] == 2
    np.testing.assert_array_equal(a["mixture"], b["mixture"])
    np.testing.assert_allclose(a["mixture"], a["speech_image"] + a["noise_image"], atol=1e-12)


def test_bad_scene_key_names_the_field():
    with pytest.raises(bssgate.ValidationError, match="t6O"):
        bssgate.simulate_scene(1.0, t6O=0.2)


def test_stationary_gated_run_keeps_only_the_warmup_update():
    scene = bssgate.simulate_scene(4.0, seed=3, snr_db=20.0, source_angle_deg=90.0)
    frames = (scene["mixture"].shape[1] - 320) // 160 + 1
    out, stats = bssgate.run_stream(scene["mixture"], {"doa_source": "ground_truth"}, truth_labels=[3] * frames)
    assert out.shape == (scene["mixture"].shape[1],)
    assert stats["updates_triggered"] == 1
    assert stats["warmup_updates"] == 1


def test_metrics():
    rng = np.random.default_rng(2)
    ref = np.cumsum(rng.standard_normal(8000)) * 0.01
    assert bssgate.sdr(ref, ref) == 80.0
    assert bssgate.sdr(3.0 * ref + 0.01 * rng.standard_normal(8000), ref) > 20.0


def test_doa_feature_and_gcc():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(330)
    ch1, ch2 = x[3:323], x[0:320]  # ch2 lags ch1 by 3 samples
    feature = bssgate.doa_feature(ch1, ch2)
    assert len(feature) == 13
    assert int(np.argmax(feature)) == 6 + 3
    assert max(feature) == 1.0
    assert bssgate.gcc_class(ch1, ch2) in range(7)


def test_training_is_deterministic_and_predicts():
    features = np.zeros((70, 13))
    labels = [i % 7 for i in range(70)]
    for i, label in enumerate(labels):
        features[i, 2 * label] = 1.0
    m1, acc, _ = bssgate.fnn_train(features, labels, epochs=400, step=0.01, seed=4)
    m2, _, _ = bssgate.fnn_train(features, labels, epochs=400, step=0.01, seed=4)
    assert m1["weight_hash"] == m2["weight_hash"]
    assert acc == 1.0
    label, probs = bssgate.fnn_predict(m1, features[5])
    assert label == labels[5]
    assert abs(sum(probs) - 1.0) < 1e-12


def test_bench_report():
    report = bssgate.run_bench()
    assert report["subject"]["accounted_updates"] == 4
    assert report["ratio"] >= 37.0
    assert isinstance(report["real_time_ok"], bool)
    json.dumps(report)

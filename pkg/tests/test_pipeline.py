import numpy as np
import pytest

from wavedet import FeaturePipe, NoiseModel, layout_for_scales, make_chirp
from wavedet.rng import CHUNK
from wavedet.wavelet import concat_scales, dwt_details


def test_layout_for_scales(db5):
    layout = layout_for_scales(256, db5, (3, 4))
    assert layout.scales == (3, 4)
    assert layout.seg_lengths == (32, 16)
    assert layout.steady_starts == (10, 10)
    assert layout.source_length == 256
    with pytest.raises(ValueError):
        layout_for_scales(256, db5, (9,))
    with pytest.raises(ValueError):
        layout_for_scales(250, db5, (3,))


def test_transform_matches_direct_dwt(pipe34, db5, rng):
    x = rng.standard_normal((5, 256))
    F = pipe34.transform_batch(x)
    for i in range(5):
        direct = concat_scales(dwt_details(x[i], db5, 4), (3, 4))
        np.testing.assert_array_equal(F[i], direct.values)


def test_steady_batch_selects_mask(pipe34, rng):
    x = rng.standard_normal((4, 256))
    F = pipe34.transform_batch(x)
    S = pipe34.steady_batch(x)
    np.testing.assert_array_equal(S, F[:, pipe34.layout.steady_mask()])
    assert pipe34.steady_dim == S.shape[1] == 28


def test_template_steady(pipe34, pulse256):
    s = pipe34.template_steady(pulse256)
    d = pipe34.details_of(pulse256)
    np.testing.assert_array_equal(s, d.steady_values())
    assert np.linalg.norm(s) > 1.0


def test_noise_stream_is_chunk_invariant(pipe34, noise):
    # the same trial indices produce the same rows regardless of how many
    # trials are materialized in one call
    full = pipe34.noise_steady(noise, CHUNK + 50, seed=9)
    head = pipe34.noise_steady(noise, 30, seed=9)
    np.testing.assert_array_equal(full[:30], head)

    rows = np.empty_like(full)
    for start, stop, F in pipe34.iter_noise_steady(noise, CHUNK + 50, seed=9):
        rows[start:stop] = F
    np.testing.assert_array_equal(rows, full)


def test_obs_stream_scalar_and_vector_snr(pipe34, pulse256, noise):
    scalar = pipe34.obs_steady(pulse256, -5.0, noise, 8, seed=4)
    vector = pipe34.obs_steady(
        pulse256, np.full(8, -5.0), noise, 8, seed=4
    )
    np.testing.assert_array_equal(scalar, vector)
    with pytest.raises(ValueError):
        pipe34.obs_steady(pulse256, np.zeros(7), noise, 8, seed=4)


def test_obs_equals_noise_plus_scaled_template(pipe34, pulse256, noise):
    # the transform is linear, so features superpose exactly up to rounding
    obs = pipe34.obs_steady(pulse256, 0.0, noise, 16, seed=11)
    noi = pipe34.noise_steady(noise, 16, seed=11)
    tmpl = pipe34.template_steady(pulse256)
    np.testing.assert_allclose(obs, noi + tmpl, rtol=0, atol=1e-12)


def test_pipe_rejects_mismatched_layout(db5):
    layout = layout_for_scales(128, db5, (2,))
    with pytest.raises(ValueError):
        FeaturePipe(256, db5, layout)


def test_pipe_rejects_wrong_length_input(pipe34):
    with pytest.raises(ValueError):
        pipe34.transform_batch(np.zeros((2, 128)))


def test_pipe_rejects_wrong_template_length(pipe34):
    short = make_chirp(128)
    with pytest.raises(ValueError):
        pipe34.template_steady(short)

import numpy as np
import pytest

import bladepde as bp


def smooth(n=64):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    return 128 + 40 * np.cos(0.07 * x + 0.3) * np.sin(0.05 * y + 1.1) + 25 * np.cos(0.04 * (x + y))


def test_reference_keeps_mean():
    u = np.random.default_rng(0).uniform(0, 255, (32, 40))
    frames = bp.reference(u, "pm", steps=5)
    assert len(frames) == 6
    assert frames[0].shape == (32, 40)
    assert abs(frames[-1].mean() - u.mean()) < 1e-9 * u.mean()


def test_zero_bank_is_identity(tmp_path):
    u = smooth()
    bank = bp.zero_bank(footprint=3, orientations=4, strengths=2, coherences=1, calibrate=[u])
    assert bank.num_filters == 8
    out = bp.evolve(bank, u, 3, dt=0.5)
    assert np.array_equal(out[-1], u)
    bp.save_bank(tmp_path / "z.bfb", bank)
    assert np.array_equal(bp.load_bank(tmp_path / "z.bfb").taps, bank.taps)


def test_training_runs():
    u = smooth(64)
    frames, dt = bp.target_sequence(u, "tv", factor=2, subsample_m=10, steps=100)
    assert dt == pytest.approx(1.0)
    bank, curve = bp.train([frames], dt, iterations=20, footprint=3, orientations=4,
                           strengths=2, coherences=1)
    assert bank.taps.shape == (8, 3, 3)
    assert len(curve) > 0
    out = bp.evolve(bank, frames[0], 10, dt=dt)
    assert bp.psnr(out[-1], frames[-1]) > bp.psnr(frames[0], frames[-1])


def test_metrics_and_resampling():
    u = smooth()
    assert bp.psnr(u, u) == 999.0
    assert bp.ssim(u, u) == pytest.approx(1.0)
    z = np.zeros_like(u)
    assert np.allclose(bp.bicubic_resample(u, z, z), u)
    assert bp.lanczos_upscale(u[:16, :16], 4).shape == (64, 64)


def test_instability_error():
    u = smooth() + np.random.default_rng(1).normal(0, 20, (64, 64))
    with pytest.raises(bp.InstabilityError) as info:
        bp.reference(u, "tv", steps=50, dt=10.0)
    assert info.value.step >= 1


def test_chan_vese_two_regions():
    f = np.full((48, 64), 0.2)
    f[:, 32:] = 0.8
    phi, c1, c2 = bp.chan_vese(f, steps=200)
    assert sorted([c1, c2]) == pytest.approx([0.2, 0.8], abs=1e-3)
    left = phi[:, :31] >= 0
    right = phi[:, 33:] >= 0
    assert (left.all() and not right.any()) or (right.all() and not left.any())

"""Shared test utilities: synthetic speech surrogate and scene builders."""
import numpy as np
import scipy.signal

from dereverb.roomsim import render_scene, sample_room, white_noise
from dereverb.signals import TimeSignal
from dereverb.stft import Spectrogram, StftConfig


def speech_like(duration, fs=16000, seed=0):
    """Speech surrogate: noise-excited, piecewise-stationary formant filters
    under a syllabic envelope.

    Noise excitation keeps the signal linearly unpredictable beyond a few
    milliseconds (like real speech), so delayed linear prediction removes
    reverberation rather than the signal itself; sustained harmonic
    surrogates fail that property.
    """
    rng = np.random.default_rng(seed)
    n = int(duration * fs)
    segment = int(0.12 * fs)
    x = np.zeros(n)
    pos = 0
    while pos < n:
        length = min(segment, n - pos)
        a = np.array([1.0])
        for f in rng.uniform([300.0, 800.0, 1800.0], [800.0, 1800.0, 3200.0]):
            r = rng.uniform(0.94, 0.985)
            theta = 2 * np.pi * f / fs
            a = np.convolve(a, [1.0, -2 * r * np.cos(theta), r * r])
        drive = rng.standard_normal(length)
        x[pos:pos + length] = (scipy.signal.lfilter([1.0], a, drive)
                               * rng.uniform(0.2, 1.0))
        pos += length
    t = np.arange(n) / fs
    env = 0.5 * (1 + np.sin(2 * np.pi * 3.0 * t
                            + rng.uniform(0, 2 * np.pi))) ** 1.5 + 0.2
    x *= env
    x /= np.max(np.abs(x))
    return TimeSignal(0.5 * x, fs)


def make_scene(preset="A", seed=0, noise_kind="none", snr_db=10.0,
               duration=4.0, fs=16000):
    spec = sample_room(preset, seed, fs)
    clean = speech_like(duration, fs, seed=seed + 1000)
    noise = None
    if noise_kind == "wgn":
        noise = white_noise(len(clean) + fs, seed + 2000, fs)
    return render_scene(spec, clean, noise,
                        snr_db if noise is not None else None,
                        noise_seed=seed + 3000)


def random_spectrogram(n_frames, config=None, seed=0, sample_rate=16000,
                       scale=1.0):
    config = config or StftConfig()
    rng = np.random.default_rng(seed)
    shape = (n_frames, config.num_bins)
    values = scale * (rng.standard_normal(shape)
                      + 1j * rng.standard_normal(shape))
    length = (n_frames - 1) * config.hop + config.frame_len
    return Spectrogram(values, config, sample_rate, length)

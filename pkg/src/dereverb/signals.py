"""Time-domain signal containers, WAV file I/O and basic signal arithmetic.

Samples are kept as float64 with a nominal full scale of +/-1.0 regardless
of the on-disk encoding.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError

_PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class TimeSignal:
    """A single channel of sampled audio."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ArgumentError("samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ArgumentError("samples must be finite")
        if self.sample_rate <= 0:
            raise ArgumentError("sample_rate must be positive")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def power(self):
        """Mean-square power over the whole signal."""
        if len(self) == 0:
            return 0.0
        return float(np.mean(self.samples**2))


@dataclass(frozen=True)
class MultichannelTimeSignal:
    """An ordered set of equal-length channels at one sample rate."""

    channels: tuple

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise ArgumentError("at least one channel required")
        rate = channels[0].sample_rate
        length = len(channels[0])
        for ch in channels[1:]:
            if ch.sample_rate != rate:
                raise ArgumentError("channels must share one sample_rate")
            if len(ch) != length:
                raise ArgumentError("channels must share one length")
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_array(cls, array, sample_rate):
        """Build from a (channels, samples) array; 1-D arrays become mono."""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim == 1:
            array = array[None, :]
        if array.ndim != 2:
            raise ArgumentError("expected a 1-D or 2-D array")
        return cls(tuple(TimeSignal(row, sample_rate) for row in array))

    @property
    def sample_rate(self):
        return self.channels[0].sample_rate

    @property
    def num_channels(self):
        return len(self.channels)

    def __len__(self):
        return len(self.channels[0])

    def as_array(self):
        """(num_channels, num_samples) float64 array."""
        return np.stack([ch.samples for ch in self.channels])


def _round_half_away(values):
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def read_wav(path):
    """Read a PCM16 or IEEE float32 RIFF/WAVE file.

    PCM16 samples are scaled to [-1, 1) by division by 32768; float32
    samples pass through unchanged. Channel order is preserved.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"not a RIFF/WAVE file: {path}")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError("truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise IOError(f"truncated WAV data chunk in {path}")
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)
    if fmt is None or payload is None:
        raise IOError(f"missing fmt or data chunk in {path}")

    audio_format, num_channels, sample_rate, _, _, bits = fmt
    if num_channels < 1:
        raise FormatError("WAV file declares zero channels")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / _PCM16_SCALE
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(payload, dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise FormatError(
            f"unsupported WAV encoding (format={audio_format}, bits={bits})")
    if samples.size % num_channels != 0:
        raise IOError(f"WAV data not divisible by channel count in {path}")
    frames = samples.reshape(-1, num_channels)
    return MultichannelTimeSignal.from_array(frames.T, sample_rate)


def write_wav(signal, path, encoding="float32"):
    """Write a MultichannelTimeSignal as a RIFF/WAVE file.

    encoding "pcm16" clamps to [-1, 1) and rounds half away from zero;
    "float32" stores the samples directly.
    """
    array = signal.as_array()  # (Q, T)
    frames = array.T
    if encoding == "pcm16":
        ints = _round_half_away(frames * _PCM16_SCALE)
        ints = np.clip(ints, -32768, 32767)
        payload = ints.astype("<i2").tobytes()
        audio_format, bits = 1, 16
    elif encoding == "float32":
        payload = frames.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    else:
        raise ArgumentError(f"unknown encoding: {encoding}")

    num_channels = signal.num_channels
    rate = signal.sample_rate
    block_align = num_channels * bits // 8
    byte_rate = rate * block_align
    fmt_chunk = struct.pack("<HHIIHH", audio_format, num_channels, rate,
                            byte_rate, block_align, bits)
    pad = b"\x00" if len(payload) % 2 else b""
    riff_size = 4 + (8 + len(fmt_chunk)) + (8 + len(payload) + len(pad))
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", riff_size) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload + pad)


def convolve(signal, kernel):
    """Full linear convolution of two signals at the same sample rate."""
    if signal.sample_rate != kernel.sample_rate:
        raise ArgumentError("sample_rate mismatch in convolve")
    out = np.convolve(signal.samples, kernel.samples, mode="full")
    return TimeSignal(out, signal.sample_rate)


def scaled_noise_segment(clean, noise, snr_db, seed):
    """A random contiguous noise segment scaled to sit snr_db below clean.

    Powers are mean-square over the full segment length. Returns the scaled
    segment as a float64 array of len(clean).
    """
    if len(noise) < len(clean):
        raise ArgumentError("noise must be at least as long as clean")
    p_clean = clean.power
    if p_clean <= 0.0:
        raise ArgumentError("clean signal has zero power")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(noise) - len(clean), endpoint=True))
    segment = noise.samples[start:start + len(clean)]
    p_noise = float(np.mean(segment**2))
    if p_noise <= 0.0:
        raise ArgumentError("noise segment has zero power")
    gain = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return gain * segment


def mix_at_snr(clean, noise, snr_db, seed):
    """Add a seeded random segment of noise to clean at the requested SNR."""
    segment = scaled_noise_segment(clean, noise, snr_db, seed)
    return TimeSignal(clean.samples + segment, clean.sample_rate)

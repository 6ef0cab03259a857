"""Pluggable spectrogram denoisers and the external subprocess protocol.

All denoisers are shape-preserving, deterministic maps on complex
spectrograms. The external protocol exchanges spectrograms through the
PNPSPEC1 binary format so arbitrary programs can be attached.
"""
from __future__ import annotations

import shutil
import struct
import subprocess
import tempfile
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from .errors import ArgumentError, DenoiserError, ProtocolError
from .stft import Spectrogram

_MAGIC = b"PNPSPEC1"


@dataclass(frozen=True)
class DenoiserSpec:
    """Configuration for building a denoiser.

    kind: identity | soft_threshold | wiener | median2d | external.
    """

    kind: str = "identity"
    threshold: float = 0.5
    quantile: float = 0.3
    min_gain: float = 0.1
    half_frames: int = 1
    half_bins: int = 1
    command: tuple = ()
    workdir: str = None

    def __post_init__(self):
        if self.kind not in ("identity", "soft_threshold", "wiener",
                             "median2d", "external"):
            raise ArgumentError(f"unknown denoiser kind: {self.kind}")
        if self.kind == "soft_threshold" and self.threshold < 0:
            raise ArgumentError("threshold must be >= 0")
        if self.kind == "wiener":
            if not 0 < self.quantile < 1:
                raise ArgumentError("quantile must be in (0, 1)")
            if not 0 <= self.min_gain <= 1:
                raise ArgumentError("min_gain must be in [0, 1]")
        if self.kind == "median2d" and (self.half_frames < 0 or self.half_bins < 0):
            raise ArgumentError("median window half-sizes must be >= 0")
        if self.kind == "external" and not self.command:
            raise ArgumentError("external denoiser requires a command")


class IdentityDenoiser:
    def denoise(self, spec):
        return spec


class SoftThresholdDenoiser:
    """Magnitude shrinkage by a fraction of the median magnitude."""

    def __init__(self, threshold):
        if threshold < 0:
            raise ArgumentError("threshold must be >= 0")
        self.threshold = threshold

    def denoise(self, spec):
        values = spec.values
        mag = np.abs(values)
        median = float(np.median(mag)) if mag.size else 0.0
        new_mag = np.maximum(mag - self.threshold * median, 0.0)
        factor = np.divide(new_mag, mag, out=np.zeros_like(mag),
                           where=mag > 0)
        return spec.with_values(values * factor)


class WienerDenoiser:
    """Per-band spectral gain against a quantile noise-floor estimate."""

    def __init__(self, quantile, min_gain):
        if not 0 < quantile < 1:
            raise ArgumentError("quantile must be in (0, 1)")
        if not 0 <= min_gain <= 1:
            raise ArgumentError("min_gain must be in [0, 1]")
        self.quantile = quantile
        self.min_gain = min_gain

    def denoise(self, spec):
        power = np.abs(spec.values) ** 2
        floor = np.quantile(power, self.quantile, axis=0)  # per bin
        gain = np.maximum(1.0 - floor / np.maximum(power, floor),
                          self.min_gain)
        return spec.with_values(spec.values * gain)


class Median2dDenoiser:
    """2-D median smoothing of magnitudes with preserved phase."""

    def __init__(self, half_frames, half_bins):
        if half_frames < 0 or half_bins < 0:
            raise ArgumentError("median window half-sizes must be >= 0")
        self.half_frames = half_frames
        self.half_bins = half_bins

    def denoise(self, spec):
        mag = np.abs(spec.values)
        size = (2 * self.half_frames + 1, 2 * self.half_bins + 1)
        smoothed = scipy.ndimage.median_filter(mag, size=size, mode="nearest")
        return spec.with_values(smoothed * np.exp(1j * np.angle(spec.values)))


def write_pnpspec(spec, path):
    """Serialize a spectrogram in the PNPSPEC1 binary format.

    Layout: 8-byte ASCII magic; little-endian u32 N, K, sample_rate,
    reserved=0; then N*K entries frame-major, float32 real then imag.
    """
    n_frames, n_bins = spec.values.shape
    if n_frames == 0 or n_bins == 0:
        raise ProtocolError("cannot serialize an empty spectrogram")
    header = _MAGIC + struct.pack("<IIII", n_frames, n_bins,
                                  spec.sample_rate, 0)
    interleaved = np.empty((n_frames, n_bins, 2), dtype="<f4")
    interleaved[..., 0] = spec.values.real
    interleaved[..., 1] = spec.values.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(interleaved.tobytes())


def read_pnpspec(path):
    """Deserialize PNPSPEC1; returns (complex128 values, sample_rate)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 24 or data[:8] != _MAGIC:
        raise ProtocolError("malformed PNPSPEC1 header")
    n_frames, n_bins, sample_rate, reserved = struct.unpack_from("<IIII", data, 8)
    if reserved != 0:
        raise ProtocolError("reserved header field must be zero")
    if n_frames == 0 or n_bins == 0:
        raise ProtocolError("empty spectrogram rejected")
    expected = 24 + n_frames * n_bins * 8
    if len(data) != expected:
        raise ProtocolError("payload size inconsistent with header")
    flat = np.frombuffer(data, dtype="<f4", offset=24)
    pairs = flat.reshape(n_frames, n_bins, 2).astype(np.float64)
    values = pairs[..., 0] + 1j * pairs[..., 1]
    return values, int(sample_rate)


class ExternalDenoiser:
    """Invoke `command <in> <out>` over PNPSPEC1 temp files.

    Temp files are deleted on success and retained on error for debugging.
    """

    def __init__(self, command, workdir=None):
        if not command:
            raise ArgumentError("external denoiser requires a command")
        self.command = tuple(command)
        self.workdir = workdir

    def denoise(self, spec):
        tmpdir = tempfile.mkdtemp(prefix="pnpspec_", dir=self.workdir)
        in_path = f"{tmpdir}/in.pnpspec"
        out_path = f"{tmpdir}/out.pnpspec"
        write_pnpspec(spec, in_path)
        result = subprocess.run([*self.command, in_path, out_path],
                                capture_output=True, text=True)
        if result.returncode != 0:
            raise DenoiserError(
                f"denoiser command exited {result.returncode} "
                f"(inputs kept in {tmpdir}); stderr: {result.stderr.strip()}")
        try:
            values, sample_rate = read_pnpspec(out_path)
        except OSError as exc:
            raise ProtocolError(f"denoiser produced no output: {exc}")
        if values.shape != spec.values.shape:
            raise ProtocolError(
                f"denoiser changed the shape: {spec.values.shape} -> "
                f"{values.shape} (inputs kept in {tmpdir})")
        if sample_rate != spec.sample_rate:
            raise ProtocolError("denoiser changed the sample rate")
        shutil.rmtree(tmpdir, ignore_errors=True)
        return spec.with_values(values)


def make_denoiser(spec):
    """Instantiate the denoiser described by a DenoiserSpec."""
    if spec.kind == "identity":
        return IdentityDenoiser()
    if spec.kind == "soft_threshold":
        return SoftThresholdDenoiser(spec.threshold)
    if spec.kind == "wiener":
        return WienerDenoiser(spec.quantile, spec.min_gain)
    if spec.kind == "median2d":
        return Median2dDenoiser(spec.half_frames, spec.half_bins)
    if spec.kind == "external":
        return ExternalDenoiser(spec.command, spec.workdir)
    raise ArgumentError(f"unknown denoiser kind: {spec.kind}")

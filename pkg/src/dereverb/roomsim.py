"""Room-acoustics scene synthesis: image-source RIRs, reverberant mixing,
noise addition and early-reflection reference generation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, GeometryError
from .signals import (MultichannelTimeSignal, TimeSignal, convolve,
                      scaled_noise_segment)

SPEED_OF_SOUND = 343.0
EARLY_WINDOW_S = 0.050
MIC_WALL_MARGIN = 0.1
ARRAY_SPACING = 0.040
NUM_MICS = 4


@dataclass(frozen=True)
class RoomPreset:
    name: str
    length_range: tuple
    height_range: tuple
    t60_range: tuple
    min_source_wall: float
    min_source_mic: float


PRESETS = {
    "A": RoomPreset("A", (8.0, 13.0), (2.8, 3.8), (0.4, 0.8), 0.5, 0.8),
    "B": RoomPreset("B", (15.0, 20.0), (3.0, 4.0), (0.8, 1.2), 0.8, 1.3),
}


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple
    t60: float
    source: tuple
    mics: tuple
    sample_rate: int = 16000
    rir_length: int = 0
    seed: int = 0

    def __post_init__(self):
        if len(self.dimensions) != 3 or any(d <= 0 for d in self.dimensions):
            raise ArgumentError("dimensions must be three positive lengths")
        if not self.t60 > 0:
            raise ArgumentError("t60 must be > 0")
        for point in (self.source, *self.mics):
            if len(point) != 3:
                raise ArgumentError("positions must be 3-D")
            if not all(0 < point[i] < self.dimensions[i] for i in range(3)):
                raise ArgumentError("positions must be strictly inside the room")
        if self.rir_length == 0:
            object.__setattr__(self, "rir_length",
                               default_rir_length(self.t60, self.sample_rate))
        if self.rir_length < 1:
            raise ArgumentError("rir_length must be >= 1")

    @property
    def num_mics(self):
        return len(self.mics)


def default_rir_length(t60, sample_rate):
    """Long enough to capture the decay below -60 dB."""
    return int(math.ceil(1.25 * t60 * sample_rate))


def sample_room(preset, seed, sample_rate=16000):
    """Rejection-sample a room layout within the preset's ranges.

    Linear 4-mic array with 40 mm spacing at random position/orientation in
    the horizontal plane; all mics >= 0.1 m from walls; source respects the
    preset's wall and array distances.
    """
    if preset not in PRESETS:
        raise ArgumentError(f"unknown preset: {preset}")
    cfg = PRESETS[preset]
    rng = np.random.default_rng(seed)
    offsets = (np.arange(NUM_MICS) - (NUM_MICS - 1) / 2.0) * ARRAY_SPACING
    for _ in range(1000):
        length = rng.uniform(*cfg.length_range)
        width = rng.uniform(*cfg.length_range)
        height = rng.uniform(*cfg.height_range)
        t60 = rng.uniform(*cfg.t60_range)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        margin = MIC_WALL_MARGIN + ARRAY_SPACING * NUM_MICS
        center = np.array([
            rng.uniform(margin, length - margin),
            rng.uniform(margin, width - margin),
            rng.uniform(max(MIC_WALL_MARGIN, 1.0),
                        min(height - MIC_WALL_MARGIN, 2.0)),
        ])
        direction = np.array([np.cos(angle), np.sin(angle), 0.0])
        mics = center[None, :] + offsets[:, None] * direction[None, :]
        dims = np.array([length, width, height])
        if np.any(mics < MIC_WALL_MARGIN) or np.any(
                mics > dims[None, :] - MIC_WALL_MARGIN):
            continue
        sw = cfg.min_source_wall
        source = np.array([
            rng.uniform(sw, length - sw),
            rng.uniform(sw, width - sw),
            rng.uniform(sw, height - sw),
        ])
        if np.min(np.linalg.norm(mics - source[None, :], axis=1)) < cfg.min_source_mic:
            continue
        return RoomSpec(
            dimensions=(length, width, height),
            t60=t60,
            source=tuple(source),
            mics=tuple(tuple(m) for m in mics),
            sample_rate=sample_rate,
            rir_length=default_rir_length(t60, sample_rate),
            seed=seed,
        )
    raise GeometryError(f"could not satisfy preset {preset} constraints")


def reflection_coefficient(spec):
    """Uniform wall reflection from T60 via the Sabine relation.

    absorption a = 0.161*V/(S*t60); reflection r = sqrt(1 - a), with r
    clamped to [0, 0.999].
    """
    lx, ly, lz = spec.dimensions
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    absorption = 0.161 * volume / (surface * spec.t60)
    if absorption >= 1.0:
        return 0.0
    return min(math.sqrt(1.0 - absorption), 0.999)


def image_source_rir(spec, mic_index, reflection=None):
    """Shoebox image-source impulse response for one microphone.

    Each image contributes amplitude reflection^order / (4*pi*distance) at
    the nearest sample round(distance/c * fs); truncated to rir_length.
    """
    if not 0 <= mic_index < spec.num_mics:
        raise ArgumentError("mic_index out of range")
    if reflection is None:
        reflection = reflection_coefficient(spec)
    fs = spec.sample_rate
    mic = np.asarray(spec.mics[mic_index])
    src = np.asarray(spec.source)
    d_max = (spec.rir_length - 1) / fs * SPEED_OF_SOUND

    coords = []
    orders = []
    for axis in range(3):
        size = spec.dimensions[axis]
        m_range = int(math.ceil(d_max / (2.0 * size))) + 1
        m = np.arange(-m_range, m_range + 1)
        plus = 2.0 * m * size + src[axis]
        minus = 2.0 * m * size - src[axis]
        coords.append(np.concatenate([plus, minus]) - mic[axis])
        orders.append(np.concatenate([2 * np.abs(m), np.abs(2 * m - 1)]))

    dist2 = (coords[0][:, None, None] ** 2
             + coords[1][None, :, None] ** 2
             + coords[2][None, None, :] ** 2)
    order = (orders[0][:, None, None]
             + orders[1][None, :, None]
             + orders[2][None, None, :])
    dist = np.sqrt(dist2).ravel()
    order = order.ravel()
    mask = dist <= d_max + 1e-9
    dist = dist[mask]
    order = order[mask]
    with np.errstate(divide="ignore"):
        gain = np.where(order == 0, 1.0, float(reflection) ** order)
    amp = gain / (4.0 * np.pi * np.maximum(dist, 1e-9))
    taps = np.rint(dist / SPEED_OF_SOUND * fs).astype(np.int64)
    keep = taps < spec.rir_length
    rir = np.zeros(spec.rir_length)
    np.add.at(rir, taps[keep], amp[keep])
    return TimeSignal(rir, fs)


def white_noise(length, seed, sample_rate=16000):
    """Seeded standard Gaussian noise."""
    if length <= 0:
        raise ArgumentError("length must be > 0")
    rng = np.random.default_rng(seed)
    return TimeSignal(rng.standard_normal(length), sample_rate)


@dataclass(frozen=True)
class Scene:
    observed: MultichannelTimeSignal
    reference: TimeSignal
    clean: TimeSignal
    rirs: tuple
    metadata: dict = field(default_factory=dict)


def render_scene(spec, clean, noise=None, snr_db=None, noise_seed=0,
                 reference_channel=0):
    """Convolve clean speech with the room RIRs and optionally add noise.

    The reference keeps the direct path plus 50 ms of early reflections;
    noise is scaled against the reverberant reference channel and the same
    scaled segment is added to every channel. All signals are trimmed to
    the clean length.
    """
    if clean.sample_rate != spec.sample_rate:
        raise ArgumentError("clean signal sample rate must match the room")
    rirs = tuple(image_source_rir(spec, q) for q in range(spec.num_mics))
    length = len(clean)
    observed = [convolve(clean, rir).samples[:length] for rir in rirs]

    ref_rir = rirs[reference_channel].samples
    nonzero = np.nonzero(ref_rir)[0]
    if nonzero.size == 0:
        raise GeometryError("reference RIR is all zero")
    cutoff = int(nonzero[0]) + int(round(EARLY_WINDOW_S * spec.sample_rate))
    early = TimeSignal(ref_rir[:cutoff + 1], spec.sample_rate)
    reference = TimeSignal(convolve(clean, early).samples[:length],
                           spec.sample_rate)

    snr_used = None
    if noise is not None:
        if snr_db is None:
            raise ArgumentError("snr_db required when noise is given")
        rev_ref = TimeSignal(observed[reference_channel], spec.sample_rate)
        segment = scaled_noise_segment(rev_ref, noise, snr_db, noise_seed)
        observed = [ch + segment for ch in observed]
        snr_used = snr_db

    metadata = {
        "t60": spec.t60,
        "snr_db": snr_used,
        "noise": "none" if noise is None else "added",
        "seed": spec.seed,
    }
    return Scene(
        observed=MultichannelTimeSignal.from_array(np.stack(observed),
                                                   spec.sample_rate),
        reference=reference,
        clean=TimeSignal(clean.samples[:length], spec.sample_rate),
        rirs=rirs,
        metadata=metadata,
    )


def measure_t60(rir, fit_range=(-5.0, -35.0)):
    """Reverberation time from Schroeder backward integration.

    Fits a line to the energy decay curve between fit_range dB levels and
    extrapolates to -60 dB.
    """
    energy = rir.samples**2
    total = float(np.sum(energy))
    if total <= 0:
        raise ArgumentError("RIR has no energy")
    edc = np.cumsum(energy[::-1])[::-1] / total
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(np.maximum(edc, 1e-300))
    hi, lo = fit_range
    start = int(np.argmax(db <= hi))
    ends = np.nonzero(db <= lo)[0]
    if db[start] > hi or ends.size == 0:
        raise ArgumentError("decay range insufficient for the fit")
    end = int(ends[0])
    if end <= start + 1:
        raise ArgumentError("decay range insufficient for the fit")
    t = np.arange(start, end)
    slope, _ = np.polyfit(t, db[start:end], 1)
    if slope >= 0:
        raise ArgumentError("non-decaying energy curve")
    return float(-60.0 / (slope * rir.sample_rate))

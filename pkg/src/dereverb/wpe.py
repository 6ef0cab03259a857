"""Vanilla iterative WPE dereverberation.

Per frequency band, a delayed multichannel linear predictor is fit by
reweighted least squares; the prediction residual is the desired signal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, SingularBandError
from .numerics import DEFAULT_LOADING, NormalEquations, solve_hpd
from .stft import MultichannelSpectrogram, Spectrogram


@dataclass(frozen=True)
class WpeParams:
    filter_order: int = 28
    delay: int = 2
    epsilon: float = 1e-4
    iterations: int = 3
    reference_channel: int = 0

    def __post_init__(self):
        if self.filter_order < 1:
            raise ArgumentError("filter_order must be >= 1")
        if self.delay < 1:
            raise ArgumentError("delay must be >= 1")
        if not self.epsilon > 0:
            raise ArgumentError("epsilon must be > 0")
        if self.iterations < 1:
            raise ArgumentError("iterations must be >= 1")
        if self.reference_channel < 0:
            raise ArgumentError("reference_channel must be >= 0")


@dataclass(frozen=True)
class FilterBank:
    """Per-band prediction weights, shape (num_bins, L*Q)."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.complex128)
        if weights.ndim != 2:
            raise ArgumentError("filter bank must be 2-D")
        if not np.all(np.isfinite(weights)):
            raise ArgumentError("filter weights must be finite")
        object.__setattr__(self, "weights", weights)

    @property
    def num_bins(self):
        return self.weights.shape[0]

    @property
    def taps_per_band(self):
        return self.weights.shape[1]


def build_regressor(spec, n, k, delay, order):
    """Channel-major delayed regressor of length L*Q for frame n, bin k.

    Channel q contributes (X_q(n-D,k), ..., X_q(n-D-L+1,k)); frames with
    negative index contribute zeros.
    """
    obs = spec.as_array()
    out = np.zeros(order * spec.num_channels, dtype=np.complex128)
    for q in range(spec.num_channels):
        for l in range(order):
            frame = n - delay - l
            if frame >= 0:
                out[q * order + l] = obs[q, frame, k]
    return out


def stack_regressors(obs, delay, order):
    """All regressors at once: (bins, L*Q, frames) from (Q, frames, bins)."""
    n_ch, n_frames, n_bins = obs.shape
    taps = np.zeros((n_bins, order * n_ch, n_frames), dtype=np.complex128)
    for q in range(n_ch):
        for l in range(order):
            shift = delay + l
            if shift < n_frames:
                taps[:, q * order + l, shift:] = obs[q, :n_frames - shift, :].T
    return taps


def estimate_psd(s_hat, epsilon):
    """Elementwise max of squared magnitude and the floor epsilon."""
    if not epsilon > 0:
        raise ArgumentError("epsilon must be > 0")
    values = s_hat.values if isinstance(s_hat, Spectrogram) else np.asarray(s_hat)
    return np.maximum(np.abs(values) ** 2, epsilon)


def solve_all_bands(taps, targets, weights, loading=DEFAULT_LOADING):
    """Per-band weighted normal-equation solve.

    taps: (bins, L*Q, frames); targets, weights: (frames, bins).
    Returns (bins, L*Q) filter weights.
    """
    n_bins, n_taps, _ = taps.shape
    inv_w = (1.0 / weights).T  # (bins, frames)
    scaled = taps * inv_w[:, None, :]
    Z = scaled @ taps.conj().transpose(0, 2, 1)
    Z = 0.5 * (Z + Z.conj().transpose(0, 2, 1))
    q = np.einsum("kin,kn->ki", scaled, targets.T.conj())
    filters = np.zeros((n_bins, n_taps), dtype=np.complex128)
    for k in range(n_bins):
        try:
            filters[k] = solve_hpd(NormalEquations(Z[k], q[k]), loading)
        except SingularBandError as exc:
            raise SingularBandError(str(exc), band=k)
    return filters


def _predict(taps, weights):
    """w^H x for all frames/bands: (frames, bins)."""
    return np.einsum("ki,kin->nk", weights.conj(), taps)


def apply_filters(observed, filters, delay, order, reference_channel=0):
    """Prediction residual: X_ref(n,k) - w^H(k) regressor(n,k)."""
    obs = observed.as_array()
    n_ch = observed.num_channels
    if filters.weights.shape != (observed.num_bins, order * n_ch):
        raise ArgumentError("filter bank shape inconsistent with observed")
    if reference_channel >= n_ch:
        raise ArgumentError("reference_channel out of range")
    taps = stack_regressors(obs, delay, order)
    residual = obs[reference_channel] - _predict(taps, filters.weights)
    return observed.channels[reference_channel].with_values(residual)


def run_wpe(observed, params):
    """Iterative WPE: alternate per-band filter solves and PSD updates.

    Returns (estimate spectrogram, filter bank, per-iteration mean residual
    power trace).
    """
    if params.reference_channel >= observed.num_channels:
        raise ArgumentError("reference_channel out of range")
    if observed.num_frames <= params.delay:
        raise ArgumentError("need more frames than the prediction delay")
    obs = observed.as_array()
    ref = obs[params.reference_channel]
    taps = stack_regressors(obs, params.delay, params.filter_order)
    sigma = np.maximum(np.abs(ref) ** 2, params.epsilon)
    trace = []
    filters = None
    s_hat = ref
    for _ in range(params.iterations):
        weights = solve_all_bands(taps, ref, sigma)
        s_hat = ref - _predict(taps, weights)
        sigma = np.maximum(np.abs(s_hat) ** 2, params.epsilon)
        filters = FilterBank(weights)
        trace.append(float(np.mean(np.abs(s_hat) ** 2)))
    estimate = observed.channels[params.reference_channel].with_values(s_hat)
    return estimate, filters, trace

"""ADMM dereverberation with a denoising prior and explicit noise variable.

Each outer iteration reweights the per-band linear-prediction solve with
lambda = 2*sigma/(2 + rho*sigma) and shifted targets, then alternates a
denoiser-driven fixed-point update of the speech iterate R, a closed-form
noise update V, and the scaled dual update P.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoisers import DenoiserSpec, make_denoiser
from .errors import ArgumentError
from .stft import StftConfig, analyze_multichannel, synthesize
from .wpe import (FilterBank, WpeParams, apply_filters, estimate_psd,
                  solve_all_bands, stack_regressors, _predict)


@dataclass(frozen=True)
class PnpParams:
    wpe: WpeParams = WpeParams()
    rho: float = 0.1
    mu: float = 0.5
    inner_iters: int = 1
    outer_iters: int = 10
    denoiser: DenoiserSpec = DenoiserSpec("identity")
    stop_tol: float = 1e-4

    def __post_init__(self):
        if not self.rho > 0:
            raise ArgumentError("rho must be > 0")
        if not 0 < self.mu <= 1:
            raise ArgumentError("mu must be in (0, 1]")
        if self.inner_iters < 1:
            raise ArgumentError("inner_iters must be >= 1")
        if self.outer_iters < 1:
            raise ArgumentError("outer_iters must be >= 1")
        if self.stop_tol < 0:
            raise ArgumentError("stop_tol must be >= 0")

    @property
    def beta(self):
        """Regularizer weight implied by mu: beta = rho*(1-mu)/mu."""
        return self.rho * (1.0 - self.mu) / self.mu


@dataclass
class AdmmState:
    filters: FilterBank
    s_hat: np.ndarray
    r: np.ndarray
    v: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    error_trace: list = field(default_factory=list)
    error_eq24_trace: list = field(default_factory=list)
    r_change_trace: list = field(default_factory=list)


def compute_lambda(sigma, rho):
    """2*sigma/(2 + rho*sigma); always in (0, min(sigma, 2/rho))."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ArgumentError("sigma must be positive")
    if not rho > 0:
        raise ArgumentError("rho must be > 0")
    return 2.0 * sigma / (2.0 + rho * sigma)


def _check_shapes(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ArgumentError("shape mismatch")


def compute_xtilde(x_ref, r, v, p, lam, rho):
    """Shifted targets: X_ref - (rho/2)*lambda*(R + V - P)."""
    _check_shapes(x_ref, r, v, p, lam)
    return x_ref - 0.5 * rho * lam * (r + v - p)


def compute_rtilde(s_hat, v, p):
    """Denoiser input: S_hat - V + P."""
    _check_shapes(s_hat, v, p)
    return s_hat - v + p


def update_r(r_tilde, denoiser, mu, inner_iters=1):
    """Fixed-point mixing: R_i = mu*R_tilde + (1-mu)*Omega(arg_i).

    The first inner step denoises R_tilde itself; subsequent steps denoise
    the previous inner iterate.
    """
    if not 0 < mu <= 1:
        raise ArgumentError("mu must be in (0, 1]")
    if inner_iters < 1:
        raise ArgumentError("inner_iters must be >= 1")
    arg = r_tilde
    r = r_tilde
    for _ in range(inner_iters):
        denoised = denoiser.denoise(arg)
        r = r_tilde.with_values(
            mu * r_tilde.values + (1.0 - mu) * denoised.values)
        arg = r
    return r


def update_v(s_hat, r, p):
    """Closed-form noise update: V = S_hat - R + P."""
    _check_shapes(s_hat, r, p)
    return s_hat - r + p


def update_p(p, s_hat, v, r):
    """Scaled dual update: P = P + S_hat - V - R."""
    _check_shapes(p, s_hat, v, r)
    return p + s_hat - v - r


def constraint_error(r, s_hat, v):
    """Mean-square consensus error: mean |R - S_hat - V|^2."""
    _check_shapes(r, s_hat, v)
    return float(np.mean(np.abs(r - s_hat - v) ** 2))


def constraint_error_signed(r, s_hat, v):
    """Secondary residual with the opposite noise sign: mean |R - S_hat + V|^2."""
    _check_shapes(r, s_hat, v)
    return float(np.mean(np.abs(r - s_hat + v) ** 2))


def update_filters(observed, r, v, p, sigma, params):
    """One per-band reweighted solve given the current iterates."""
    obs = observed.as_array()
    x_ref = obs[params.wpe.reference_channel]
    lam = compute_lambda(sigma, params.rho)
    xtilde = compute_xtilde(x_ref, r, v, p, lam, params.rho)
    taps = stack_regressors(obs, params.wpe.delay, params.wpe.filter_order)
    return FilterBank(solve_all_bands(taps, xtilde, lam))


def prediction_error(observed, filters, params):
    """Residual without noise removal: X_ref - w^H regressor."""
    return apply_filters(observed, filters, params.wpe.delay,
                         params.wpe.filter_order,
                         params.wpe.reference_channel)


def run_pnpwpe(observed, params):
    """Full solver loop; returns (speech estimate R, AdmmState, error trace)."""
    wpe_params = params.wpe
    if wpe_params.reference_channel >= observed.num_channels:
        raise ArgumentError("reference_channel out of range")
    if observed.num_frames <= wpe_params.delay:
        raise ArgumentError("need more frames than the prediction delay")
    denoiser = make_denoiser(params.denoiser)
    obs = observed.as_array()
    x_ref = obs[wpe_params.reference_channel]
    template = observed.channels[wpe_params.reference_channel]
    taps = stack_regressors(obs, wpe_params.delay, wpe_params.filter_order)

    shape = x_ref.shape
    s_hat = x_ref.copy()
    r = np.zeros(shape, dtype=np.complex128)
    v = np.zeros(shape, dtype=np.complex128)
    p = np.zeros(shape, dtype=np.complex128)
    filters = None
    sigma = lam = None
    error_trace = []
    error_eq24_trace = []
    r_change_trace = []

    for _ in range(params.outer_iters):
        sigma = estimate_psd(s_hat, wpe_params.epsilon)
        lam = compute_lambda(sigma, params.rho)
        xtilde = compute_xtilde(x_ref, r, v, p, lam, params.rho)
        weights = solve_all_bands(taps, xtilde, lam)
        filters = FilterBank(weights)
        s_hat = x_ref - _predict(taps, weights)
        r_tilde = compute_rtilde(s_hat, v, p)
        r_prev = r
        r = update_r(template.with_values(r_tilde), denoiser, params.mu,
                     params.inner_iters).values
        v = update_v(s_hat, r, p)
        p = update_p(p, s_hat, v, r)

        r_prev_norm = float(np.linalg.norm(r_prev))
        change = float(np.linalg.norm(r - r_prev)) / max(r_prev_norm, 1e-300)
        r_change_trace.append(change)
        error = constraint_error(r, s_hat, v)
        error_trace.append(error)
        error_eq24_trace.append(constraint_error_signed(r, s_hat, v))
        if len(error_trace) >= 2:
            prev = error_trace[-2]
            rel = abs(error - prev) / max(prev, 1e-300)
            if rel < params.stop_tol:
                break

    state = AdmmState(filters=filters, s_hat=s_hat, r=r, v=v, p=p,
                      sigma=sigma, lam=lam, error_trace=error_trace,
                      error_eq24_trace=error_eq24_trace,
                      r_change_trace=r_change_trace)
    return template.with_values(r), state, error_trace


def plateau_iteration(change_trace, threshold=0.05):
    """First iteration from which the relative iterate change stays below
    threshold; the trace length if it never settles."""
    n = len(change_trace)
    for i in range(1, n):
        if all(c < threshold for c in change_trace[i:]):
            return i + 1
    return n


def time_domain_pipeline(signal, params, stft_config=StftConfig()):
    """analyze -> run_pnpwpe -> synthesize; output length matches input."""
    observed = analyze_multichannel(signal, stft_config)
    estimate, _, _ = run_pnpwpe(observed, params)
    return synthesize(estimate)

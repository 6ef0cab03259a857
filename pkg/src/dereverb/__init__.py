"""Multichannel speech dereverberation toolkit.

Linear-prediction dereverberation (WPE), its plug-and-play ADMM variant
with denoising priors, a shoebox room simulator, objective metrics and a
batch CLI.
"""

from .denoisers import DenoiserSpec, make_denoiser
from .errors import (AlignmentError, ArgumentError, DenoiserError,
                     DereverbError, FormatError, GeometryError, MetricError,
                     ProtocolError)
from .metrics import MetricReport, align, cepstral_distance, evaluate_pair, fw_seg_snr
from .pnpwpe import AdmmState, PnpParams, run_pnpwpe, time_domain_pipeline
from .roomsim import (RoomSpec, Scene, image_source_rir, measure_t60,
                      render_scene, sample_room, white_noise)
from .signals import (MultichannelTimeSignal, TimeSignal, convolve,
                      mix_at_snr, read_wav, write_wav)
from .stft import (MultichannelSpectrogram, Spectrogram, StftConfig, analyze,
                   analyze_multichannel, hann, synthesize)
from .wpe import FilterBank, WpeParams, apply_filters, build_regressor, run_wpe

__all__ = [
    "AdmmState", "AlignmentError", "ArgumentError", "DenoiserError",
    "DenoiserSpec", "DereverbError", "FilterBank", "FormatError",
    "GeometryError", "MetricError", "MetricReport",
    "MultichannelSpectrogram", "MultichannelTimeSignal", "PnpParams",
    "ProtocolError", "RoomSpec", "Scene", "Spectrogram", "StftConfig",
    "TimeSignal", "WpeParams", "align", "analyze", "analyze_multichannel",
    "apply_filters", "build_regressor", "cepstral_distance", "convolve",
    "evaluate_pair", "fw_seg_snr", "hann", "image_source_rir",
    "make_denoiser", "measure_t60", "mix_at_snr", "read_wav",
    "render_scene", "run_pnpwpe", "run_wpe", "sample_room", "synthesize",
    "time_domain_pipeline", "white_noise", "write_wav",
]

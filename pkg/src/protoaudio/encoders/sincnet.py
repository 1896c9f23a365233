"""Raw-waveform encoder built on learnable band-pass sinc kernels.

The first layer convolves the waveform with band-pass FIR kernels whose low
and high cutoffs are the learnable parameters, initialized to mel-spaced bands.
The map then passes through abs -> log(x + 1e-6) -> max-pool(2) and a small
two-layer 1-D conv stack. Standalone, the map is time-averaged into the
embedding; composed variants feed it to the windowed-CNN or LSTM encoder as if
it were a feature matrix (filter count must match the feature width, 64).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..audio_io import SAMPLE_RATE
from ..diffcore import (
    Tensor,
    absval,
    add,
    add_scalar,
    as_tensor,
    clip,
    conv1d,
    log,
    max_pool1d,
    mean_pool,
    relu,
    reshape,
    sinc_kernel,
    slice_rows,
    transpose,
)
from ..dsp import FrontendConfig, mel_inverse, mel_scale
from ..errors import ConfigError, DimensionMismatchError, KernelTooLongError
from .base import N_MELS, Encoder, EncoderSpec, batch_concat, kaiming_uniform, raw_samples
from .lstm import LstmEncoder
from .vgg import VggEncoder

# Strictness floor for f1 < f2; small enough that mel-spaced init bands keep
# their exact shared breakpoints (the narrowest 64-band split is ~29 Hz wide).
MIN_BAND_HZ = 1.0
INIT_LOW_HZ = 30.0
INIT_MARGIN_HZ = 100.0
LOG_EPS = 1e-6


@dataclass(frozen=True)
class SincLayerParams:
    """Per-filter cutoff parameters in normalized frequency (cycles/sample)."""

    theta_low: np.ndarray
    theta_band: np.ndarray
    kernel_len: int = 251
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        tl = np.asarray(self.theta_low, dtype=np.float64)
        tb = np.asarray(self.theta_band, dtype=np.float64)
        if tl.ndim != 1 or tl.shape != tb.shape:
            raise ConfigError(f"cutoff arrays disagree: {tl.shape} vs {tb.shape}")
        if self.kernel_len < 3 or self.kernel_len % 2 == 0:
            raise ConfigError(f"kernel_len={self.kernel_len} must be odd and >= 3")
        object.__setattr__(self, "theta_low", tl)
        object.__setattr__(self, "theta_band", tb)

    @property
    def n_filters(self) -> int:
        return self.theta_low.size

    def cutoffs_hz(self):
        """Effective (f1, f2) in Hz after the clamp chain the forward pass uses."""
        f1, f2 = clamp_cutoffs(self.theta_low, self.theta_band)
        return f1 * self.sample_rate_hz, f2 * self.sample_rate_hz


def clamp_cutoffs(theta_low, theta_band):
    """Numpy mirror of the on-tape clamp chain: 0 <= f1 < f2 <= Nyquist."""
    min_band = MIN_BAND_HZ / SAMPLE_RATE
    f1 = np.clip(np.abs(theta_low), 0.0, 0.5 - min_band)
    f2 = np.clip(f1 + min_band + np.abs(theta_band), 0.0, 0.5)
    return f1, f2


def sinc_init_mel(n_filters: int, sample_rate: int = SAMPLE_RATE,
                  kernel_len: int = 251) -> SincLayerParams:
    """Cutoff pairs at consecutive mel-spaced breakpoints over (30 Hz, Nyquist-100).

    Adjacent bands share a breakpoint: f2 of band i equals f1 of band i+1.
    """
    if n_filters < 2:
        raise ConfigError(f"n_filters={n_filters} must be >= 2")
    nyq = sample_rate / 2.0
    breaks_hz = mel_inverse(
        np.linspace(mel_scale(INIT_LOW_HZ), mel_scale(nyq - INIT_MARGIN_HZ), n_filters + 1)
    )
    breaks_hz[0] = INIT_LOW_HZ  # exact boundary, no round-trip residue
    f1 = breaks_hz[:-1] / sample_rate
    f2 = breaks_hz[1:] / sample_rate
    return SincLayerParams(f1, f2 - f1 - MIN_BAND_HZ / sample_rate,
                           kernel_len=kernel_len, sample_rate_hz=sample_rate)


class SincNetEncoder(Encoder):
    def __init__(self, spec: EncoderSpec, frontend: FrontendConfig, seed: int,
                 param_prefix: str = ""):
        self.spec = spec
        self.frontend = frontend
        d = spec.dims
        init = sinc_init_mel(d.sinc_filters, kernel_len=d.sinc_kernel_len)
        self.kernel_len = d.sinc_kernel_len
        self.stride = d.sinc_stride
        self.n_filters = d.sinc_filters
        self._window = np.hamming(self.kernel_len).astype(np.float32)
        rng = np.random.default_rng(seed)
        k, ch = d.sinc_stack_kernel, d.sinc_stack_channels
        self.params = {
            f"{param_prefix}theta_low": Tensor(
                init.theta_low.astype(np.float32), requires_grad=True),
            f"{param_prefix}theta_band": Tensor(
                init.theta_band.astype(np.float32), requires_grad=True),
            f"{param_prefix}conv1_w": Tensor(
                kaiming_uniform(rng, (k, self.n_filters, ch), k * self.n_filters),
                requires_grad=True),
            f"{param_prefix}conv1_b": Tensor(np.zeros(ch, dtype=np.float32),
                                             requires_grad=True),
            f"{param_prefix}conv2_w": Tensor(
                kaiming_uniform(rng, (k, ch, ch), k * ch), requires_grad=True),
            f"{param_prefix}conv2_b": Tensor(np.zeros(ch, dtype=np.float32),
                                             requires_grad=True),
        }
        self._prefix = param_prefix
        self._pad = k // 2

    def prepare_input(self, waveform) -> np.ndarray:
        return raw_samples(waveform)

    def layer_params(self) -> SincLayerParams:
        return SincLayerParams(
            self.params[f"{self._prefix}theta_low"].data.astype(np.float64),
            self.params[f"{self._prefix}theta_band"].data.astype(np.float64),
            kernel_len=self.kernel_len,
        )

    def _cutoffs(self):
        min_band = np.float32(MIN_BAND_HZ / SAMPLE_RATE)
        f1 = clip(absval(self.params[f"{self._prefix}theta_low"]), 0.0, 0.5 - float(min_band))
        f2 = clip(add(f1, add_scalar(absval(self.params[f"{self._prefix}theta_band"]),
                                     float(min_band))), 0.0, 0.5)
        return f1, f2

    def feature_map(self, samples) -> Tensor:
        """(N,) waveform -> (1, T', n_filters) map (band-pass + nonlinearity + stack)."""
        x = as_tensor(np.asarray(samples, dtype=np.float32))
        n = x.shape[0]
        if n < self.kernel_len:
            raise KernelTooLongError(
                f"waveform of {n} samples shorter than kernel {self.kernel_len}"
            )
        f1, f2 = self._cutoffs()
        kernels = sinc_kernel(f1, f2, self.kernel_len, self._window)   # (F, L)
        w = reshape(transpose(kernels), (self.kernel_len, 1, self.n_filters))
        h = conv1d(reshape(x, (1, n, 1)), w, stride=self.stride)
        h = max_pool1d(log(add_scalar(absval(h), LOG_EPS)), 2)
        p = self.params
        h = relu(conv1d(h, p[f"{self._prefix}conv1_w"], p[f"{self._prefix}conv1_b"],
                        padding=self._pad))
        h = relu(conv1d(h, p[f"{self._prefix}conv2_w"], p[f"{self._prefix}conv2_b"],
                        padding=self._pad))
        return h

    def sinc_layer(self, samples) -> Tensor:
        """Filter-major view of the feature map: (n_filters, T')."""
        h = self.feature_map(samples)
        return transpose(reshape(h, (h.shape[1], h.shape[2])))

    def embed_batch(self, inputs: Sequence) -> Tensor:
        return batch_concat([mean_pool(self.feature_map(item), 1) for item in inputs])


class ComposedSincEncoder(Encoder):
    """SincNet front end feeding the windowed-CNN or LSTM encoder."""

    def __init__(self, spec: EncoderSpec, frontend: FrontendConfig, seed: int):
        self.spec = spec
        self.frontend = frontend
        head_kind = spec.kind.split("+")[1]
        self.sinc = SincNetEncoder(spec, frontend, seed, param_prefix="sinc/")
        if self.sinc.spec.dims.sinc_stack_channels != N_MELS:
            raise DimensionMismatchError(
                f"sinc stack width {self.sinc.spec.dims.sinc_stack_channels} must equal "
                f"downstream feature width {N_MELS}"
            )
        head_cls = VggEncoder if head_kind == "vgg" else LstmEncoder
        self.head = head_cls(spec, frontend, seed + 1, param_prefix=f"{head_kind}/")
        self.params = {**self.sinc.params, **self.head.params}

    def prepare_input(self, waveform) -> np.ndarray:
        return raw_samples(waveform)

    def embed_batch(self, inputs: Sequence) -> Tensor:
        maps = []
        for item in inputs:
            m = self.sinc.feature_map(item)
            maps.append(reshape(m, (m.shape[1], m.shape[2])))   # (T', 64) time-major
        return self.head.embed_batch(maps)

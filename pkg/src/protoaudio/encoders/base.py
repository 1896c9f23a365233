"""Encoder architecture descriptions and the shared embedding interface."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..audio_io import Waveform
from ..dsp import FrontendConfig
from ..errors import ConfigError, ShapeMismatchError
from ..diffcore import Tensor, concat

KINDS = ("vgg", "lstm", "sincnet", "sincnet+vgg", "sincnet+lstm")
SCALES = ("paper", "desk")

WINDOW_FRAMES = 96
WINDOW_HOP = 48
N_MELS = 64


@dataclass(frozen=True)
class EncoderDims:
    """Size table for one scale; topology is identical across scales."""

    vgg_channels: tuple
    lstm_hidden: int
    lstm_out: int
    sinc_filters: int = 64
    sinc_kernel_len: int = 251
    sinc_stride: int = 80
    sinc_stack_channels: int = 64
    sinc_stack_kernel: int = 5

    @property
    def vgg_embed_dim(self) -> int:
        # five 2x2 pools shrink the 96x64 window to 3x2 before flattening
        return self.vgg_channels[-1] * (WINDOW_FRAMES // 32) * (N_MELS // 32)


_DIMS = {
    "paper": EncoderDims((64, 128, 256, 256, 512, 512, 512, 512), 4096, 2048),
    "desk": EncoderDims((8, 16, 32, 32, 64, 64, 64, 64), 128, 64),
}


@dataclass(frozen=True)
class EncoderSpec:
    kind: str
    scale: str = "desk"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}; choose from {KINDS}")
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale {self.scale!r}; choose from {SCALES}")

    @property
    def dims(self) -> EncoderDims:
        return _DIMS[self.scale]

    @property
    def embed_dim(self) -> int:
        d = self.dims
        if self.kind in ("vgg", "sincnet+vgg"):
            return d.vgg_embed_dim
        if self.kind in ("lstm", "sincnet+lstm"):
            return d.lstm_out
        return d.sinc_stack_channels

    def header(self) -> dict:
        """Checkpoint header used to reject mismatched loads."""
        from dataclasses import asdict
        return {
            "kind": self.kind,
            "scale": self.scale,
            "embed_dim": self.embed_dim,
            "dims": {k: list(v) if isinstance(v, tuple) else v
                     for k, v in asdict(self.dims).items()},
        }


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def scaled_uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(np.float32)


class Encoder:
    """Maps clips to fixed-dimensional embeddings; parameters live in .params.

    Subclasses set .spec, .params (dict[str, Tensor]) and implement
    prepare_input() (waveform -> model input array, cacheable) and
    embed_batch() (list of inputs -> (B, embed_dim) Tensor).
    """

    spec: EncoderSpec
    params: dict

    def prepare_input(self, waveform) -> np.ndarray:
        raise NotImplementedError

    def embed_batch(self, inputs: Sequence) -> Tensor:
        raise NotImplementedError

    @property
    def embed_dim(self) -> int:
        return self.spec.embed_dim

    def embed_clip(self, waveform) -> Tensor:
        """Convenience path: one waveform -> (embed_dim,) embedding."""
        from ..diffcore import reshape
        out = self.embed_batch([self.prepare_input(waveform)])
        return reshape(out, (self.embed_dim,))

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, tensors: dict) -> None:
        missing = set(self.params) - set(tensors)
        extra = set(tensors) - set(self.params)
        if missing or extra:
            raise ShapeMismatchError(
                f"parameter names disagree: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        for name, p in self.params.items():
            arr = np.asarray(tensors[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ShapeMismatchError(
                    f"parameter {name!r}: checkpoint {arr.shape} vs model {p.data.shape}"
                )
            p.data = arr.copy()


def raw_samples(waveform) -> np.ndarray:
    x = waveform.samples if isinstance(waveform, Waveform) else np.asarray(waveform)
    return x.astype(np.float32)


def batch_concat(rows: list) -> Tensor:
    return rows[0] if len(rows) == 1 else concat(rows, axis=0)

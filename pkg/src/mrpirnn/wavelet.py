"""Fast wavelet transform with Daubechies-2 filters.

The transform is periodic on a buffer whose length is a multiple of
``2**depth``; shorter-than-dyadic signals are mirror-padded at the end and
truncated again after synthesis.  Everything here is pure and operates on
1-d arrays; multichannel data is transformed column by column.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class PadMode(str, enum.Enum):
    SYMMETRIC = "symmetric"
    ZERO = "zero"


@dataclass(frozen=True)
class WaveletFilter:
    lowpass: np.ndarray
    highpass: np.ndarray

    def __len__(self) -> int:
        return len(self.lowpass)


@dataclass(frozen=True)
class ScalePyramid:
    """Approximation at the coarsest level plus detail bands, finest first."""

    base: np.ndarray
    details: tuple[np.ndarray, ...]
    original_length: int
    pad_mode: PadMode = PadMode.SYMMETRIC

    @property
    def depth(self) -> int:
        return len(self.details)

    def scaled(self, alpha: float) -> ScalePyramid:
        return ScalePyramid(
            self.base * alpha,
            tuple(d * alpha for d in self.details),
            self.original_length,
            self.pad_mode,
        )


def highpass_from_lowpass(lowpass: np.ndarray) -> np.ndarray:
    """Quadrature mirror: reverse the taps and alternate signs, g_k = (-1)^(k+1) d_(L-1-k)."""
    n = len(lowpass)
    signs = np.where(np.arange(n) % 2 == 0, -1.0, 1.0)
    return signs * lowpass[::-1]


def build_db2_filter() -> WaveletFilter:
    s3 = math.sqrt(3.0)
    d = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * math.sqrt(2.0))
    return WaveletFilter(d, highpass_from_lowpass(d))


DB2 = build_db2_filter()


def _window_index(n: int, taps: int) -> np.ndarray:
    return (2 * np.arange(n // 2)[:, None] + np.arange(taps)[None, :]) % n


def analysis_step(x: np.ndarray, filt: WaveletFilter) -> tuple[np.ndarray, np.ndarray]:
    """One periodic convolve-and-downsample level: (approximation, detail)."""
    if len(x) % 2:
        raise ValueError("analysis needs an even-length buffer")
    windows = x[_window_index(len(x), len(filt))]
    return windows @ filt.lowpass, windows @ filt.highpass


def synthesis_step(approx: np.ndarray, detail: np.ndarray, filt: WaveletFilter) -> np.ndarray:
    """Adjoint of :func:`analysis_step` (upsample and convolve)."""
    if approx.shape != detail.shape:
        raise ValueError(f"band length mismatch: {approx.shape} vs {detail.shape}")
    n = 2 * len(approx)
    out = np.zeros(n)
    contrib = approx[:, None] * filt.lowpass[None, :] + detail[:, None] * filt.highpass[None, :]
    np.add.at(out, _window_index(n, len(filt)), contrib)
    return out


def padded_length(n: int, depth: int) -> int:
    block = 2**depth
    return -(-n // block) * block


def _pad(x: np.ndarray, target: int, mode: PadMode) -> np.ndarray:
    extra = target - len(x)
    if extra == 0:
        return x.copy()
    if mode is PadMode.ZERO:
        return np.concatenate([x, np.zeros(extra)])
    # half-sample mirror; repeat the reflection if the gap exceeds the signal
    out = x
    while len(out) < target:
        out = np.concatenate([out, out[::-1][: target - len(out)]])
    return out


def decompose(
    signal: np.ndarray,
    depth: int,
    filt: WaveletFilter = DB2,
    pad_mode: PadMode = PadMode.SYMMETRIC,
) -> ScalePyramid:
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("decompose expects a 1-d signal")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if len(x) < 2**depth:
        raise ValueError(f"insufficient samples: {len(x)} < 2**{depth}")
    approx = _pad(x, padded_length(len(x), depth), PadMode(pad_mode))
    details = []
    for _ in range(depth):
        approx, detail = analysis_step(approx, filt)
        details.append(detail)
    return ScalePyramid(approx, tuple(details), len(x), PadMode(pad_mode))


def _check_bands(pyramid: ScalePyramid) -> None:
    n = len(pyramid.base)
    for level in range(pyramid.depth - 1, -1, -1):
        if len(pyramid.details[level]) != n:
            raise ValueError(
                f"corrupted pyramid: detail level {level} has {len(pyramid.details[level])} "
                f"coefficients, expected {n}"
            )
        n *= 2
    if n < pyramid.original_length:
        raise ValueError("corrupted pyramid: bands shorter than the original signal")


def reconstruct(pyramid: ScalePyramid, filt: WaveletFilter = DB2) -> np.ndarray:
    _check_bands(pyramid)
    approx = pyramid.base
    for detail in reversed(pyramid.details):
        approx = synthesis_step(approx, detail, filt)
    return approx[: pyramid.original_length]


def project_to_scale(signal: np.ndarray, j: int, filt: WaveletFilter = DB2) -> np.ndarray:
    """Scale ``[-j]`` view of ``signal`` on its original grid (finest ``j`` bands removed)."""
    x = np.asarray(signal, dtype=float)
    if j < 0:
        raise ValueError("j must be nonnegative")
    if j == 0:
        return x.copy()
    pyr = decompose(x, j, filt)
    zeroed = ScalePyramid(pyr.base, tuple(np.zeros_like(d) for d in pyr.details), pyr.original_length, pyr.pad_mode)
    return reconstruct(zeroed, filt)


def detail_components(signal: np.ndarray, j: int, filt: WaveletFilter = DB2) -> list[np.ndarray]:
    """Per-band reconstructions H_b f, finest band first; they sum with the projection to ``signal``."""
    x = np.asarray(signal, dtype=float)
    pyr = decompose(x, j, filt)
    parts = []
    for level in range(j):
        details = tuple(d if i == level else np.zeros_like(d) for i, d in enumerate(pyr.details))
        parts.append(reconstruct(ScalePyramid(np.zeros_like(pyr.base), details, len(x), pyr.pad_mode), filt))
    return parts


def project_columns(data: np.ndarray, j: int, filt: WaveletFilter = DB2) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        return project_to_scale(data, j, filt)
    return np.column_stack([project_to_scale(col, j, filt) for col in data.T])

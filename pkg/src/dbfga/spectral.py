"""2-D discrete Fourier transforms and the differentiable spectral magnitude.

Conventions: unnormalized forward transform with origin-at-corner spectrum,
inverse scaled by 1/(H*W).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dbfga.ops import _result
from dbfga.tensor import ShapeError, Tensor


@dataclass(frozen=True)
class ComplexPlane:
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ShapeError(f"real {self.real.shape} and imag {self.imag.shape} differ")

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexPlane":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @property
    def shape(self) -> tuple[int, ...]:
        return self.real.shape


def _plane(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise ShapeError(f"expected an H x W plane, got shape {arr.shape}")
    return arr


def dft2d_naive(plane) -> ComplexPlane:
    """Direct O(H^2 W^2) summation F[u,v] = sum x[i,j] exp(-2 pi i (ui/H + vj/W))."""
    x = _plane(plane)
    h, w = x.shape
    u = np.arange(h)
    v = np.arange(w)
    phase_h = np.outer(u, u) / h  # [u, i]
    phase_w = np.outer(v, v) / w  # [v, j]
    kernel = np.exp(-2j * np.pi * (phase_h[:, None, :, None] + phase_w[None, :, None, :]))
    return ComplexPlane.from_complex(np.einsum("uvij,ij->uv", kernel, x))


def _is_pow2(n: int) -> bool:
    return n & (n - 1) == 0


def _fft_last(a: np.ndarray) -> np.ndarray:
    """Batched 1-D DFT along the last axis."""
    n = a.shape[-1]
    if n == 1:
        return a.astype(np.complex128)
    lead = a.shape[:-1]
    if not _is_pow2(n):
        k = np.arange(n)
        mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
        return a @ mat.T
    # iterative radix-2 decimation in time, vectorized over butterflies
    x = a.reshape(-1, 1, n).astype(np.complex128)
    while x.shape[1] < n:
        half = x.shape[2] // 2
        even = x[:, :, :half]
        odd = x[:, :, half:]
        twiddle = np.exp(-1j * np.pi * np.arange(x.shape[1]) / x.shape[1])[None, :, None]
        x = np.concatenate([even + twiddle * odd, even - twiddle * odd], axis=1)
    return x.reshape(*lead, n)


def fft_axis(a: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(_fft_last(np.moveaxis(a, axis, -1)), -1, axis)


def fft2(a: np.ndarray, axes: tuple[int, int] = (-2, -1)) -> np.ndarray:
    """Row-column 2-D transform of a real or complex array over ``axes``."""
    return fft_axis(fft_axis(a, axes[1]), axes[0])


def ifft2(a: np.ndarray, axes: tuple[int, int] = (-2, -1)) -> np.ndarray:
    scale = a.shape[axes[0]] * a.shape[axes[1]]
    return np.conj(fft2(np.conj(a), axes)) / scale


def fft2d(plane) -> ComplexPlane:
    """Fast path of :func:`dft2d_naive`: radix-2 for power-of-two extents, direct otherwise."""
    return ComplexPlane.from_complex(fft2(_plane(plane)))


def ifft2d(f: ComplexPlane) -> ComplexPlane:
    return ComplexPlane.from_complex(ifft2(f.to_complex()))


def magnitude(f: ComplexPlane) -> np.ndarray:
    return np.hypot(f.real, f.imag)


def magnitude_adjoint(spectrum: np.ndarray, upstream: np.ndarray, axes=(-2, -1)) -> np.ndarray:
    """Gradient w.r.t. the real spatial input of |DFT(x)| given d(loss)/d|F|.

    Applies the conjugate-transpose DFT to upstream * F/|F| and keeps the real
    part; bins with |F| = 0 contribute nothing.
    """
    mag = np.abs(spectrum)
    phase = np.divide(spectrum, mag, out=np.zeros_like(spectrum), where=mag > 0)
    weighted = upstream * phase
    # adjoint of the unnormalized forward DFT is H*W times the inverse
    scale = spectrum.shape[axes[0]] * spectrum.shape[axes[1]]
    return np.real(ifft2(weighted, axes)) * scale


def fft_magnitude(x: Tensor) -> Tensor:
    """|FFT2D(x)| per sample and channel for N x H x W x C input."""
    if x.ndim != 4:
        raise ShapeError(f"fft_magnitude expects N x H x W x C input, got {x.shape}")
    spectrum = fft2(x.data, axes=(1, 2))
    mag = np.abs(spectrum)
    return _result(mag, (x,), lambda g: (magnitude_adjoint(spectrum, g, axes=(1, 2)),))

"""Gini sparsity of BOLD time courses in a Fourier and a Haar basis."""

from __future__ import annotations

import math

import numpy as np

from ..errors import UndefinedSparsityError, ValidationError

MIN_LENGTH = 16


def gini_index(values) -> float:
    """Gini index of a non-negative vector: 0 when flat, (n-1)/n for one-hot."""
    a = np.sort(np.asarray(values, dtype=float).ravel())
    if a.size == 0:
        raise UndefinedSparsityError("empty vector")
    if a[0] < 0:
        raise ValidationError("gini index needs non-negative values")
    total = math.fsum(a)
    if total <= 0:
        raise UndefinedSparsityError("gini index undefined for an all-zero vector")
    n = a.size
    k = np.arange(1, n + 1)
    # symmetric integer weights; fsum keeps the flat case exactly zero
    num = math.fsum((2 * k - n - 1) * a)
    return num / (n * total)


def _check_signal(bold) -> np.ndarray:
    x = np.asarray(bold, dtype=float).ravel()
    if x.size < MIN_LENGTH:
        raise ValidationError(f"BOLD signal needs at least {MIN_LENGTH} samples")
    if not np.all(np.isfinite(x)):
        raise ValidationError("BOLD signal has non-finite samples")
    return x


def sine_sparsity(bold) -> float:
    """Gini of DFT magnitudes over bins 1..N/2 (DC dropped)."""
    x = _check_signal(bold)
    spectrum = np.abs(np.fft.rfft(x))[1:x.size // 2 + 1]
    return gini_index(spectrum)


def haar_details(x) -> list[np.ndarray]:
    """Detail coefficients of a full orthonormal Haar decomposition, finest first."""
    a = np.asarray(x, dtype=float)
    n = a.size
    if n < 2 or n & (n - 1):
        raise ValidationError("Haar decomposition needs a power-of-two length")
    out = []
    while a.size > 1:
        even, odd = a[0::2], a[1::2]
        out.append((even - odd) / math.sqrt(2.0))
        a = (even + odd) / math.sqrt(2.0)
    return out


def pad_pow2(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = max(MIN_LENGTH, 1 << max(0, (x.size - 1).bit_length()))
    if n == x.size:
        return x
    return np.concatenate([x, np.zeros(n - x.size)])


def wavelet_sparsity(bold) -> float:
    """Gini of absolute Haar detail coefficients (signal zero-padded to 2^k)."""
    x = pad_pow2(_check_signal(bold))
    return gini_index(np.abs(np.concatenate(haar_details(x))))

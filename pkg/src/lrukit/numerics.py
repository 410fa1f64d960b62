"""Dense-matrix and spectral utilities.

Contents:

* complex pair helpers (``as_complex`` / ``split_complex``) — learnable
  complex tensors elsewhere in the library are stored as separate real and
  imaginary float64 arrays; these helpers convert to/from the transient
  ``complex128`` representation used inside forward passes,
* a discrete Fourier transform (direct for short signals, iterative
  radix-2 for long power-of-two signals),
* spectral-radius and trace-moment estimators for dense matrices, used to
  check that Glorot-initialized recurrence matrices fill the unit disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Spectrum",
    "GelfandEstimate",
    "as_complex",
    "split_complex",
    "dft",
    "dft_values",
    "gelfand_spectral_radius",
    "trace_moment",
    "regularized_gamma_upper",
    "chi2_survival",
]

# Length up to which the DFT is evaluated by direct summation; above this
# only power-of-two lengths are supported (radix-2).
_DIRECT_DFT_MAX = 4096

# Cap on scratch size (entries) for one block of the direct transform.
_DFT_BLOCK_ENTRIES = 2_000_000


def as_complex(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    """Combine separate real/imag arrays into one complex128 array."""
    re = np.asarray(re, dtype=np.float64)
    im = np.asarray(im, dtype=np.float64)
    if re.shape != im.shape:
        raise ValueError(f"real/imag shape mismatch: {re.shape} vs {im.shape}")
    return re + 1j * im


def split_complex(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a complex array into float64 (real, imag) copies."""
    z = np.asarray(z)
    return np.real(z).astype(np.float64), np.imag(z).astype(np.float64)


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class Spectrum:
    """Power spectrum of a signal.

    ``freqs`` are normalized frequencies (cycles per sample, bin j is
    j/L); ``power`` is the squared magnitude of each DFT bin.
    """

    freqs: np.ndarray
    power: np.ndarray

    def __post_init__(self) -> None:
        if self.freqs.shape != self.power.shape:
            raise ValueError("freqs and power must have matching shapes")
        if np.any(self.power < 0):
            raise ValueError("power must be nonnegative")


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _dft_direct(x: np.ndarray) -> np.ndarray:
    """Direct O(L²) transform, evaluated in row blocks to bound memory."""
    length = x.shape[0]
    out = np.empty(length, dtype=np.complex128)
    k = np.arange(length)
    block = max(1, min(length, _DFT_BLOCK_ENTRIES // length))
    base = -2j * np.pi / length
    for start in range(0, length, block):
        rows = np.arange(start, min(start + block, length))
        out[rows] = np.exp(base * rows[:, None] * k[None, :]) @ x
    return out


def _fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT (length must be 2^m)."""
    length = x.shape[0]
    levels = length.bit_length() - 1
    # Bit-reversal permutation.
    idx = np.arange(length)
    rev = np.zeros(length, dtype=np.int64)
    for _ in range(levels):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    out = np.asarray(x, dtype=np.complex128)[rev]
    half = 1
    while half < length:
        tw = np.exp(-1j * np.pi * np.arange(half) / half)
        blocks = out.reshape(-1, 2 * half)
        even = blocks[:, :half].copy()
        odd = blocks[:, half:] * tw
        blocks[:, :half] = even + odd
        blocks[:, half:] = even - odd
        half *= 2
    return out


def dft_values(signal: np.ndarray) -> np.ndarray:
    """Complex DFT bins X_j = Σ_k x_k exp(−2πi jk/L).

    Direct summation for L ≤ 4096; radix-2 for longer power-of-two
    lengths (longer non-power-of-two lengths are rejected — spectral
    work at large L sticks to power-of-two grids).
    """
    x = np.asarray(signal)
    if x.ndim != 1:
        raise ValueError(f"signal must be 1-D, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("signal must be non-empty")
    _require_finite(x, "signal")
    if np.iscomplexobj(x):
        x = x.astype(np.complex128)
    else:
        x = x.astype(np.float64)
    length = x.shape[0]
    if length <= _DIRECT_DFT_MAX:
        return _dft_direct(x)
    if not _is_power_of_two(length):
        raise ValueError(
            f"length {length} > {_DIRECT_DFT_MAX} must be a power of two"
        )
    return _fft_radix2(x)


def dft(signal: np.ndarray) -> Spectrum:
    """Power spectrum of a real signal; Parseval: sum(power)/L = sum(x²)."""
    values = dft_values(signal)
    length = values.shape[0]
    power = np.abs(values) ** 2
    freqs = np.arange(length, dtype=np.float64) / length
    return Spectrum(freqs=freqs, power=power)


@dataclass(frozen=True)
class GelfandEstimate:
    """Spectral-radius estimate ‖A^k‖_F^(1/k) with its k/2 diagnostic.

    The estimate is not guaranteed monotone in k, so the value at half
    the final power count is reported alongside for convergence checks.
    """

    radius: float
    radius_half_k: float
    k: int


def _frobenius_log_power(a: np.ndarray, k: int) -> float:
    """log ‖A^k‖_F via square-and-multiply with per-multiply renormalization.

    Each partial product is rescaled to unit Frobenius norm and the log
    of the scale accumulated, so the computation cannot overflow however
    large ‖A‖ or k are.  Returns −inf for a (numerically) nilpotent-to-zero
    product.
    """
    base = a
    base_norm = float(np.linalg.norm(base))
    if base_norm == 0.0:
        return -np.inf
    base = base / base_norm
    base_log = np.log(base_norm)

    result = None
    result_log = 0.0
    e = k
    while e > 0:
        if e & 1:
            if result is None:
                result, result_log = base, base_log
            else:
                result = result @ base
                result_log += base_log
                norm = float(np.linalg.norm(result))
                if norm == 0.0:
                    return -np.inf
                result /= norm
                result_log += np.log(norm)
        e >>= 1
        if e:
            base = base @ base
            base_log *= 2
            norm = float(np.linalg.norm(base))
            if norm == 0.0:
                # base^2 underflowed; if result still needs factors the
                # whole product is numerically zero.
                return -np.inf
            base /= norm
            base_log += np.log(norm)
    assert result is not None
    # Every partial product was renormalized to unit Frobenius norm with
    # the scale folded into result_log, so result_log is log ‖A^k‖_F.
    return result_log


def gelfand_spectral_radius(a: np.ndarray, k: int = 64) -> GelfandEstimate:
    """Estimate the spectral radius of a square matrix as ‖A^k‖_F^(1/k).

    By Gelfand's formula the estimate converges to the true radius as k
    grows; matrix powers use repeated squaring with Frobenius
    renormalization, so no overflow occurs for any input scale.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(
            "matrix has non-finite entries; rescale the input (divide by its "
            "norm, estimate, multiply back) before calling"
        )
    if k < 8:
        raise ValueError(f"power count k must be ≥ 8, got {k}")

    def estimate(power: int) -> float:
        log_norm = _frobenius_log_power(a, power)
        if log_norm == -np.inf:
            return 0.0
        return float(np.exp(log_norm / power))

    return GelfandEstimate(radius=estimate(k), radius_half_k=estimate(k // 2), k=k)


def trace_moment(a: np.ndarray, k: int) -> float:
    """(1/N)·trace(A^k) for 1 ≤ k ≤ 8.

    For matrices drawn from the circular-law ensemble every such moment
    vanishes as N grows (the uniform disk measure has no holomorphic
    moments).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    _require_finite(a, "matrix")
    if not 1 <= k <= 8:
        raise ValueError(f"moment order must be in [1, 8], got {k}")
    power = a
    for _ in range(k - 1):
        power = power @ a
    return float(np.trace(power)) / a.shape[0]


def regularized_gamma_upper(a: float, x: float) -> float:
    """Q(a, x) = Γ(a, x)/Γ(a), the upper regularized incomplete gamma.

    Series expansion below the a+1 crossover, Lentz continued fraction
    above — the classic split that converges fast on both sides.
    """
    if a <= 0:
        raise ValueError(f"shape parameter must be positive, got {a}")
    if x < 0:
        raise ValueError(f"argument must be non-negative, got {x}")
    if x == 0.0:
        return 1.0
    log_prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # P(a, x) via its power series; Q = 1 − P.
        term = 1.0 / a
        total = term
        denom = a
        for _ in range(1000):
            denom += 1.0
            term *= x / denom
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return 1.0 - total * math.exp(log_prefix)
    # Q(a, x) via the continued fraction, modified Lentz iteration.
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(log_prefix) * h


def chi2_survival(x: float, dof: int) -> float:
    """P(X ≥ x) for a chi-squared variable with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    return regularized_gamma_upper(dof / 2.0, x / 2.0)

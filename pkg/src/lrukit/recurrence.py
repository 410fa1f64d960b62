"""Forward evaluation of recurrences.

The core primitive is the affine scan: given per-step affine maps
x ↦ a⊙x + b on C^N, compute all prefix states.  Pairs (a, b) form a
monoid under

    combine((a1, b1), (a2, b2)) = (a2⊙a1, a2⊙b1 + b2)     (e2 applied after e1)

with identity (1, 0), which is what makes parallel evaluation possible.

Two execution modes are provided:

* ``sequential`` — the textbook timestep loop (the correctness oracle),
* ``parallel`` — a chunked two-pass scheme: the sequence is cut into T
  contiguous chunks, all chunk-local scans run simultaneously (the time
  loop is vectorized across chunks, and optionally split over a thread
  pool), chunk summaries are combined sequentially (T cheap steps), and
  the summary offsets are broadcast back into the local results.  A
  non-multiple tail chunk is processed natively, no padding.

This module also houses the dense vanilla-RNN baseline, zero-order-hold
discretization of diagonal continuous-time systems, the real 2×2-block
equivalent of a complex-diagonal map, and impulse-response extraction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .initializers import LruParams

__all__ = [
    "ScanElement",
    "ZohSystem",
    "scan_combine",
    "scan_identity",
    "affine_scan",
    "lru_forward",
    "dense_rnn_forward",
    "zoh_discretize",
    "to_real_block_form",
    "impulse_response",
    "impulse_response_matrix",
]


@dataclass(frozen=True)
class ScanElement:
    """Affine map x ↦ a⊙x + b over C^N."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.a) != np.shape(self.b):
            raise ValueError(
                f"scan element parts must match: {np.shape(self.a)} vs {np.shape(self.b)}"
            )


def scan_identity(n: int) -> ScanElement:
    """Identity element (a=1, b=0) of the affine-map monoid."""
    return ScanElement(np.ones(n, dtype=np.complex128),
                       np.zeros(n, dtype=np.complex128))


def scan_combine(e1: ScanElement, e2: ScanElement) -> ScanElement:
    """Compose two affine maps; ``e2`` is the later (outer) element."""
    if np.shape(e1.a) != np.shape(e2.a):
        raise ValueError(
            f"scan element dimension mismatch: {np.shape(e1.a)} vs {np.shape(e2.a)}"
        )
    return ScanElement(e2.a * e1.a, e2.a * e1.b + e2.b)


def _sequential_scan(lam: np.ndarray, b_seq: np.ndarray) -> np.ndarray:
    """Reference timestep loop: x_k = λ⊙x_{k−1} + b_k, x_0 = 0."""
    batch, length, n = b_seq.shape
    x = np.empty_like(b_seq)
    state = np.zeros((batch, n), dtype=b_seq.dtype)
    for k in range(length):
        state = lam * state + b_seq[:, k]
        x[:, k] = state
    return x


def _local_chunk_scan(lam: np.ndarray, blocks: np.ndarray, out: np.ndarray) -> None:
    """Scan each chunk from a zero state; vectorized across chunks.

    ``blocks``/``out`` have shape (batch, T, chunk_len, N); the loop runs
    over chunk_len only, touching all chunks at once.
    """
    chunk_len = blocks.shape[2]
    out[:, :, 0] = blocks[:, :, 0]
    for j in range(1, chunk_len):
        np.multiply(lam, out[:, :, j - 1], out=out[:, :, j])
        out[:, :, j] += blocks[:, :, j]


def _chunked_scan(
    lam: np.ndarray,
    b_seq: np.ndarray,
    chunk_len: int | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Two-pass chunked scan; same contract as the sequential loop."""
    batch, length, n = b_seq.shape
    if chunk_len is None:
        # Balance the two Python loop lengths (chunk_len and T ≈ L/chunk_len).
        chunk_len = max(8, int(math.sqrt(length)))
    chunk_len = min(chunk_len, length)
    n_chunks = length // chunk_len
    main_len = n_chunks * chunk_len
    tail_len = length - main_len

    x = np.empty_like(b_seq)
    main = b_seq[:, :main_len].reshape(batch, n_chunks, chunk_len, n)
    x_main = x[:, :main_len].reshape(batch, n_chunks, chunk_len, n)

    def chunk_ranges(start: int, count: int) -> list[tuple[int, int]]:
        # Contiguous chunk ranges so workers receive writable views
        # (advanced indexing would hand them copies).
        bounds = np.linspace(start, start + count,
                             min(threads, count) + 1).astype(int)
        return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo]

    # Pass 1: independent local scans (zero initial state per chunk).
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_local_chunk_scan, lam, main[:, lo:hi], x_main[:, lo:hi])
                for lo, hi in chunk_ranges(0, n_chunks)
            ]
            for f in futures:
                f.result()
    else:
        _local_chunk_scan(lam, main, x_main)

    # Decay powers λ^(j+1) for each in-chunk position j.
    lam_pow = np.cumprod(np.broadcast_to(lam, (chunk_len, n)), axis=0)
    lam_chunk = lam_pow[-1]

    # Pass 2: sequential combine of chunk summaries -> state entering each
    # chunk.  offsets[t] = x state just before chunk t starts.
    offsets = np.zeros((batch, n_chunks, n), dtype=b_seq.dtype)
    carry = np.zeros((batch, n), dtype=b_seq.dtype)
    for t in range(1, n_chunks):
        carry = lam_chunk * carry + x_main[:, t - 1, -1]
        offsets[:, t] = carry

    # Pass 3: fold offsets into the local results: x_j += λ^(j+1) ⊙ offset.
    def apply_offsets(lo: int, hi: int) -> None:
        x_main[:, lo:hi] += lam_pow[None, None] * offsets[:, lo:hi, None]

    if n_chunks > 1:
        if threads > 1 and n_chunks > 2:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(apply_offsets, lo, hi)
                           for lo, hi in chunk_ranges(1, n_chunks - 1)]
                for f in futures:
                    f.result()
        else:
            apply_offsets(1, n_chunks)

    # Tail (length not a multiple of chunk_len): one more scan seeded by
    # the final corrected state of the main part.
    if tail_len:
        tail = b_seq[:, main_len:]
        x_tail = x[:, main_len:]
        prev = x[:, main_len - 1]
        for j in range(tail_len):
            prev = lam * prev + tail[:, j]
            x_tail[:, j] = prev
    return x


def affine_scan(
    lam: np.ndarray,
    b_seq: np.ndarray,
    mode: str = "parallel",
    chunk_len: int | None = None,
    threads: int = 1,
) -> np.ndarray:
    """All prefix states of x_k = λ⊙x_{k−1} + b_k with x_0 = 0.

    ``lam``: (N,) complex; ``b_seq``: (batch, L, N) complex.  Returns the
    trajectory (batch, L, N).  ``parallel`` agrees with ``sequential`` to
    1e-10 relative (summation order differs, so not bit-exact).
    """
    if mode == "sequential":
        return _sequential_scan(lam, b_seq)
    if mode == "parallel":
        return _chunked_scan(lam, b_seq, chunk_len=chunk_len, threads=threads)
    raise ValueError(f"unknown scan mode {mode!r}; use 'sequential' or 'parallel'")


def _as_batched(u: np.ndarray) -> tuple[np.ndarray, bool]:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 2:
        u, squeeze = u[None], True
    elif u.ndim == 3:
        u, squeeze = u, False
    else:
        raise ValueError(
            f"inputs must be (L, H) or (batch, L, H), got shape {u.shape}"
        )
    if u.shape[1] < 1:
        raise ValueError("sequence length must be ≥ 1")
    return u, squeeze


def lru_forward(
    params: LruParams,
    u: np.ndarray,
    mode: str = "parallel",
    threads: int = 1,
    chunk_len: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass of the recurrent layer.

        x_k = λ ⊙ x_{k−1} + γ ⊙ (B u_k),   x_0 = 0
        y_k = Re(C x_k) + D ⊙ u_k

    Returns (y, x): y real (batch, L, H), x the complex hidden trajectory
    (batch, L, N) — the trajectory is what the backward pass consumes.
    Accepts (L, H) inputs as a convenience (treated as batch of one; the
    batch axis is then squeezed from both outputs).
    """
    u, squeeze = _as_batched(u)
    if not np.all(np.isfinite(u)):
        raise ValueError("inputs contain NaN or Inf")
    h = params.width
    if u.shape[-1] != h:
        raise ValueError(
            f"input feature dim {u.shape[-1]} does not match layer width {h}"
        )
    lam = params.lam
    b_seq = (params.gamma * (u @ params.b.T)).astype(np.complex128)
    x = affine_scan(lam, b_seq, mode=mode, chunk_len=chunk_len, threads=threads)
    y = np.real(x @ params.c.T) + params.d * u
    if squeeze:
        return y[0], x[0]
    return y, x


def dense_rnn_forward(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    d: np.ndarray,
    activation: str,
    u: np.ndarray,
    return_hidden: bool = False,
):
    """Vanilla RNN baseline: x_k = σ(A x_{k−1} + B u_k), y_k = C x_k + D u_k.

    A: (N, N), B: (N, H_in), C: (H_out, N), D: (H_out, H_in) real matrices;
    strictly sequential evaluation (no scan shortcut even for σ = identity).
    """
    u, squeeze = _as_batched(u)
    if activation not in ("linear", "tanh", "relu"):
        raise ValueError(f"unknown activation {activation!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"A must be square, got {a.shape}")
    if b.shape[0] != n or c.shape[1] != n:
        raise ValueError("B/C dims do not match the state dimension")
    if u.shape[-1] != b.shape[1]:
        raise ValueError(
            f"input feature dim {u.shape[-1]} does not match B columns {b.shape[1]}"
        )
    batch, length, _ = u.shape
    bu = u @ b.T
    x = np.empty((batch, length, n), dtype=np.float64)
    state = np.zeros((batch, n), dtype=np.float64)
    for k in range(length):
        pre = state @ a.T + bu[:, k]
        if activation == "tanh":
            state = np.tanh(pre)
        elif activation == "relu":
            state = np.maximum(pre, 0.0)
        else:
            state = pre
        x[:, k] = state
    y = x @ c.T + u @ d.T
    if squeeze:
        y, x = y[0], x[0]
    if return_hidden:
        return y, x
    return y


@dataclass(frozen=True)
class ZohSystem:
    """Diagonal continuous-time system ẋ = ã⊙x + B̃u sampled at step Δ."""

    a_tilde: np.ndarray
    b_tilde: np.ndarray
    delta: float

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError(f"sampling step Δ must be positive, got {self.delta}")
        if np.any(np.real(self.a_tilde) >= 0):
            raise ValueError("continuous-time diagonal must have Re(ã) < 0")
        if self.b_tilde.shape[0] != self.a_tilde.shape[0]:
            raise ValueError("B̃ rows must match the diagonal length")


def zoh_discretize(
    sys: ZohSystem, mode: str = "exact"
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of a diagonal system.

    exact:        λ = exp(Δ·ã),  b = ((λ − 1)/ã) ⊙-rows B̃
    first_order:  λ = exp(Δ·ã),  b = Δ·B̃   (the Δ→0 expansion of the above)
    """
    a = np.asarray(sys.a_tilde, dtype=np.complex128)
    b = np.asarray(sys.b_tilde, dtype=np.complex128)
    lam = np.exp(sys.delta * a)
    if mode == "first_order":
        return lam, sys.delta * b
    if mode != "exact":
        raise ValueError(f"unknown discretization mode {mode!r}")
    if np.any(a == 0):
        raise ValueError(
            "ã has zero entries: (λ−1)/ã is undefined; use mode='first_order' "
            "for the Δ·B̃ limit"
        )
    return lam, ((lam - 1.0) / a)[:, None] * b


def to_real_block_form(lam: np.ndarray) -> np.ndarray:
    """Real 2N×2N block-diagonal equivalent of the complex diagonal map.

    Each eigenvalue becomes the rotation-scaling block
    [[Re λ, −Im λ], [Im λ, Re λ]]; matrix powers of the result equal the
    block form of elementwise powers of λ.
    """
    lam = np.asarray(lam, dtype=np.complex128)
    if lam.ndim != 1:
        raise ValueError(f"expected a vector of eigenvalues, got shape {lam.shape}")
    n = lam.shape[0]
    out = np.zeros((2 * n, 2 * n), dtype=np.float64)
    re, im = np.real(lam), np.imag(lam)
    idx = np.arange(n)
    out[2 * idx, 2 * idx] = re
    out[2 * idx, 2 * idx + 1] = -im
    out[2 * idx + 1, 2 * idx] = im
    out[2 * idx + 1, 2 * idx + 1] = re
    return out


def impulse_response_matrix(params: LruParams, length: int) -> np.ndarray:
    """Re(x_k) for all state channels under the impulse input.

    The impulse puts u_1 = 1 (all input features) and u_k = 0 afterward,
    so x_k = λ^{k−1} ⊙ (γ ⊙ B·1) in closed form — evaluated directly here;
    tests cross-check against running the scan on the literal impulse.
    Returns (L, N) real.
    """
    if length < 1:
        raise ValueError(f"length must be ≥ 1, got {length}")
    x1 = params.gamma * (params.b @ np.ones(params.b.shape[1]))
    lam = params.lam
    traj = np.empty((length, params.state_dim), dtype=np.complex128)
    traj[0] = x1
    for k in range(1, length):
        traj[k] = traj[k - 1] * lam
    return np.real(traj)


def impulse_response(params: LruParams, length: int, channel: int) -> np.ndarray:
    """Re(x_k) trajectory of one state channel under the impulse input."""
    if not 0 <= channel < params.state_dim:
        raise ValueError(
            f"channel {channel} out of range for state dim {params.state_dim}"
        )
    return impulse_response_matrix(params, length)[:, channel]

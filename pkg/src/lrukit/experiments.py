"""Desk-scale analytical and toy experiments.

Contents:

* steady-state gain of the un-normalized recurrence — closed form vs
  Monte-Carlo simulation;
* the convolution-kernel learning task and a runs-batched trainer that
  fits every (activation, learning-rate, seed) combination of a dense
  single-layer RNN simultaneously;
* the scalar powers-learning task comparing standard (Re/Im) against
  exponential (ν, θ) parameterizations under Adam;
* spectral-leakage demonstrations: tone-through-ReLU, the exact
  masked-signal spectrum identity, and the linear layer's frequency
  preservation;
* eigenvalue-spectrum reports for ring samples and dense Gaussian
  matrices;
* a stability trace for training with eigenvalues initialized near the
  unit circle, scan micro-benchmarks, and impulse/discretization reports.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .initializers import (
    RingConfig,
    glorot_dense,
    glorot_matrix,
    lru_init,
    sample_ring,
)
from .model import ModelConfig, ModelParams, model_backward, model_forward, model_init
from .numerics import Spectrum, chi2_survival, dft, dft_values, gelfand_spectral_radius, trace_moment
from .recurrence import (
    ZohSystem,
    affine_scan,
    impulse_response_matrix,
    lru_forward,
    zoh_discretize,
)
from .reporting import ExperimentReport
from .seeding import make_generator, split
from .training import OptimConfig, TrainTask, sequence_mse, train_loop

__all__ = [
    "GainResult",
    "gain_formula",
    "gain_monte_carlo",
    "ConvTask",
    "conv_kernel_task",
    "CONV_LR_GRID",
    "mildly_stable_seeds",
    "conv_rnn_grid",
    "PowersTaskConfig",
    "powers_value_and_grad",
    "powers_task_run",
    "powers_comparison",
    "leakage_demo",
    "piecewise_signal",
    "active_runs",
    "activation_kernel",
    "relu_spectrum_identity",
    "lru_tone_offband",
    "spectrum_report",
    "stability_run",
    "bench_scan",
    "impulse_report",
    "zoh_report",
]


# --------------------------------------------------------------------------
# Steady-state gain
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GainResult:
    """Closed-form vs simulated steady-state gain E‖x_L‖² / E‖Bu‖²."""

    r_min: float
    r_max: float
    closed_form: float
    monte_carlo: float
    mc_quantiles: tuple[float, float]
    gains: tuple[float, ...]
    n: int
    length: int
    input_mode: str
    trials: int

    def __post_init__(self) -> None:
        if self.closed_form <= 0:
            raise ValueError("closed-form gain must be positive")


def gain_formula(r_min: float, r_max: float) -> float:
    """Expected squared-norm gain for eigenvalues uniform on the ring.

    General branch: log((1−r_min²)/(1−r_max²)) / (r_max²−r_min²);
    the equal-radius limit is 1/(1−r²).  Diverges as r_max → 1.
    """
    if not 0.0 <= r_min <= r_max:
        raise ValueError(f"need 0 ≤ r_min ≤ r_max, got [{r_min}, {r_max}]")
    if r_max >= 1.0:
        raise ValueError(
            f"r_max must be < 1 (gain diverges at the unit circle), got {r_max}"
        )
    lo, hi = r_min * r_min, r_max * r_max
    if hi == lo:
        return 1.0 / (1.0 - hi)
    # log((1−lo)/(1−hi)) computed as log1p of a stable ratio.
    return math.log1p((hi - lo) / (1.0 - hi)) / (hi - lo)


def gain_monte_carlo(
    r_min: float,
    r_max: float,
    n: int = 500,
    length: int = 10_000,
    input_mode: str = "white_noise",
    trials: int = 10,
    rng: np.random.Generator | None = None,
    input_dim: int = 1,
) -> GainResult:
    """Simulate x_k = Λx_{k−1} + Bu_k (no input normalization) and report
    the steady-state ratio E‖x‖²/E‖Bu‖² per trial, aggregated over
    ``trials``.  The expectation is estimated by averaging ‖x_k‖² over the
    second half of each trajectory, after the zero-state transient died.

    Eigenvalues are drawn uniformly on the ring with full phase; B is
    complex Glorot.  ``input_mode`` is "white_noise" (fresh Gaussian input
    every step) or "constant" (one Gaussian input held for all steps).
    """
    if input_mode not in ("white_noise", "constant"):
        raise ValueError(f"unknown input mode {input_mode!r}")
    if trials < 1:
        raise ValueError(f"need at least one trial, got {trials}")
    closed = gain_formula(r_min, r_max)  # also validates radii
    if r_max > 0 and (length // 2) * math.log(r_max) > math.log(1e-3):
        warnings.warn(
            f"r_max^(L/2) = {r_max ** (length // 2):.2e} is not negligible: "
            "the averaging window still carries the zero-state transient and "
            "the simulated gain will be biased low",
            stacklevel=2,
        )
    ring = RingConfig(r_min=r_min, r_max=r_max)
    if rng is None:
        rng = make_generator(0)
    gains = []
    for trial_rng in split(rng, trials):
        lam_rng, b_rng, u_rng = split(trial_rng, 3)
        nu, theta = sample_ring(ring, n, lam_rng)
        lam = np.exp(-nu + 1j * theta)
        b_re, b_im = _glorot_complex_pair(n, input_dim, b_rng)
        b = b_re + 1j * b_im
        if input_mode == "white_noise":
            u = u_rng.standard_normal((length, input_dim))
        else:
            u = np.broadcast_to(
                u_rng.standard_normal(input_dim), (length, input_dim)
            )
        b_seq = u @ b.T
        states = affine_scan(lam, b_seq[None], mode="parallel")[0]
        tail = states[length // 2 :]
        steady = float(np.mean(np.sum(np.abs(tail) ** 2, axis=1)))
        drive = float(np.mean(np.sum(np.abs(b_seq) ** 2, axis=1)))
        gains.append(steady / drive)
    gains_arr = np.asarray(gains)
    p5, p95 = np.percentile(gains_arr, [5.0, 95.0])
    return GainResult(
        r_min=r_min,
        r_max=r_max,
        closed_form=closed,
        monte_carlo=float(gains_arr.mean()),
        mc_quantiles=(float(p5), float(p95)),
        gains=tuple(gains),
        n=n,
        length=length,
        input_mode=input_mode,
        trials=trials,
    )


def _glorot_complex_pair(
    rows: int, cols: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    from .initializers import glorot_complex

    return glorot_complex(rows, cols, rng)


# --------------------------------------------------------------------------
# Convolution-kernel task and the dense-RNN learning-rate grid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvTask:
    """Fixed regression dataset: outputs are causal convolutions of inputs."""

    inputs: np.ndarray  # (count, length)
    targets: np.ndarray  # (count, length)
    kernel: np.ndarray  # (length,)
    a: np.ndarray
    c: np.ndarray
    seed: int


def conv_kernel_task(
    seed: int,
    count: int = 32,
    length: int = 100,
    a_range: tuple[float, float] = (0.5, 2.0),
) -> ConvTask:
    """Inputs sin(0.05·a·k)·cos(0.05·c·k)² with a, c ~ U[a_range]; targets are
    the causal convolution with h_k = 0.1·exp(−0.015k)·cos(0.04k)²."""
    if count < 1 or length < 1:
        raise ValueError("count and length must be positive")
    lo, hi = a_range
    if not lo < hi:
        raise ValueError(f"a_range must be increasing, got {a_range}")
    rng = make_generator(seed)
    a = rng.uniform(lo, hi, count)
    c = rng.uniform(lo, hi, count)
    k = np.arange(length, dtype=np.float64)
    kernel = 0.1 * np.exp(-0.015 * k) * np.cos(0.04 * k) ** 2
    inputs = np.sin(0.05 * a[:, None] * k) * np.cos(0.05 * c[:, None] * k) ** 2
    targets = np.empty_like(inputs)
    for i in range(count):
        targets[i] = np.convolve(inputs[i], kernel)[:length]
    return ConvTask(
        inputs=inputs, targets=targets, kernel=kernel, a=a, c=c, seed=seed
    )


# Step-size grid for the linear-vs-tanh comparison.  The informative band
# is narrow: above ~3e-4 both variants fall to the same optimizer
# edge-of-stability floor (~1e-2, orderings are noise there) and at
# >=3e-3 the linear runs diverge outright, so the grid samples the
# low-rate region where the curves have actually converged to distinct
# optima within the step budget.
CONV_LR_GRID: tuple[float, ...] = (5e-5, 1e-4, 2e-4)


def mildly_stable_seeds(
    count: int,
    n_hidden: int = 100,
    threshold: float = 1.03,
    start: int = 0,
    max_tries: int = 10_000,
) -> tuple[int, ...]:
    """First ``count`` seeds whose dense-RNN start is near the stable edge.

    A Glorot-initialized n×n recurrence matrix has spectral radius
    concentrated slightly *above* one (≈1.05 at n=100), so most seeds
    start a linear RNN unstable while the saturating tanh variant
    self-stabilizes regardless.  Variant comparisons are therefore run on
    seeds whose initial spectral radius is below ``threshold``; this
    scans seeds upward from ``start``, reproducing exactly the
    initialization draw of ``conv_rnn_grid``, and returns the first
    ``count`` that qualify.
    """
    if count < 1:
        raise ValueError("count must be positive")
    picked: list[int] = []
    for seed in range(start, start + max_tries):
        a_rng = split(make_generator(seed), 4)[0]
        a0 = glorot_matrix(n_hidden, n_hidden, a_rng)
        if np.abs(np.linalg.eigvals(a0)).max() < threshold:
            picked.append(seed)
            if len(picked) == count:
                return tuple(picked)
    raise ValueError(f"found only {len(picked)} qualifying seeds in {max_tries} tries")


def conv_rnn_grid(
    lrs: Sequence[float] = CONV_LR_GRID,
    seeds: Sequence[int] | None = None,
    steps: int = 2000,
    n_hidden: int = 100,
    record_every: int = 100,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    dtype: np.dtype | type = np.float32,
) -> ExperimentReport:
    """Train dense single-layer RNNs (linear and tanh recurrent activation)
    on the convolution-kernel task for every (lr, seed) pair.

    All 2·|lrs|·|seeds| runs train simultaneously as one batched tensor
    program: parameters live in (runs, ...) arrays, each timestep is a
    batched matmul across runs, and the recurrent-matrix gradient is
    accumulated with one large batched matmul per step.  Per-run Adam uses
    a per-run learning-rate vector.  Linear and tanh variants share
    identical initialization and data for each seed.  The toy comparison
    only needs loss orderings, so it defaults to single precision for
    speed; pass float64 to double-check a configuration.

    ``seeds=None`` selects the first three seeds whose initial recurrence
    matrix is near-stable (``mildly_stable_seeds``), which makes the
    default run a like-for-like comparison rather than one dominated by
    how far past the stability edge each random draw landed.
    """
    lrs = tuple(float(x) for x in lrs)
    if seeds is None:
        seeds = mildly_stable_seeds(3, n_hidden)
    seeds = tuple(int(s) for s in seeds)
    if not lrs or not seeds or steps < 1:
        raise ValueError("need at least one lr, one seed, and one step")
    n = n_hidden
    per_variant = len(lrs) * len(seeds)
    runs = 2 * per_variant  # variant-major: all linear runs, then all tanh

    run_meta = [
        {"variant": variant, "lr": lr, "seed": seed}
        for variant in ("linear", "tanh")
        for lr in lrs
        for seed in seeds
    ]

    tasks = {seed: conv_kernel_task(seed) for seed in seeds}
    batch, length = tasks[seeds[0]].inputs.shape

    u = np.empty((runs, batch, length), dtype)
    t = np.empty((runs, batch, length), dtype)
    a_mat = np.empty((runs, n, n), dtype)
    b_vec = np.empty((runs, n), dtype)
    c_vec = np.empty((runs, n), dtype)
    d_vec = np.empty(runs, dtype)
    init = {}
    for seed in seeds:
        r = make_generator(seed)
        a_rng, b_rng, c_rng, d_rng = split(r, 4)
        init[seed] = (
            glorot_matrix(n, n, a_rng),
            glorot_matrix(n, 1, b_rng)[:, 0],
            glorot_matrix(1, n, c_rng)[0],
            glorot_matrix(1, 1, d_rng)[0, 0],
        )
    for r_idx, meta in enumerate(run_meta):
        seed = meta["seed"]
        u[r_idx] = tasks[seed].inputs
        t[r_idx] = tasks[seed].targets
        a0, b0, c0, d0 = init[seed]
        a_mat[r_idx] = a0
        b_vec[r_idx] = b0
        c_vec[r_idx] = c0
        d_vec[r_idx] = d0

    lr_run = np.array([m["lr"] for m in run_meta], dtype)
    tanh_slice = slice(per_variant, runs)

    params = {"a": a_mat, "b": b_vec, "c": c_vec, "d": d_vec}
    moments = {
        k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()
    }
    lr_shaped = {
        "a": lr_run[:, None, None],
        "b": lr_run[:, None],
        "c": lr_run[:, None],
        "d": lr_run,
    }
    b1, b2 = betas

    workspace = _grid_workspace(runs, batch, length, n, dtype)
    rows: list[dict[str, Any]] = []

    def record(step: int, losses: np.ndarray) -> None:
        for r_idx, meta in enumerate(run_meta):
            rows.append(
                {
                    "step": step,
                    "variant": meta["variant"],
                    "lr": meta["lr"],
                    "seed": meta["seed"],
                    "loss": float(losses[r_idx]),
                }
            )

    for step in range(steps):
        losses, grads = dense_rnn_grid_value_and_grad(
            params, u, t, tanh_slice, workspace
        )
        if step % record_every == 0:
            record(step, losses)

        # Plain Adam, one per-run learning rate vector.
        bc1 = 1.0 - b1 ** (step + 1)
        bc2 = 1.0 - b2 ** (step + 1)
        for name, p in params.items():
            g = grads[name]
            m, v = moments[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr_shaped[name] * (m / bc1) / (np.sqrt(v / bc2) + eps)

    # Final evaluation at the trained parameters.
    losses, _ = dense_rnn_grid_value_and_grad(
        params, u, t, tanh_slice, workspace, with_grads=False
    )
    record(steps, losses)

    final = {}
    for r_idx, meta in enumerate(run_meta):
        final[(meta["variant"], meta["lr"], meta["seed"])] = float(losses[r_idx])
    per_lr = {}
    for lr in lrs:
        lin = float(np.mean([final[("linear", lr, s)] for s in seeds]))
        tnh = float(np.mean([final[("tanh", lr, s)] for s in seeds]))
        per_lr[lr] = {"linear_mean": lin, "tanh_mean": tnh}
    linear_wins = all(v["linear_mean"] < v["tanh_mean"] for v in per_lr.values())

    return ExperimentReport(
        name="conv_rnn_grid",
        config={
            "lrs": list(lrs),
            "seeds": list(seeds),
            "steps": steps,
            "n_hidden": n_hidden,
            "record_every": record_every,
            "betas": list(betas),
            "eps": eps,
            "dtype": np.dtype(dtype).name,
        },
        metrics={
            "final_loss_per_lr": {
                str(lr): per_lr[lr] for lr in lrs
            },
            "linear_below_tanh_all_lrs": linear_wins,
        },
        rows=rows,
        columns=["step", "variant", "lr", "seed", "loss"],
    )


def _grid_workspace(
    runs: int, batch: int, length: int, n: int, dtype: np.dtype | type = np.float64
) -> dict[str, np.ndarray]:
    return {
        "x_prev": np.empty((runs, batch, length, n), dtype),  # x_0 .. x_{L−1}
        "x_curr": np.empty((runs, batch, length, n), dtype),  # x_1 .. x_L
        "delta_p": np.empty((runs, batch, length, n), dtype),
        "ping": np.empty((runs, batch, n), dtype),
        "pong": np.empty((runs, batch, n), dtype),
        "drive": np.empty((runs, batch, n), dtype),
    }


def dense_rnn_grid_value_and_grad(
    params: dict[str, np.ndarray],
    u: np.ndarray,
    t: np.ndarray,
    tanh_slice: slice,
    workspace: dict[str, np.ndarray] | None = None,
    with_grads: bool = True,
) -> tuple[np.ndarray, dict[str, np.ndarray] | None]:
    """Per-run MSE losses and gradients for a batch of dense RNNs.

    ``params`` holds "a" (runs, n, n), "b" (runs, n), "c" (runs, n) and
    "d" (runs,); runs inside ``tanh_slice`` use a tanh recurrence, the
    rest are linear.  Each run maps its (batch, length) inputs ``u`` to
    scalar sequences y_k = c·x_k + d·u_k with x_k = σ(A x_{k−1} + b u_k)
    and is scored by the mean squared error against ``t``.

    The hot loops write through preallocated buffers (pass ``workspace``
    to reuse them across steps) and run in the dtype of ``params``.
    """
    runs, batch, length = u.shape
    n = params["a"].shape[1]
    if workspace is None:
        workspace = _grid_workspace(runs, batch, length, n, params["a"].dtype)
    x_prev, x_curr = workspace["x_prev"], workspace["x_curr"]
    delta_p, drive = workspace["delta_p"], workspace["drive"]
    state, nxt = workspace["ping"], workspace["pong"]
    u_flat = u.reshape(runs, batch * length)
    t_flat = t.reshape(runs, batch * length)
    b_row = params["b"][:, None, :]
    c_row = params["c"][:, None, :]

    # Forward: every timestep is one batched matmul across all runs.
    a_t = params["a"].transpose(0, 2, 1)
    state[:] = 0.0
    for k in range(length):
        x_prev[:, :, k] = state
        np.matmul(state, a_t, out=nxt)
        np.multiply(u[:, :, k, None], b_row, out=drive)
        nxt += drive
        np.tanh(nxt[tanh_slice], out=nxt[tanh_slice])
        x_curr[:, :, k] = nxt
        state, nxt = nxt, state
    xc_flat = x_curr.reshape(runs, batch * length, n)
    y_flat = (xc_flat @ params["c"][:, :, None])[:, :, 0]
    y_flat += params["d"][:, None] * u_flat
    diff = y_flat - t_flat
    losses = np.mean(diff * diff, axis=1)
    if not with_grads:
        return losses, None
    dy_flat = diff
    dy_flat *= 2.0 / diff.shape[1]
    dy = dy_flat.reshape(runs, batch, length)

    # Backward through time; the A-gradient is deferred to one batched
    # matmul over all (batch, step) pairs.
    dx, dx_next = state, nxt  # reuse the ping-pong buffers
    dx[:] = 0.0
    for k in range(length - 1, -1, -1):
        np.multiply(dy[:, :, k, None], c_row, out=drive)
        dx += drive
        xk = x_curr[:, :, k]
        dx[tanh_slice] *= 1.0 - xk[tanh_slice] * xk[tanh_slice]
        delta_p[:, :, k] = dx
        np.matmul(dx, params["a"], out=dx_next)
        dx, dx_next = dx_next, dx
    dp_flat = delta_p.reshape(runs, batch * length, n)
    xp_flat = x_prev.reshape(runs, batch * length, n)
    grads = {
        "a": dp_flat.transpose(0, 2, 1) @ xp_flat,
        "b": (u_flat[:, None, :] @ dp_flat)[:, 0, :],
        "c": (dy_flat[:, None, :] @ xc_flat)[:, 0, :],
        "d": np.sum(dy_flat * u_flat, axis=1),
    }
    return losses, grads


# --------------------------------------------------------------------------
# Powers task
# --------------------------------------------------------------------------


_PARAMETERIZATIONS = ("standard", "exponential")


@dataclass(frozen=True)
class PowersTaskConfig:
    """Scalar target-matching problem: minimize ½|λ̂^k − (λ*)^k|²."""

    k: int = 100
    nu_star: float = 0.005
    theta_star: float = 0.45 * math.pi
    parameterization: str = "exponential"
    iterations: int = 500
    lr: float = 1e-3
    phase_offset: float = 0.3
    offset_jitter: float = 0.1
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"exponent k must be ≥ 1, got {self.k}")
        if self.parameterization not in _PARAMETERIZATIONS:
            raise ValueError(
                f"parameterization must be one of {_PARAMETERIZATIONS}, "
                f"got {self.parameterization!r}"
            )
        if self.iterations < 0:
            raise ValueError("iterations must be ≥ 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @property
    def lam_star(self) -> complex:
        return complex(np.exp(-self.nu_star + 1j * self.theta_star))

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "nu_star": self.nu_star,
            "theta_star": self.theta_star,
            "parameterization": self.parameterization,
            "iterations": self.iterations,
            "lr": self.lr,
            "phase_offset": self.phase_offset,
            "offset_jitter": self.offset_jitter,
            "betas": list(self.betas),
            "eps": self.eps,
        }


def _lam_from_params(p: np.ndarray, parameterization: str) -> complex:
    if parameterization == "standard":
        return complex(p[0], p[1])
    return complex(np.exp(-p[0] + 1j * p[1]))


def powers_value_and_grad(
    p: np.ndarray, cfg: PowersTaskConfig
) -> tuple[float, np.ndarray]:
    """Loss ½|λ̂^k − (λ*)^k|² and its gradient in the chosen coordinates.

    With f = λ̂^k − (λ*)^k the λ-cotangent (real/imag pair packed as a
    complex number) is k·f·conj(λ̂)^{k−1}; the exponential coordinates
    pull back through dλ̂/dν = −λ̂, dλ̂/dθ = iλ̂.
    """
    lam = _lam_from_params(p, cfg.parameterization)
    target_pow = cfg.lam_star**cfg.k
    f = lam**cfg.k - target_pow
    loss = 0.5 * abs(f) ** 2
    dlam = cfg.k * f * np.conj(lam ** (cfg.k - 1))
    if cfg.parameterization == "standard":
        grad = np.array([dlam.real, dlam.imag])
    else:
        pull = dlam * np.conj(lam)
        grad = np.array([-pull.real, pull.imag])
    return float(loss), grad


def _initial_powers_params(
    cfg: PowersTaskConfig, rng: np.random.Generator
) -> np.ndarray:
    """Correct magnitude, phase off by ~cfg.phase_offset (jittered ±10%)."""
    jitter = 1.0 + cfg.offset_jitter * (2.0 * rng.random() - 1.0)
    theta0 = cfg.theta_star + cfg.phase_offset * jitter
    if cfg.parameterization == "standard":
        lam0 = np.exp(-cfg.nu_star + 1j * theta0)
        return np.array([lam0.real, lam0.imag])
    return np.array([cfg.nu_star, theta0])


def powers_task_run(cfg: PowersTaskConfig, seed: int = 0) -> ExperimentReport:
    """Adam on the powers loss; per-iteration loss trace.

    Metric ``iterations_to_threshold`` is the first iteration whose loss
    (evaluated before the update) falls below 1e-4, or None.
    """
    rng = make_generator(seed)
    p = _initial_powers_params(cfg, rng)
    m = np.zeros(2)
    v = np.zeros(2)
    b1, b2 = cfg.betas
    rows = []
    threshold = 1e-4
    hit: int | None = None
    loss = math.inf
    for it in range(cfg.iterations + 1):
        loss, grad = powers_value_and_grad(p, cfg)
        lam = _lam_from_params(p, cfg.parameterization)
        rows.append(
            {"iteration": it, "loss": loss, "lam_re": lam.real, "lam_im": lam.imag}
        )
        if hit is None and loss < threshold:
            hit = it
        if it == cfg.iterations:
            break
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        mhat = m / (1.0 - b1 ** (it + 1))
        vhat = v / (1.0 - b2 ** (it + 1))
        p = p - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
    return ExperimentReport(
        name="powers_task",
        seed=seed,
        config=cfg.to_dict(),
        metrics={
            "final_loss": loss,
            "iterations_to_threshold": hit,
            "threshold": threshold,
        },
        rows=rows,
        columns=["iteration", "loss", "lam_re", "lam_im"],
    )


def powers_comparison(
    theta_stars: Sequence[float] = (0.40 * math.pi, 0.45 * math.pi, 0.49 * math.pi),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    base: PowersTaskConfig | None = None,
) -> ExperimentReport:
    """Run both parameterizations over θ* settings × seeds.

    A setting counts as an exponential win when the median
    iterations-to-threshold over seeds is strictly smaller than the
    standard parameterization's median (no-hit counts as +inf).
    """
    if base is None:
        base = PowersTaskConfig()
    rows = []
    wins = 0
    for theta_star in theta_stars:
        per_param: dict[str, list[float]] = {}
        for parameterization in _PARAMETERIZATIONS:
            cfg = PowersTaskConfig(
                **{
                    **base.to_dict(),
                    "betas": base.betas,
                    "theta_star": float(theta_star),
                    "parameterization": parameterization,
                }
            )
            its = []
            for seed in seeds:
                rep = powers_task_run(cfg, seed=seed)
                hit = rep.metrics["iterations_to_threshold"]
                its.append(math.inf if hit is None else float(hit))
                rows.append(
                    {
                        "theta_star": float(theta_star),
                        "parameterization": parameterization,
                        "seed": seed,
                        "iterations_to_threshold": hit,
                        "final_loss": rep.metrics["final_loss"],
                    }
                )
            per_param[parameterization] = its
        med_exp = float(np.median(per_param["exponential"]))
        med_std = float(np.median(per_param["standard"]))
        if med_exp < med_std:
            wins += 1
    return ExperimentReport(
        name="powers_comparison",
        config={
            "theta_stars": [float(t) for t in theta_stars],
            "seeds": list(seeds),
            "base": base.to_dict(),
        },
        metrics={
            "exponential_wins": wins,
            "settings": len(tuple(theta_stars)),
        },
        rows=rows,
        columns=[
            "theta_star",
            "parameterization",
            "seed",
            "iterations_to_threshold",
            "final_loss",
        ],
    )


# --------------------------------------------------------------------------
# Spectral leakage
# --------------------------------------------------------------------------


def leakage_demo(
    freq: int, length: int, activation: str = "relu"
) -> tuple[Spectrum, Spectrum, float]:
    """Spectrum of a single tone before/after a position-wise activation.

    Returns (before, after, off-band ratio): the fraction of the
    activated signal's power outside bins {0, freq, L−freq}.
    """
    if length < 4 or length & (length - 1):
        raise ValueError(f"length must be a power of two ≥ 4, got {length}")
    if not 0 < freq < length // 2:
        raise ValueError(f"freq must be a bin in (0, {length // 2}), got {freq}")
    if activation not in ("relu", "linear"):
        raise ValueError(f"unknown activation {activation!r}")
    k = np.arange(length)
    tone = np.sin(2.0 * math.pi * freq * k / length)
    out = np.maximum(tone, 0.0) if activation == "relu" else tone
    before = dft(tone)
    after = dft(out)
    ratio = _offband_ratio(after.power, {0, freq, length - freq})
    return before, after, ratio


def _offband_ratio(power: np.ndarray, in_band: set[int]) -> float:
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    inband = float(sum(power[j] for j in in_band))
    return (total - inband) / total


def piecewise_signal(
    length: int, segments: int, rng: np.random.Generator
) -> np.ndarray:
    """Random continuous piecewise-linear signal with both signs present."""
    if segments < 1 or length < 2:
        raise ValueError("need length ≥ 2 and segments ≥ 1")
    for _ in range(100):
        nodes = rng.uniform(-1.0, 1.0, segments + 1)
        positions = np.linspace(0, length - 1, segments + 1)
        signal = np.interp(np.arange(length), positions, nodes)
        if np.any(signal > 0) and np.any(signal < 0):
            return signal
    raise RuntimeError("failed to draw a sign-changing signal")


def active_runs(u: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of consecutive strictly-positive samples, as inclusive
    (start, end) index pairs."""
    u = np.asarray(u)
    if u.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {u.shape}")
    mask = u > 0
    if not mask.any():
        return []
    padded = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.nonzero(padded == 1)[0]
    ends = np.nonzero(padded == -1)[0] - 1
    return list(zip(starts.tolist(), ends.tolist()))


def activation_kernel(
    intervals: Sequence[tuple[int, int]], length: int
) -> np.ndarray:
    """Unnormalized spectrum of the 0/1 activation mask.

    Each run of n consecutive active samples centered at p contributes
    e^{−iωp}·sin(ωn/2)/sin(ω/2) at ω = 2πj/L (the value at j=0 is n) —
    the periodic-sinc kernel whose circular convolution with the signal's
    spectrum yields the masked signal's spectrum exactly.
    """
    out = np.zeros(length, dtype=np.complex128)
    omega = 2.0 * math.pi * np.arange(1, length) / length
    for start, end in intervals:
        if not 0 <= start <= end < length:
            raise ValueError(f"interval ({start}, {end}) out of range")
        n = end - start + 1
        center = 0.5 * (start + end)
        out[0] += n
        out[1:] += (
            np.exp(-1j * omega * center)
            * np.sin(0.5 * omega * n)
            / np.sin(0.5 * omega)
        )
    return out


def relu_spectrum_identity(u: np.ndarray) -> dict[str, Any]:
    """Verify: spectrum(ReLU(u)) == spectrum(u) ⊛ mask-kernel / L.

    ReLU multiplies the signal by its positivity mask, so in frequency
    space the activated spectrum is the circular convolution of the
    signal's spectrum with the mask's spectrum (the sum of periodic
    sincs from ``activation_kernel``), divided by L.  Exact up to
    roundoff.  Also reports the activated intervals with
    linearly-interpolated boundary crossings (reporting only; the
    identity itself uses the exact sample mask).
    """
    u = np.asarray(u, dtype=np.float64)
    length = u.shape[0]
    runs = active_runs(u)
    kernel = activation_kernel(runs, length)
    f_u = dft_values(u)
    idx = (np.arange(length)[:, None] - np.arange(length)[None, :]) % length
    predicted = (kernel[idx] @ f_u) / length
    actual = dft_values(np.maximum(u, 0.0))
    scale = float(np.max(np.abs(actual)))
    rel_error = float(np.max(np.abs(predicted - actual)) / scale) if scale else 0.0
    intervals = []
    for start, end in runs:
        left = float(start)
        if start > 0 and u[start - 1] < 0:
            left = (start - 1) + u[start - 1] / (u[start - 1] - u[start])
        right = float(end)
        if end + 1 < length and u[end + 1] < 0:
            right = end + u[end] / (u[end] - u[end + 1])
        intervals.append(
            {"center": 0.5 * (left + right), "half_length": 0.5 * (right - left)}
        )
    return {
        "predicted": predicted,
        "actual": actual,
        "rel_error": rel_error,
        "runs": runs,
        "intervals": intervals,
    }


def lru_tone_offband(
    freq: int = 16,
    length: int = 2048,
    state_dim: int = 16,
    seed: int = 0,
    warmup: int = 2048,
    ring: RingConfig | None = None,
) -> tuple[Spectrum, float]:
    """Feed a pure tone through a random linear recurrent layer and measure
    the post-transient off-band energy fraction of the output.

    The layer starts from x_0 = 0, so the first ``warmup`` samples carry a
    decaying transient at the layer's own frequencies; the analysis window
    starts after it (r_max^warmup ≈ 0 at the defaults).
    """
    if ring is None:
        ring = RingConfig(r_min=0.2, r_max=0.9)
    if ring.r_max >= 1.0 and warmup > 0:
        raise ValueError("off-band analysis needs r_max < 1 so the transient dies")
    if length < 4 or length & (length - 1):
        raise ValueError(f"length must be a power of two ≥ 4, got {length}")
    if not 0 < freq < length // 2:
        raise ValueError(f"freq must be a bin in (0, {length // 2}), got {freq}")
    params = lru_init(ring, (1, state_dim, 1), make_generator(seed))
    total = warmup + length
    k = np.arange(total)
    # Tone with period L/freq; after the warmup the window phase realigns
    # because warmup is a multiple of L only in general — use the bin grid
    # of the analysis window so the steady-state output stays on-bin.
    tone = np.sin(2.0 * math.pi * freq * (k - warmup) / length)
    y, _ = lru_forward(params, tone[:, None])
    window = y[warmup:, 0]
    spec = dft(window)
    ratio = _offband_ratio(spec.power, {0, freq, length - freq})
    return spec, ratio


# --------------------------------------------------------------------------
# Spectrum reports (ring samples and dense Gaussian matrices)
# --------------------------------------------------------------------------


def spectrum_report(
    mode: str,
    n: int,
    seed: int = 0,
    ring: RingConfig | None = None,
    phase_bins: int = 16,
) -> ExperimentReport:
    """Eigenvalue statistics.

    mode="ring": draw n eigenvalues from the ring sampler; report the
    Kolmogorov–Smirnov statistic of |λ|² against its uniform closed-form
    CDF and a χ² uniformity p-value for the phases.

    mode="dense": draw an n×n Gaussian matrix with variance 1/n; report
    the Gelfand-formula spectral-radius estimate and trace moments.
    """
    if mode == "ring":
        if ring is None:
            ring = RingConfig()
        rng = make_generator(seed)
        nu, theta = sample_ring(ring, n, rng)
        lam = np.exp(-nu + 1j * theta)
        mag_sq = np.abs(lam) ** 2
        ks = _ks_statistic_uniform(mag_sq, ring.r_min**2, ring.r_max**2)
        chi2_stat, p_value = _phase_chi2(theta, ring, phase_bins)
        rows = [
            {
                "lam_re": float(z.real),
                "lam_im": float(z.imag),
                "magnitude": float(abs(z)),
                "phase": float(np.angle(z) % (2.0 * math.pi)),
            }
            for z in lam
        ]
        return ExperimentReport(
            name="spectrum_ring",
            seed=seed,
            config={"mode": mode, "n": n, "ring": ring.to_dict(),
                    "phase_bins": phase_bins},
            metrics={
                "ks_magnitude_sq": ks,
                "phase_chi2": chi2_stat,
                "phase_chi2_p": p_value,
                "max_magnitude": float(np.abs(lam).max()),
                "min_magnitude": float(np.abs(lam).min()),
            },
            rows=rows,
            columns=["lam_re", "lam_im", "magnitude", "phase"],
        )
    if mode == "dense":
        a = glorot_dense(n, make_generator(seed))
        est = gelfand_spectral_radius(a)
        moments = {k: trace_moment(a, k) for k in (1, 2, 3)}
        rows = [
            {"quantity": "gelfand_radius", "value": est.radius},
            {"quantity": "gelfand_radius_half_k", "value": est.radius_half_k},
            *(
                {"quantity": f"trace_moment_{k}", "value": val}
                for k, val in moments.items()
            ),
        ]
        return ExperimentReport(
            name="spectrum_dense",
            seed=seed,
            config={"mode": mode, "n": n},
            metrics={
                "gelfand_radius": est.radius,
                "gelfand_radius_half_k": est.radius_half_k,
                "power_k": est.k,
                **{f"trace_moment_{k}": v for k, v in moments.items()},
            },
            rows=rows,
            columns=["quantity", "value"],
        )
    raise ValueError(f"mode must be 'ring' or 'dense', got {mode!r}")


def _ks_statistic_uniform(samples: np.ndarray, lo: float, hi: float) -> float:
    """Two-sided KS statistic against Uniform[lo, hi]."""
    if hi <= lo:
        raise ValueError("degenerate uniform support")
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    cdf = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def _phase_chi2(
    theta: np.ndarray, ring: RingConfig, bins: int
) -> tuple[float, float]:
    counts, _ = np.histogram(theta, bins=bins, range=(ring.phase_min, ring.phase_max))
    expected = theta.size / bins
    stat = float(np.sum((counts - expected) ** 2) / expected)
    return stat, chi2_survival(stat, bins - 1)


# --------------------------------------------------------------------------
# Stability trace, benchmarks, impulse/discretization reports
# --------------------------------------------------------------------------


def stability_run(
    r_min: float = 0.9,
    r_max: float = 0.999,
    steps: int = 1000,
    seed: int = 0,
    base_lr: float = 1e-2,
) -> ExperimentReport:
    """Train a small model whose eigenvalues start near the unit circle and
    trace max |λ| every step — the exponential parameterization keeps it
    below 1 no matter what the optimizer does."""
    cfg = ModelConfig(
        depth=1,
        width=4,
        state_dim=8,
        in_features=1,
        out_features=2,
        ring=RingConfig(r_min=r_min, r_max=r_max),
        pooling="mean",
    )
    data_rng = make_generator(seed + 1)
    inputs = data_rng.standard_normal((4, 16, 1))
    targets = data_rng.standard_normal((4, 2))

    def value_and_grad(flat, rng):
        params = ModelParams.from_dict(flat)
        out, cache = model_forward(cfg, params, inputs, mode="sequential",
                                   return_cache=True)
        loss, d_out = sequence_mse(out, targets)
        return loss, model_backward(cfg, params, cache, d_out)

    params = model_init(cfg, make_generator(seed))
    task = TrainTask(
        name="stability_run",
        params=params.to_dict(),
        value_and_grad=value_and_grad,
        config={"r_min": r_min, "r_max": r_max, "base_lr": base_lr,
                "steps": steps, "model": cfg.to_dict()},
    )
    optim = OptimConfig(base_lr=base_lr, total_steps=steps, lr_factor=0.5,
                        weight_decay=0.05)
    report, _ = train_loop(task, optim, seed=seed)
    trace = [row["max_abs_eigen"] for row in report.rows]
    report.name = "stability_run"
    report.metrics["max_abs_eigen_peak"] = max(trace)
    report.metrics["always_stable"] = bool(max(trace) < 1.0)
    return report


def bench_scan(
    lengths: Sequence[int],
    thread_counts: Sequence[int],
    n: int = 64,
    batch: int = 1,
    reps: int = 5,
    seed: int = 0,
) -> ExperimentReport:
    """Median wall-time of sequential vs chunked scan over lengths/threads.

    One untimed warmup evaluation precedes each timed series; medians of
    ``reps`` runs, monotonic clock, nanoseconds.
    """
    if reps < 1:
        raise ValueError("reps must be ≥ 1")
    for length in lengths:
        if length < 1 or length > 2**20 or (length & (length - 1)):
            raise ValueError(
                f"lengths must be powers of two in [1, 2^20], got {length}"
            )
    rng = make_generator(seed)
    rows = []
    for length in lengths:
        lam_mag = 1.0 - rng.random(n) * 0.2
        lam = lam_mag * np.exp(2j * math.pi * rng.random(n))
        b_seq = (
            rng.standard_normal((batch, length, n))
            + 1j * rng.standard_normal((batch, length, n))
        )

        def timed(mode: str, threads: int) -> float:
            affine_scan(lam, b_seq, mode=mode, threads=threads)  # warmup
            samples = []
            for _ in range(reps):
                t0 = time.perf_counter_ns()
                affine_scan(lam, b_seq, mode=mode, threads=threads)
                samples.append(time.perf_counter_ns() - t0)
            return float(np.median(samples))

        rows.append(
            {"length": length, "threads": 1, "mode": "sequential",
             "median_ns": timed("sequential", 1)}
        )
        for threads in thread_counts:
            rows.append(
                {"length": length, "threads": threads, "mode": "parallel",
                 "median_ns": timed("parallel", threads)}
            )
    speedups = {}
    for length in lengths:
        seq = next(r["median_ns"] for r in rows
                   if r["length"] == length and r["mode"] == "sequential")
        best = min(r["median_ns"] for r in rows
                   if r["length"] == length and r["mode"] == "parallel")
        speedups[str(length)] = seq / best
    return ExperimentReport(
        name="bench_scan",
        seed=seed,
        config={"lengths": list(lengths), "thread_counts": list(thread_counts),
                "n": n, "batch": batch, "reps": reps},
        metrics={"best_speedup_per_length": speedups},
        rows=rows,
        columns=["length", "threads", "mode", "median_ns"],
    )


def impulse_report(
    ring: RingConfig,
    state_dim: int = 8,
    length: int = 128,
    seed: int = 0,
    max_channels: int = 4,
) -> ExperimentReport:
    """Impulse response of a randomly initialized layer.

    Rows carry the output-channel response and the real parts of the first
    few state channels; each state channel oscillates at its own phase and
    decays at its own magnitude.
    """
    params = lru_init(ring, (1, state_dim, 1), make_generator(seed))
    states = impulse_response_matrix(params, length)  # (L, N) Re(x_k)
    impulse = np.zeros((length, 1))
    impulse[0, 0] = 1.0
    y, _ = lru_forward(params, impulse)
    output = y[:, 0]
    shown = min(max_channels, state_dim)
    rows = []
    for k in range(length):
        row: dict[str, Any] = {"k": k + 1, "output": float(output[k])}
        for j in range(shown):
            row[f"state_re_{j}"] = float(states[k, j])
        rows.append(row)
    peak = int(np.argmax(np.abs(output)))
    return ExperimentReport(
        name="impulse",
        seed=seed,
        config={"ring": ring.to_dict(), "state_dim": state_dim,
                "length": length, "max_channels": max_channels},
        metrics={
            "peak_index": peak + 1,
            "peak_value": float(output[peak]),
            "energy": float(np.sum(output**2)),
            "max_abs_eigen": float(np.abs(params.lam).max()),
        },
        rows=rows,
        columns=["k", "output"] + [f"state_re_{j}" for j in range(shown)],
    )


def zoh_report(
    a_re: float = -0.5,
    a_im: float = 3.0,
    deltas: Sequence[float] = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0),
    seed: int = 0,
) -> ExperimentReport:
    """Exact zero-order-hold vs first-order discretization across stepsizes.

    The exact map λ = exp(Δã) has |λ| = e^{Δ·Re(ã)} < 1 for every Δ, while
    the forward-Euler multiplier 1 + Δã leaves the unit disk once Δ is
    large; the first-order input scaling Δ·B̃ drifts from the exact
    (λ−1)/ã·B̃ as Δ grows.
    """
    if not deltas:
        raise ValueError("need at least one stepsize")
    a_tilde = np.array([a_re + 1j * a_im])
    b_tilde = np.ones((1, 1), dtype=np.complex128)
    rows = []
    for delta in deltas:
        sys = ZohSystem(a_tilde=a_tilde, b_tilde=b_tilde, delta=float(delta))
        lam, b_exact = zoh_discretize(sys, mode="exact")
        _, b_first = zoh_discretize(sys, mode="first_order")
        euler = 1.0 + delta * a_tilde[0]
        b_rel = float(
            np.abs(b_exact[0, 0] - b_first[0, 0]) / np.abs(b_exact[0, 0])
        )
        rows.append(
            {
                "delta": float(delta),
                "lam_re": float(lam[0].real),
                "lam_im": float(lam[0].imag),
                "lam_abs": float(np.abs(lam[0])),
                "euler_abs": float(np.abs(euler)),
                "input_scale_rel_gap": b_rel,
            }
        )
    return ExperimentReport(
        name="zoh_compare",
        seed=seed,
        config={"a_re": a_re, "a_im": a_im, "deltas": [float(d) for d in deltas]},
        metrics={
            "exact_always_stable": bool(all(r["lam_abs"] < 1.0 for r in rows)),
            "euler_max_abs": max(r["euler_abs"] for r in rows),
        },
        rows=rows,
        columns=["delta", "lam_re", "lam_im", "lam_abs", "euler_abs",
                 "input_scale_rel_gap"],
    )

"""Hand-derived reverse-mode gradients for the recurrent layer.

No autodiff framework is used anywhere in the library: every composite
(recurrent layer, gated linear unit, normalization, losses) carries an
explicit vector-Jacobian product.  This module owns the recurrent layer's
backward pass and the finite-difference harness that all of them are
verified against.

Derivation sketch (complex quantities; cotangents of a real-pair (p, q)
are packed as p-cotangent + i·q-cotangent, so for a holomorphic map
w = h(z) the pull-back is δz = δw·conj(h'(z))):

    forward:   x_k = λ⊙x_{k−1} + γ⊙(B u_k),    y_k = Re(C x_k) + D⊙u_k

    output:    δx_k  += C^H g_k            (adjoint of Re(Cx): the
                                            imaginary co-tangent is zero)
    adjoint:   δx_{k−1} = conj(λ)⊙δx_k     (reverse affine scan)
    dλ   = Σ_k δx_k ⊙ conj(x_{k−1})
    dν   = −Re(dλ⊙conj(λ)),   dν^log = ν⊙dν        (λ = e^{−ν}e^{iθ}, ν = e^{ν^log})
    dθ   =  Im(dλ⊙conj(λ)),   dθ^log = θ⊙dθ
    dγ   = Σ_k Re(δx_k ⊙ conj(Bu_k)),   dγ^log = γ⊙dγ
    dB   = Σ_k (γ⊙δx_k) ⊗ u_k            (u real ⇒ Re/Im split directly)
    dC   = Σ_k g_k ⊗ conj(x_k)
    dD   = Σ_k g_k ⊙ u_k
    du_k = Re(B^H (γ⊙δx_k)) + D⊙g_k
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .initializers import LruParams
from .recurrence import affine_scan

__all__ = [
    "LruGrads",
    "FdReport",
    "lru_backward",
    "finite_difference_check",
]


@dataclass
class LruGrads:
    """Loss gradients, one array per learnable tensor of ``LruParams``."""

    nu_log: np.ndarray
    theta_log: np.ndarray
    gamma_log: np.ndarray
    b_re: np.ndarray
    b_im: np.ndarray
    c_re: np.ndarray
    c_im: np.ndarray
    d: np.ndarray

    def to_dict(self) -> dict[str, np.ndarray]:
        return {
            "nu_log": self.nu_log,
            "theta_log": self.theta_log,
            "gamma_log": self.gamma_log,
            "b_re": self.b_re,
            "b_im": self.b_im,
            "c_re": self.c_re,
            "c_im": self.c_im,
            "d": self.d,
        }


def lru_backward(
    params: LruParams,
    u: np.ndarray,
    x: np.ndarray,
    dy: np.ndarray,
    mode: str = "sequential",
    threads: int = 1,
) -> tuple[LruGrads, np.ndarray]:
    """Backward pass of the recurrent layer.

    ``u``: inputs (batch, L, H); ``x``: hidden trajectory saved by the
    forward pass; ``dy``: loss cotangent of the outputs, same shape as u.
    Returns (parameter gradients, input cotangent du).

    The adjoint recurrence is itself an affine scan run over reversed
    time with decay conj(λ); ``mode='parallel'`` evaluates it with the
    chunked scheme (same contract, different summation order).
    """
    squeeze = u.ndim == 2
    if squeeze:
        u, x, dy = u[None], x[None], dy[None]
    if u.shape != dy.shape:
        raise ValueError(f"dy shape {dy.shape} must match inputs {u.shape}")
    if x.shape[:2] != u.shape[:2] or x.shape[2] != params.state_dim:
        raise ValueError(
            f"trajectory shape {x.shape} does not match inputs {u.shape} and "
            f"state dim {params.state_dim}"
        )

    lam = params.lam
    gamma = params.gamma
    c = params.c
    b = params.b

    # Output-projection adjoint, injected at every step: s_k = C^H g_k.
    s = dy @ np.conj(c)

    # Adjoint states via a reverse affine scan: δ_k = conj(λ)⊙δ_{k+1} + s_k.
    delta = affine_scan(
        np.conj(lam), s[:, ::-1], mode=mode, threads=threads
    )[:, ::-1]

    # x_{k−1} with x_0 = 0.
    x_prev = np.zeros_like(x)
    x_prev[:, 1:] = x[:, :-1]

    dlam = np.sum(delta * np.conj(x_prev), axis=(0, 1))
    dlam_polar = dlam * np.conj(lam)
    nu = np.exp(params.nu_log)
    theta = np.exp(params.theta_log)
    dnu_log = -np.real(dlam_polar) * nu
    dtheta_log = np.imag(dlam_polar) * theta

    bu = u @ b.T
    dgamma = np.sum(np.real(delta * np.conj(bu)), axis=(0, 1))
    dgamma_log = gamma * dgamma

    delta_w = gamma * delta
    db = np.tensordot(delta_w, u, axes=([0, 1], [0, 1]))  # (N, H) complex
    dc = np.tensordot(dy, np.conj(x), axes=([0, 1], [0, 1]))  # (H, N) complex
    dd = np.sum(dy * u, axis=(0, 1))

    du = np.real(delta_w @ np.conj(b)) + params.d * dy

    grads = LruGrads(
        nu_log=dnu_log,
        theta_log=dtheta_log,
        gamma_log=dgamma_log,
        b_re=np.real(db),
        b_im=np.imag(db),
        c_re=np.real(dc),
        c_im=np.imag(dc),
        d=dd,
    )
    if squeeze:
        du = du[0]
    return grads, du


@dataclass(frozen=True)
class FdReport:
    """Result of a finite-difference gradient verification.

    ``per_param`` maps tensor name → max relative error over its scalars;
    the relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """

    h: float
    per_param: dict[str, float]

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ValueError("perturbation h must be positive")

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def worst_param(self) -> str | None:
        if not self.per_param:
            return None
        return max(self.per_param, key=self.per_param.get)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


_REL_FLOOR = 1e-8


def finite_difference_check(
    loss_closure: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> FdReport:
    """Verify analytic gradients against central differences.

    ``loss_closure(params) -> (loss, grads)`` must be deterministic: it is
    evaluated twice at the base point and any discrepancy is an error
    (a stochastic closure would make the finite differences meaningless).
    Every scalar entry of every tensor is perturbed by ±h.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"perturbation h must lie in [1e-7, 1e-3], got {h}")
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    base_loss, analytic = loss_closure(params)
    repeat_loss, _ = loss_closure(params)
    if base_loss != repeat_loss:
        raise ValueError(
            "loss closure is not deterministic: two evaluations at the same "
            f"point returned {base_loss!r} and {repeat_loss!r}"
        )
    missing = set(params) - set(analytic)
    if missing:
        raise ValueError(f"closure returned no gradient for: {sorted(missing)}")

    per_param: dict[str, float] = {}
    for name, value in params.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise ValueError(
                f"gradient shape {grad.shape} != parameter shape {value.shape} "
                f"for {name!r}"
            )
        worst = 0.0
        flat = value.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus, _ = loss_closure(params)
            flat[i] = original - h
            minus, _ = loss_closure(params)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            denom = max(abs(grad_flat[i]), abs(numeric), _REL_FLOOR)
            worst = max(worst, abs(grad_flat[i] - numeric) / denom)
        per_param[name] = worst
    return FdReport(h=h, per_param=per_param)

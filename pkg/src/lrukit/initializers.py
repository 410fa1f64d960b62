"""Parameter initialization.

The recurrence eigenvalues λ are sampled uniformly on an annulus sector
of the complex plane: with u1, u2 uniform on (0, 1],

    ν = −½ log(u1·(r_max² − r_min²) + r_min²)        (log-magnitude)
    θ = phase_min + (phase_max − phase_min)·u2        (phase)

gives λ = exp(−ν + iθ) with |λ|² uniform on [r_min², r_max²] — i.e. λ
uniform on the ring sector by the area-measure change of variables.  The
layer stores ν^log = log ν and θ^log = log θ, so that exp(−exp(ν^log)) < 1
holds for every real value the optimizer can reach.

Input normalization γ = √(1 − |λ|²) compensates the steady-state variance
amplification Σ_j |λ|^{2j} = 1/(1 − |λ|²) of a white-noise-driven channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import split

__all__ = [
    "RingConfig",
    "LruParams",
    "sample_ring",
    "ring_from_uniforms",
    "gamma_init",
    "glorot_complex",
    "glorot_dense",
    "glorot_matrix",
    "lru_init",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RingConfig:
    """Annulus sector from which recurrence eigenvalues are drawn."""

    r_min: float = 0.0
    r_max: float = 1.0
    phase_min: float = 0.0
    phase_max: float = TWO_PI

    def __post_init__(self) -> None:
        if not 0.0 <= self.r_min <= self.r_max <= 1.0:
            raise ValueError(
                f"need 0 ≤ r_min ≤ r_max ≤ 1, got [{self.r_min}, {self.r_max}]"
            )
        if not 0.0 <= self.phase_min <= self.phase_max <= TWO_PI:
            raise ValueError(
                "need 0 ≤ phase_min ≤ phase_max ≤ 2π, got "
                f"[{self.phase_min}, {self.phase_max}]"
            )

    def to_dict(self) -> dict[str, float]:
        return {
            "r_min": self.r_min,
            "r_max": self.r_max,
            "phase_min": self.phase_min,
            "phase_max": self.phase_max,
        }


def ring_from_uniforms(
    u1: np.ndarray, u2: np.ndarray, cfg: RingConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Map uniform draws to (ν, θ); pure function behind ``sample_ring``.

    u1 = 0 lands on the inner radius exactly (|λ| = r_min); u1 = 1 on the
    outer.  u2 interpolates the phase interval linearly.
    """
    if cfg.r_max == 0.0:
        raise ValueError(
            "degenerate ring r_min = r_max = 0: ν would be +∞; use r_max > 0"
        )
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    nu = -0.5 * np.log(u1 * (cfg.r_max**2 - cfg.r_min**2) + cfg.r_min**2)
    theta = cfg.phase_min + (cfg.phase_max - cfg.phase_min) * u2
    return nu, theta


def sample_ring(
    cfg: RingConfig, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n eigenvalues uniformly on the ring sector; returns (ν, θ).

    Uniform draws are flipped to (0, 1] so that ν stays finite for
    r_min = 0 and θ stays strictly positive (θ^log = log θ must exist):
    θ ranges over (phase_min, phase_max], open at the lower end.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    u1 = 1.0 - rng.random(n)
    u2 = 1.0 - rng.random(n)
    return ring_from_uniforms(u1, u2, cfg)


def gamma_init(nu: np.ndarray, theta: np.ndarray | None = None) -> np.ndarray:
    """γ^log from the magnitude: exp(γ^log) = √(1 − exp(−2ν)).

    The phase argument is accepted for call-site symmetry with
    ``sample_ring`` output but does not enter the formula (normalization
    depends only on |λ| = exp(−ν)).
    """
    nu = np.asarray(nu, dtype=np.float64)
    if np.any(nu <= 0.0):
        raise ValueError("normalization undefined: ν ≤ 0 means |λ| ≥ 1")
    # γ² = 1 − exp(−2ν) = −expm1(−2ν), stable for both tiny and huge ν.
    gamma_sq = -np.expm1(-2.0 * nu)
    return 0.5 * np.log(gamma_sq)


def glorot_complex(
    rows: int,
    cols: int,
    rng: np.random.Generator,
    variance_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Complex Glorot matrix as an (re, im) pair of float64 arrays.

    Real and imaginary parts are i.i.d. normal with variance
    ``variance_scale / (rows + cols)`` each — half of the fan-average
    Glorot variance 2/(rows+cols) per component, so the total per-entry
    complex variance equals the real Glorot variance (times the scale).
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dims must be ≥ 1, got {rows}×{cols}")
    std = math.sqrt(variance_scale / (rows + cols))
    re = std * rng.standard_normal((rows, cols))
    im = std * rng.standard_normal((rows, cols))
    return re, im


def glorot_matrix(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Real fan-average Glorot matrix: entries i.i.d. N(0, 2/(rows+cols))."""
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dims must be ≥ 1, got {rows}×{cols}")
    std = math.sqrt(2.0 / (rows + cols))
    return std * rng.standard_normal((rows, cols))


def glorot_dense(n: int, rng: np.random.Generator) -> np.ndarray:
    """Square Glorot matrix, entries i.i.d. N(0, 1/n) — the circular-law
    normalization (the square case of ``glorot_matrix``)."""
    return glorot_matrix(n, n, rng)


@dataclass
class LruParams:
    """All learnable tensors of one recurrent layer, stored real-valued.

    λ_j = exp(−exp(nu_log_j) + i·exp(theta_log_j)) — strictly inside the
    unit disk for any real nu_log.  B and C are complex matrices kept as
    (re, im) float64 pairs so gradients and optimizer state never leave
    the reals; D is the elementwise input-passthrough vector.
    """

    nu_log: np.ndarray
    theta_log: np.ndarray
    gamma_log: np.ndarray
    b_re: np.ndarray
    b_im: np.ndarray
    c_re: np.ndarray
    c_im: np.ndarray
    d: np.ndarray

    @staticmethod
    def field_names() -> tuple[str, ...]:
        return ("nu_log", "theta_log", "gamma_log", "b_re", "b_im",
                "c_re", "c_im", "d")

    @property
    def state_dim(self) -> int:
        return self.nu_log.shape[0]

    @property
    def width(self) -> int:
        return self.d.shape[0]

    @property
    def lam(self) -> np.ndarray:
        """Current eigenvalues λ as a complex128 array."""
        return np.exp(-np.exp(self.nu_log) + 1j * np.exp(self.theta_log))

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.gamma_log)

    @property
    def b(self) -> np.ndarray:
        return self.b_re + 1j * self.b_im

    @property
    def c(self) -> np.ndarray:
        return self.c_re + 1j * self.c_im

    def validate(self) -> None:
        n = self.state_dim
        for name in ("nu_log", "theta_log", "gamma_log"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
        if self.b_re.shape != self.b_im.shape or self.b_re.shape[0] != n:
            raise ValueError("B real/imag parts must both be (N, H_in)")
        if self.c_re.shape != self.c_im.shape or self.c_re.shape[1] != n:
            raise ValueError("C real/imag parts must both be (H_out, N)")
        if self.d.ndim != 1:
            raise ValueError("D must be a vector")
        for name in ("nu_log", "theta_log", "gamma_log", "b_re", "b_im",
                     "c_re", "c_im", "d"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    def copy(self) -> "LruParams":
        return LruParams(**{k: v.copy() for k, v in self.to_dict().items()})

    def to_dict(self) -> dict[str, np.ndarray]:
        """Flat name → array view of every learnable tensor."""
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

    @classmethod
    def from_dict(cls, tensors: dict[str, np.ndarray]) -> "LruParams":
        return cls(**{k: np.asarray(tensors[k], dtype=np.float64)
                      for k in ("nu_log", "theta_log", "gamma_log", "b_re",
                                "b_im", "c_re", "c_im", "d")})


def lru_init(
    cfg: RingConfig,
    dims: tuple[int, int, int],
    rng: np.random.Generator,
    b_scale: float = 2.0,
) -> LruParams:
    """Initialize one recurrent layer.

    ``dims`` is (H_in, N, H_out); H_in must equal H_out because D is an
    elementwise skip over the input features.  B and C are complex Glorot;
    B's per-entry variance is additionally multiplied by ``b_scale``
    (default 2) to compensate for the output taking only the real part of
    Cx, which halves the effective variance of that path.  D is i.i.d.
    standard normal.
    """
    h_in, n, h_out = dims
    if h_in < 1 or n < 1 or h_out < 1:
        raise ValueError(f"dims must be positive, got {dims}")
    if h_in != h_out:
        raise ValueError(
            f"H_in ({h_in}) must equal H_out ({h_out}): D is an elementwise skip"
        )
    ring_rng, b_rng, c_rng, d_rng = split(rng, 4)
    nu, theta = sample_ring(cfg, n, ring_rng)
    gamma_log = gamma_init(nu, theta)
    b_re, b_im = glorot_complex(n, h_in, b_rng, variance_scale=b_scale)
    c_re, c_im = glorot_complex(h_out, n, c_rng)
    d = d_rng.standard_normal(h_out)
    params = LruParams(
        nu_log=np.log(nu),
        theta_log=np.log(theta),
        gamma_log=gamma_log,
        b_re=b_re,
        b_im=b_im,
        c_re=c_re,
        c_im=c_im,
        d=d,
    )
    params.validate()
    return params

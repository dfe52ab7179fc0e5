"""Model parameters and the special functions of the one-atom maser.

Conventions: hbar = 1, the cavity has frequency ``omega``, the atoms have
transition frequency ``omega0`` and the Jaynes-Cummings coupling is ``lam``.
Everything the reduced dynamics depends on collapses to four numbers:

    eta  = ((omega0 - omega) * tau / 2pi)^2     (detuning)
    xi   = (lam * tau / 2pi)^2                  (coupling)
    beta * omega0                               (atomic Boltzmann factor)
    omega * tau                                 (free phase per step)

All special functions below route through :func:`rabi_phase` so that C, S and
D are evaluated from bit-identical intermediate values in every module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters plus Fock truncation.

    Use :meth:`from_dimensionless` to build a model straight from
    ``(eta, xi, beta*omega0, omega*tau)``; the physical fields are then filled
    with ``tau = 1`` and the dimensionless values are kept exactly.
    """

    omega: float
    omega0: float
    lam: float
    tau: float
    beta: float
    n_max: int
    _eta: Optional[float] = field(default=None, repr=False, compare=False)
    _xi: Optional[float] = field(default=None, repr=False, compare=False)
    _beta_omega0: Optional[float] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ValueError(f"n_max must be an integer >= 2, got {self.n_max}")
        for name in ("omega", "omega0", "lam", "tau", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_dimensionless(cls, eta: float, xi: float, beta_omega0: float,
                           omega_tau: float = 1.0, n_max: int = 64) -> "ModelParams":
        if eta < 0 or xi < 0:
            raise ValueError("eta and xi must be non-negative")
        if not omega_tau > 0:
            raise ValueError("omega_tau must be positive")
        omega = float(omega_tau)
        omega0 = omega + TWO_PI * math.sqrt(eta)
        lam = TWO_PI * math.sqrt(xi)
        return cls(omega=omega, omega0=omega0, lam=lam, tau=1.0,
                   beta=beta_omega0 / omega0, n_max=int(n_max),
                   _eta=float(eta), _xi=float(xi), _beta_omega0=float(beta_omega0))

    def with_n_max(self, n_max: int) -> "ModelParams":
        return ModelParams(self.omega, self.omega0, self.lam, self.tau, self.beta,
                           int(n_max), self._eta, self._xi, self._beta_omega0)

    @property
    def detuning(self) -> float:
        return self.omega0 - self.omega

    @property
    def detuning_sign(self) -> float:
        """Sign of omega0 - omega; enters the imaginary part of C."""
        return -1.0 if self.detuning < 0 else 1.0

    @property
    def eta(self) -> float:
        if self._eta is not None:
            return self._eta
        return (self.detuning * self.tau / TWO_PI) ** 2

    @property
    def xi(self) -> float:
        if self._xi is not None:
            return self._xi
        return (self.lam * self.tau / TWO_PI) ** 2

    @property
    def beta_omega0(self) -> float:
        if self._beta_omega0 is not None:
            return self._beta_omega0
        return self.beta * self.omega0

    @property
    def omega_tau(self) -> float:
        return self.omega * self.tau

    @property
    def beta_star(self) -> float:
        return self.beta * self.omega0 / self.omega

    @property
    def z_beta(self) -> float:
        """Atomic partition function 1 + exp(-beta omega0)."""
        return 1.0 + math.exp(-self.beta_omega0)

    def atom_weights(self) -> tuple[float, float]:
        """Gibbs weights (w(-), w(+)) = (1 + e^{-beta omega0})^-1, (1 + e^{beta omega0})^-1."""
        e = math.exp(-self.beta_omega0)
        return 1.0 / (1.0 + e), e / (1.0 + e)

    def to_dict(self) -> dict:
        return {"eta": self.eta, "xi": self.xi, "beta_omega0": self.beta_omega0,
                "omega_tau": self.omega_tau, "n_max": self.n_max}


def dimensionless(params: ModelParams) -> tuple[float, float]:
    """Return ``(eta, xi)``."""
    return params.eta, params.xi


def rabi_phase(n, eta: float, xi: float):
    """Shared kernel: ``(u, cos(pi sqrt u), sin(pi sqrt u)/sqrt u)`` with u = xi n + eta.

    The ratio uses its continuous limit ``pi`` at u = 0.
    """
    n = np.asarray(n, dtype=float)
    u = xi * n + eta
    r = np.sqrt(u)
    arg = np.pi * r
    zero = r == 0
    sinc = np.sin(arg) / np.where(zero, 1.0, r)
    sinc = np.where(zero, np.pi, sinc)
    return u, np.cos(arg), sinc


def c_function(n, eta: float, xi: float, sign: float = 1.0):
    """C(n) = cos(pi sqrt(xi n + eta)) + i sqrt(eta) sin(pi sqrt(.))/sqrt(.).

    ``sign`` is the sign of the detuning omega0 - omega; only the propagator
    and the Kraus operators care about it.
    """
    _, cos, sinc = rabi_phase(n, eta, xi)
    out = cos + 1j * (sign * math.sqrt(eta)) * sinc
    return out if np.ndim(out) else complex(out)


def s_function(n, eta: float, xi: float):
    """S(n) = sqrt(xi) sin(pi sqrt(xi n + eta))/sqrt(xi n + eta); S = sqrt(xi) pi when the root vanishes."""
    _, _, sinc = rabi_phase(n, eta, xi)
    out = math.sqrt(xi) * sinc
    return out if np.ndim(out) else float(out)


def s_tilde(n, eta: float, xi: float):
    """sqrt(n) S(n)."""
    return np.sqrt(np.asarray(n, dtype=float)) * s_function(n, eta, xi)


def d_function(n, eta: float, xi: float, beta: float, omega0: float):
    """Hopping profile D(n) = sin^2(pi sqrt(xi n + eta)) xi n / (xi n + eta) / Z_beta.

    D(0) = 0 and D vanishes exactly at Rabi resonances (up to rounding of the
    sine).
    """
    n_arr = np.asarray(n, dtype=float)
    u, cos, sinc = rabi_phase(n_arr, eta, xi)
    # sin^2(pi r) * xi n / u  ==  xi n * sinc^2
    out = xi * n_arr * sinc * sinc / (1.0 + math.exp(-beta * omega0))
    out = np.where(n_arr == 0, 0.0, out)
    return out if np.ndim(out) else float(out)


def d0_function(n, eta: float, xi: float, beta: float, omega0: float, quasi_set):
    """D with the quasi-resonant entries set to zero."""
    n_arr = np.asarray(n)
    out = np.asarray(d_function(n_arr, eta, xi, beta, omega0), dtype=float)
    out = np.where(np.isin(n_arr, np.asarray(list(quasi_set), dtype=int)), 0.0, out)
    return out if np.ndim(out) else float(out)


def d_profile(params: ModelParams, n):
    """D(n) for a model, vectorised over ``n``."""
    return d_function(n, params.eta, params.xi, params.beta_omega0, 1.0)


@dataclass(frozen=True)
class DiagonalState:
    """Occupation probabilities on {0..n_max}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("values must be a vector")
        if np.any(v < 0):
            raise ValueError("occupation probabilities must be non-negative")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ValueError(f"occupation probabilities sum to {v.sum()!r}, not 1")
        object.__setattr__(self, "values", v)

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(len(self.values)), self.values))


def thermal_weights(beta_omega0: float, n_max: int) -> np.ndarray:
    """Normalised exp(-beta omega0 n) on {0..n_max}; beta_omega0 may be +inf."""
    if math.isinf(beta_omega0) and beta_omega0 > 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    p = np.exp(-beta_omega0 * np.arange(n_max + 1))
    return p / p.sum()


def thermal_state(beta_star: float, omega: float, n_max: int) -> DiagonalState:
    """Cavity Gibbs state at inverse temperature ``beta_star``, truncated and renormalised."""
    x = beta_star * omega
    if not x > 0:
        raise ValueError("no normalisable thermal state for beta_star * omega <= 0")
    return DiagonalState(thermal_weights(x, n_max))

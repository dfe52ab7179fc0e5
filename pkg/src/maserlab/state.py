"""Density matrices stored band by band.

Band ``d`` of an operator X on {0..n_max} is ``np.diagonal(X, d)``: for
d >= 0 entry i is the coefficient of |i><i+d|. Only d >= 0 is stored; the
negative bands of a Hermitian operator are the complex conjugates, so
Hermiticity holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import thermal_weights


@dataclass(frozen=True)
class BandedState:
    n_max: int
    bands: dict = field(default_factory=dict)
    dropped_norm: float = 0.0

    def __post_init__(self):
        clean = {}
        for d, x in self.bands.items():
            d = int(d)
            if d < 0:
                raise ValueError("store only non-negative bands; negative ones are implied")
            x = np.asarray(x, dtype=complex)
            if x.shape != (self.n_max + 1 - d,):
                raise ValueError(f"band {d} has shape {x.shape}, expected ({self.n_max + 1 - d},)")
            if d == 0:
                x = x.real.astype(complex)
            x.setflags(write=False)
            clean[d] = x
        if 0 not in clean:
            clean[0] = np.zeros(self.n_max + 1, dtype=complex)
        object.__setattr__(self, "bands", dict(sorted(clean.items())))

    @property
    def d_max(self) -> int:
        return max(self.bands)

    def band(self, d: int) -> np.ndarray:
        if d >= 0:
            x = self.bands.get(d)
            return np.zeros(self.n_max + 1 - d, complex) if x is None else x
        return np.conj(self.band(-d))

    def trace(self) -> float:
        return float(self.bands[0].real.sum())

    def populations(self) -> np.ndarray:
        return self.bands[0].real.copy()

    def band_l1(self, d: int) -> float:
        return float(np.abs(self.band(d)).sum())

    def to_dense(self) -> np.ndarray:
        rho = np.zeros((self.n_max + 1, self.n_max + 1), dtype=complex)
        idx = np.arange(self.n_max + 1)
        for d, x in self.bands.items():
            i = idx[: len(x)]
            rho[i, i + d] = x
            if d:
                rho[i + d, i] = np.conj(x)
        return rho

    def replace_bands(self, bands: dict, dropped_norm: float = 0.0) -> "BandedState":
        return BandedState(self.n_max, bands, self.dropped_norm + dropped_norm)

    @classmethod
    def from_dense(cls, rho, d_max: int | None = None) -> "BandedState":
        rho = np.asarray(rho, dtype=complex)
        n_max = rho.shape[0] - 1
        if d_max is None:
            d_max = n_max
        bands = {d: np.diagonal(rho, d).copy() for d in range(min(d_max, n_max) + 1)}
        dropped = 0.0
        if d_max < n_max:
            for d in range(d_max + 1, n_max + 1):
                dropped += 2.0 * float(np.abs(np.diagonal(rho, d)).sum())
        return cls(n_max, bands, dropped)

    @classmethod
    def diagonal(cls, probs) -> "BandedState":
        p = np.asarray(probs, dtype=float)
        return cls(len(p) - 1, {0: p})

    @classmethod
    def fock(cls, n: int, n_max: int) -> "BandedState":
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls.diagonal(p)

    @classmethod
    def thermal(cls, beta_omega0: float, n_max: int) -> "BandedState":
        return cls.diagonal(thermal_weights(beta_omega0, n_max))

    @classmethod
    def coherent(cls, alpha: complex, n_max: int, d_max: int | None = None) -> "BandedState":
        """Truncated coherent state |alpha><alpha|, renormalised on {0..n_max}."""
        n = np.arange(n_max + 1)
        logfact = np.cumsum(np.log(np.maximum(n, 1)))
        amp = np.exp(n * np.log(abs(alpha)) - 0.5 * logfact) if alpha != 0 else (n == 0).astype(float)
        amp = amp * np.exp(1j * np.angle(alpha) * n)
        amp /= np.linalg.norm(amp)
        return cls.from_dense(np.outer(amp, amp.conj()), d_max)


def random_density_matrix(n_max: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-distributed density matrix on {0..n_max}."""
    dim = n_max + 1
    g = rng.standard_normal((dim, rank or dim)) + 1j * rng.standard_normal((dim, rank or dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def trace_norm_dense(x: np.ndarray) -> float:
    """Schatten-1 norm of a Hermitian matrix."""
    return float(np.abs(np.linalg.eigvalsh(x)).sum())


def trace_distance(a: BandedState, b: BandedState, exact_limit: int = 256):
    """Half the trace norm of a - b.

    Exact (dense eigenvalues) when n_max <= ``exact_limit``. Otherwise returns
    ``(lower, upper)`` built from band l1 norms: the diagonal l1 norm is a lower
    bound and the sum over all bands an upper bound.
    """
    if a.n_max != b.n_max:
        raise ValueError("states live on different truncations")
    if a.n_max <= exact_limit:
        return 0.5 * trace_norm_dense(a.to_dense() - b.to_dense())
    keys = set(a.bands) | set(b.bands)
    lower = 0.5 * float(np.abs(a.band(0) - b.band(0)).sum())
    upper = 0.5 * sum((1 if d == 0 else 2) * float(np.abs(a.band(d) - b.band(d)).sum()) for d in keys)
    return lower, upper

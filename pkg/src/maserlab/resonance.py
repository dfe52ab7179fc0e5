"""Rabi resonances, quasi-resonances and metastable states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .params import DiagonalState, d_function

NON_RESONANT = "non-resonant"
SIMPLY_RESONANT = "simply resonant"
FULLY_RESONANT = "fully resonant"


@dataclass
class ResonanceReport:
    eta: float
    xi: float
    bound: int
    mode: str
    resonances: list
    classification: str = ""
    partition: list = field(default_factory=list)
    quasi_resonances: list = field(default_factory=list)
    decay_fit: Optional[float] = None

    @property
    def label(self) -> str:
        return f"{self.classification} (n <= {self.bound}, {self.mode})"


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator() if isinstance(x, float) else Fraction(x)


def find_resonances(eta, xi, bound: int, mode: str = "float", tol: float = 1e-9) -> list[int]:
    """All n in [1, bound] with xi n + eta = k^2 for a positive integer k.

    ``mode="float"`` accepts |sqrt(xi n + eta) - k| <= tol. ``mode="exact"``
    treats eta and xi as rationals (floats are converted with
    ``Fraction.limit_denominator``) and solves for n over each candidate k.
    """
    if bound < 1:
        raise ValueError("bound must be >= 1")
    if mode == "exact":
        e, x = _as_fraction(eta), _as_fraction(xi)
        if x <= 0:
            raise ValueError("xi must be positive (the uncoupled model has no resonances)")
        out = []
        k = max(1, math.isqrt(int(e + x)) - 1)
        top = x * bound + e
        while k * k <= top:
            n = (k * k - e) / x
            if n.denominator == 1 and 1 <= n <= bound:
                out.append(int(n))
            k += 1
        return out
    if mode != "float":
        raise ValueError(f"unknown mode {mode!r}")
    eta, xi = float(eta), float(xi)
    if not xi > 0:
        raise ValueError("xi must be positive (the uncoupled model has no resonances)")
    n = np.arange(1, bound + 1)
    r = np.sqrt(xi * n + eta)
    k = np.rint(r)
    hit = (np.abs(r - k) <= tol) & (k >= 1)
    return n[hit].tolist()


def classify(resonances) -> str:
    count = len(resonances)
    if count == 0:
        return NON_RESONANT
    if count == 1:
        return SIMPLY_RESONANT
    return FULLY_RESONANT


def sector_partition(resonances, bound: int) -> list[tuple[int, int]]:
    """Half-open intervals [start, stop) cut at the resonances; the last one ends at bound + 1."""
    cuts = [0] + sorted(int(r) for r in resonances if 0 < r <= bound) + [bound + 1]
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:])]


def strict_local_minima(values: np.ndarray) -> np.ndarray:
    """Indices m in [1, len-2] with values[m] < values[m-1] and values[m] < values[m+1]."""
    v = np.asarray(values)
    m = np.arange(1, len(v) - 1)
    return m[(v[m] < v[m - 1]) & (v[m] < v[m + 1])]


def fit_decay_exponent(k, values, k_min: int = 3) -> Optional[float]:
    """Least-squares slope of log(values) against log(k) for k >= k_min."""
    k = np.asarray(k, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (k >= k_min) & (v > 0)
    if sel.sum() < 3:
        return None
    slope, _ = np.polyfit(np.log(k[sel]), np.log(v[sel]), 1)
    return float(slope)


def find_quasi_resonances(eta: float, xi: float, beta: float, omega0: float, bound: int,
                          resonance_tol: float = 1e-9):
    """Quasi-resonances m_k (strict local minima of D, true resonances removed) and the decay fit.

    Returns ``(m, fit)`` with ``fit`` None when fewer than three points with
    k >= 3 are available.
    """
    n = np.arange(bound + 1)
    dvals = np.asarray(d_function(n, eta, xi, beta, omega0))
    m = strict_local_minima(dvals)
    if xi > 0:
        res = set(find_resonances(eta, xi, bound, tol=resonance_tol))
        m = np.array([x for x in m if x not in res], dtype=int)
    k = np.arange(1, len(m) + 1)
    fit = fit_decay_exponent(k, dvals[m]) if len(m) else None
    return m.tolist(), fit


def quasi_resonance_guess(k, eta: float, xi: float) -> np.ndarray:
    """Heuristic locator (k^2 - eta)/xi rounded up; verification is always by the minimum test."""
    k = np.asarray(k, dtype=float)
    return np.ceil((k * k - eta) / xi).astype(int)


def analyze(eta: float, xi: float, beta_omega0: float, bound: int, mode: str = "float") -> ResonanceReport:
    res = find_resonances(eta, xi, bound, mode=mode)
    rep = ResonanceReport(float(eta), float(xi), bound, mode, res, classify(res),
                          sector_partition(res, bound))
    rep.quasi_resonances, rep.decay_fit = find_quasi_resonances(float(eta), float(xi),
                                                                beta_omega0, 1.0, bound)
    return rep


def metastable_state(k: int, quasi_list, beta: float, omega0: float, n_max: int) -> DiagonalState:
    """Truncated Gibbs state supported on [0, m_k).

    ``k`` counts from 1; ``quasi_list`` is the increasing list m_1, m_2, ...
    """
    if k < 1 or k > len(quasi_list):
        raise ValueError(f"k={k} outside the {len(quasi_list)} available quasi-resonances")
    m_k = int(quasi_list[k - 1])
    if m_k > n_max + 1:
        raise ValueError(f"m_{k} = {m_k} does not fit below n_max = {n_max}")
    p = np.zeros(n_max + 1)
    p[:m_k] = np.exp(-beta * omega0 * np.arange(m_k))
    return DiagonalState(p / p.sum())

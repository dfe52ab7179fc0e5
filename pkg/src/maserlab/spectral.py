"""Spectra of the sector operators.

The diagonal HS block is a real symmetric tridiagonal matrix and is handled
exactly (Sturm-sequence bisection plus inverse iteration). The off-diagonal
blocks are complex and non-normal; for those we only probe the spectral
radius by power iteration and watch iterates decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .channel import SectorOperator, diagonal_sector_closed_form, sector_operator_hs
from .params import ModelParams, d_profile
from .resonance import find_quasi_resonances, find_resonances

BISECTION_TOL = 1e-12
INVERSE_ITER_MAX = 50
RESIDUAL_TOL = 1e-10
CLUSTER_RADIUS = 1e-10


@dataclass
class SpectrumReport:
    d: int
    picture: str
    n_max: int
    eigenvalues: np.ndarray
    top: float
    second: Optional[float]
    residuals: dict = field(default_factory=dict)
    multiplicity_top: int = 1

    @property
    def gap(self) -> Optional[float]:
        return None if self.second is None else 1.0 - abs(self.second)


def _as_symmetric_tridiagonal(t):
    if isinstance(t, SectorOperator):
        if not t.is_real() or not np.array_equal(t.lower, t.upper):
            raise ValueError("operator is not real symmetric tridiagonal")
        return np.asarray(t.diag, float), np.asarray(t.lower, float)
    if isinstance(t, tuple):
        diag, off = t
        return np.asarray(diag, float), np.asarray(off, float)
    t = np.asarray(t)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("expected a square matrix")
    if np.iscomplexobj(t) or not np.array_equal(t, t.T):
        raise ValueError("matrix is not real symmetric")
    if np.any(np.triu(t, 2)) or np.any(np.tril(t, -2)):
        raise ValueError("matrix is not tridiagonal")
    return np.diag(t).astype(float), np.diag(t, -1).astype(float)


def sturm_count(diag: np.ndarray, off: np.ndarray, x) -> np.ndarray:
    """Number of eigenvalues strictly below each entry of ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    off2 = np.asarray(off, float) ** 2
    tiny = np.finfo(float).tiny
    q = diag[0] - x
    count = (q < 0).astype(np.int64)
    for i in range(1, len(diag)):
        q = np.where(q == 0, tiny, q)
        q = diag[i] - x - off2[i - 1] / q
        count += q < 0
    return count


def gershgorin(diag, off) -> tuple[float, float]:
    r = np.zeros_like(diag)
    r[:-1] += np.abs(off)
    r[1:] += np.abs(off)
    return float(np.min(diag - r)), float(np.max(diag + r))


def tridiagonal_spectrum(t, select: Optional[tuple[int, int]] = None,
                         tol: float = BISECTION_TOL) -> np.ndarray:
    """Eigenvalues (ascending) of a real symmetric tridiagonal matrix by bisection.

    ``select=(lo, hi)`` restricts to ascending indices lo..hi inclusive;
    negative indices count from the top as in Python.
    """
    diag, off = _as_symmetric_tridiagonal(t)
    size = len(diag)
    if select is None:
        idx = np.arange(size)
    else:
        lo, hi = (i % size for i in select)
        idx = np.arange(lo, hi + 1)
    a, b = gershgorin(diag, off)
    pad = 2 * tol + 1e-14 * max(abs(a), abs(b), 1.0)
    lo_b = np.full(len(idx), a - pad)
    hi_b = np.full(len(idx), b + pad)
    n_steps = int(math.ceil(math.log2(max(b - a + 2 * pad, tol) / tol))) + 1
    for _ in range(n_steps):
        mid = 0.5 * (lo_b + hi_b)
        below = sturm_count(diag, off, mid)
        left = below > idx
        hi_b = np.where(left, mid, hi_b)
        lo_b = np.where(left, lo_b, mid)
    return 0.5 * (lo_b + hi_b)


def inverse_iteration(t, eigenvalue: float, max_iter: int = INVERSE_ITER_MAX,
                      rng: Optional[np.random.Generator] = None):
    """Eigenvector for ``eigenvalue``; returns ``(vector, residual)``."""
    diag, off = _as_symmetric_tridiagonal(t)
    size = len(diag)
    shift = eigenvalue + 1e-13 * max(1.0, abs(eigenvalue))
    ab = np.zeros((3, size))
    ab[0, 1:] = off
    ab[1] = diag - shift
    ab[2, :-1] = off
    rng = rng or np.random.default_rng(0)
    v = rng.standard_normal(size)
    v /= np.linalg.norm(v)
    best, best_res = v, np.inf
    polish = 0
    for _ in range(max_iter):
        w = solve_banded((1, 1), ab, v, check_finite=False)
        nrm = np.linalg.norm(w)
        if not np.isfinite(nrm) or nrm == 0:
            break
        v = w / nrm
        tv = diag * v
        tv[1:] += off * v[:-1]
        tv[:-1] += off * v[1:]
        lam = float(v @ tv)
        residual = float(np.linalg.norm(tv - lam * v))
        if residual < best_res:
            best, best_res = v, residual
        # a few extra steps once accepted: the residual keeps dropping toward round-off
        if best_res <= RESIDUAL_TOL:
            polish += 1
            if polish > 3:
                break
    v = best
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v, best_res


def l0_bounds(beta: float, omega0: float) -> tuple[float, float]:
    """Lower and upper bounds of the diagonal HS block."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    x = beta * omega0
    return -2.0 * math.exp(-x / 2) / (1.0 + math.exp(-x)), 1.0


def l0_spectrum(params: ModelParams) -> SpectrumReport:
    op = sector_operator_hs(0, params)
    ev = tridiagonal_spectrum(op)
    top = float(ev[-1])
    cluster = int(np.sum(ev >= top - CLUSTER_RADIUS))
    second = float(ev[-2]) if len(ev) > 1 else None
    return SpectrumReport(0, "hs", params.n_max, ev, top, second, multiplicity_top=cluster)


def is_resonant_within(params: ModelParams, bound: Optional[int] = None) -> bool:
    if params.xi == 0:
        return True
    return bool(find_resonances(params.eta, params.xi, bound or params.n_max + 1))


def top_eigenpair_check(params: ModelParams) -> dict:
    """Compare the top eigenpair of L^(0) with (1, e^{-beta omega0 n / 2}).

    For resonant parameters the fixed space is degenerate; that is reported
    through ``resonant`` and ``fixed_dim`` rather than treated as a failure.
    """
    op = sector_operator_hs(0, params)
    top2 = tridiagonal_spectrum(op, select=(-2, -1))
    lam1, lam2 = float(top2[1]), float(top2[0])
    vec, residual = inverse_iteration(op, lam1)
    ref = np.exp(-params.beta_omega0 * np.arange(params.n_max + 1) / 2)
    cosine = float(abs(vec @ ref) / (np.linalg.norm(vec) * np.linalg.norm(ref)))
    resonant = is_resonant_within(params)
    return {"lambda_max": lam1, "lambda_2": lam2, "residual": residual, "cosine": cosine,
            "simple": lam2 < lam1, "resonant": resonant,
            "fixed_dim": fixed_space_dimension(op), "vector": vec}


def fixed_space_dimension(t, tol: float = CLUSTER_RADIUS) -> int:
    """Number of eigenvalues within ``tol`` of 1."""
    diag, off = _as_symmetric_tridiagonal(t)
    return int(len(diag) - sturm_count(diag, off, 1.0 - tol)[0])


def symmetrized_modified_l0(params: ModelParams, quasi) -> tuple[np.ndarray, np.ndarray]:
    """HS form of 1 - nabla^* D_0(N) nabla with D_0 zero on ``quasi``.

    Returned as (diag, off) of a symmetric tridiagonal; it is similar to the
    density-matrix operator with the same D_0.
    """
    n_max = params.n_max
    dvals = np.asarray(d_profile(params, np.arange(n_max + 2)), dtype=float)
    q = [m for m in quasi if m <= n_max + 1]
    dvals[q] = 0.0
    h = math.exp(-params.beta_omega0 / 2)
    diag = 1.0 - dvals[:-1] - h * h * dvals[1:]
    off = h * dvals[1:-1]
    return diag, off


def modified_trace_operator(params: ModelParams, quasi) -> np.ndarray:
    """Dense 1 - nabla_0^* D_0(N) nabla_{2 beta} on {0..n_max}."""
    dvals = np.asarray(d_profile(params, np.arange(params.n_max + 2)), dtype=float)
    q = [m for m in quasi if m <= params.n_max + 1]
    dvals[q] = 0.0
    return diagonal_sector_closed_form(params, "trace", dvals)


def gap_scan(params: ModelParams, n_max_list, quasi: Optional[list] = None) -> list[dict]:
    """gap(n_max) = 1 - lambda_2 of the truncated L^(0) for each n_max in the list.

    With ``quasi`` given, the D_0-modified operator is scanned instead.
    """
    rows = []
    for n_max in n_max_list:
        p = params.with_n_max(int(n_max))
        t = symmetrized_modified_l0(p, quasi) if quasi is not None else sector_operator_hs(0, p)
        lam2, lam1 = tridiagonal_spectrum(t, select=(-2, -1))
        rows.append({"n_max": int(n_max), "lambda_1": float(lam1), "lambda_2": float(lam2),
                     "gap": float(1.0 - lam2)})
    return rows


@dataclass
class ProbeResult:
    d: int
    picture: str
    estimate: float
    interval: tuple
    converged: bool
    peripheral_eigenvalue: bool
    iterations: int
    norms: np.ndarray


def power_iteration(op: SectorOperator, max_iter: int = 20000, tol: float = 1e-10,
                    window: int = 50, renorm_every: int = 1, rng: Optional[np.random.Generator] = None):
    """Power iteration with renormalisation.

    Returns ``(estimate, (lo, hi), converged, vector, log_norms, iterations)`` where the
    estimate is the mean growth factor over the last ``window`` steps and
    ``(lo, hi)`` the range of single-step factors in that window.
    """
    rng = rng or np.random.default_rng(0)
    x = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
    x /= np.linalg.norm(x)
    logs = np.zeros(max_iter)
    ratios = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = op.matvec(x)
        nrm = float(np.linalg.norm(y))
        logs[it - 1] = math.log(nrm) if nrm > 0 else -np.inf
        if nrm == 0:
            return 0.0, (0.0, 0.0), True, x, logs[:it], it
        ratios.append(nrm)
        x = y / nrm
        if it >= 2 * window and it % window == 0:
            recent = np.array(ratios[-window:])
            if recent.max() - recent.min() <= tol * max(recent.max(), 1e-300):
                converged = True
                break
    recent = np.array(ratios[-window:])
    est = float(np.exp(np.mean(np.log(recent))))
    return est, (float(recent.min()), float(recent.max())), converged, x, logs[:it], it


def peripheral_probe(op: SectorOperator, max_iter: int = 20000, tol: float = 1e-10,
                     edge_fraction: float = 0.1, rng=None) -> ProbeResult:
    """Spectral-radius estimate and a check for a genuine peripheral eigenvalue.

    A peripheral eigenvalue is only flagged when the iteration converged to a
    modulus >= 1 - 1e-8, the Rayleigh pair has residual <= 1e-10, and the
    vector is not concentrated in the top ``edge_fraction`` of rows (the
    truncation edge).
    """
    est, interval, converged, vec, logs, its = power_iteration(op, max_iter, tol, rng=rng)
    peripheral = False
    if converged and est >= 1 - 1e-8:
        av = op.matvec(vec)
        lam = np.vdot(vec, av)
        res = float(np.linalg.norm(av - lam * vec))
        edge = int(math.ceil(op.size * (1 - edge_fraction)))
        edge_mass = float(np.sum(np.abs(vec[edge:]) ** 2))
        peripheral = res <= RESIDUAL_TOL and edge_mass < 0.5
    return ProbeResult(op.d, op.picture, est, interval, converged, peripheral, its, np.exp(logs))


def iterate_norms(op: SectorOperator, x0: np.ndarray, steps: int, every: int = 1) -> np.ndarray:
    """||op^n x0|| for n = 0, every, 2 every, ..., steps (2-norm)."""
    x = np.asarray(x0, dtype=complex).copy()
    out = [np.linalg.norm(x)]
    for n in range(1, steps + 1):
        x = op.matvec(x)
        if n % every == 0:
            out.append(np.linalg.norm(x))
    return np.array(out)


def entry_difference_profile(params: ModelParams, d: int, windows) -> list[tuple[int, float]]:
    """max |L^(d) - L^(0)| over rows n in [N, 2N] for each N in ``windows``.

    Only the needed rows are built, so N can go well beyond any dense size.
    """
    from .params import c_function, s_function

    eta, xi, sgn = params.eta, params.xi, params.detuning_sign
    z = params.z_beta
    h = math.exp(-params.beta_omega0 / 2)
    out = []
    for big_n in windows:
        n = np.arange(big_n, 2 * big_n + 1, dtype=float)

        def diag_entry(dd):
            return (np.conj(c_function(n, eta, xi, sgn)) * c_function(n + dd, eta, xi, sgn)
                    + h * h * c_function(n + 1, eta, xi, sgn)
                    * np.conj(c_function(n + 1 + dd, eta, xi, sgn))) / z

        def low_entry(dd):
            return h * np.sqrt(n * (n + dd)) * s_function(n, eta, xi) * s_function(n + dd, eta, xi) / z

        def up_entry(dd):
            return (h * np.sqrt((n + 1) * (n + 1 + dd)) * s_function(n + 1, eta, xi)
                    * s_function(n + 1 + dd, eta, xi) / z)

        diff = max(np.max(np.abs(diag_entry(d) - diag_entry(0))),
                   np.max(np.abs(low_entry(d) - low_entry(0))),
                   np.max(np.abs(up_entry(d) - up_entry(0))))
        out.append((int(big_n), float(diff)))
    return out


def quasi_for(params: ModelParams, bound: Optional[int] = None) -> list[int]:
    m, _ = find_quasi_resonances(params.eta, params.xi, params.beta_omega0, 1.0,
                                 bound or params.n_max + 1)
    return m

"""Reduced dynamics of the cavity after one atom passage.

Three pictures are implemented:

``trace``        the Schroedinger-picture map on density matrices,
``interaction``  the same map with the free cavity rotation divided out,
``hs``           the dual map transported into Hilbert-Schmidt space by
                 X -> rho_th^{1/4} X rho_th^{1/4}.

Every Kraus operator here is a weighted shift, V|n> = c_n |n + s>, so the
action on a band of a density matrix is a handful of vector products and
never mixes bands.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .params import ModelParams, c_function, d_profile, s_function, thermal_weights
from .state import BandedState

PICTURES = ("trace", "interaction", "hs")


class TruncationLeakageError(RuntimeError):
    """Trace lost through the Fock cutoff exceeded the configured threshold."""


@dataclass(frozen=True)
class KrausOp:
    """Weighted shift V|n> = coeff[n] |n + shift>, shift in {-1, 0, 1}."""

    coeff: np.ndarray
    shift: int

    def to_dense(self) -> np.ndarray:
        dim = len(self.coeff)
        v = np.zeros((dim, dim), dtype=complex)
        n = np.arange(dim)
        tgt = n + self.shift
        ok = (tgt >= 0) & (tgt < dim)
        v[tgt[ok], n[ok]] = self.coeff[ok]
        return v


@dataclass(frozen=True)
class KrausSet:
    ops: dict
    picture: str
    weights: tuple
    n_max: int

    def dense(self) -> dict:
        return {k: v.to_dense() for k, v in self.ops.items()}

    def completeness(self) -> np.ndarray:
        """sum V*V, which is the identity for a trace-preserving channel."""
        dim = self.n_max + 1
        out = np.zeros((dim, dim), dtype=complex)
        for v in self.dense().values():
            out += v.conj().T @ v
        return out


def _shift_ops(params: ModelParams, c_mm, c_mp, c_pm, c_pp, picture, weights) -> KrausSet:
    n_max = params.n_max
    c_mp = np.asarray(c_mp, dtype=complex).copy()
    c_pm = np.asarray(c_pm, dtype=complex).copy()
    c_mp[n_max] = 0.0  # a^* |n_max> is cut off
    c_pm[0] = 0.0
    ops = {"--": KrausOp(np.asarray(c_mm, dtype=complex), 0),
           "-+": KrausOp(c_mp, 1),
           "+-": KrausOp(c_pm, -1),
           "++": KrausOp(np.asarray(c_pp, dtype=complex), 0)}
    return KrausSet(ops, picture, weights, n_max)


def kraus_trace_picture(params: ModelParams, interaction: bool = False) -> KrausSet:
    """The four weighted shifts V_{s's} of the reduced dynamics.

    With ``interaction=True`` the free rotation e^{-i tau omega N} is removed,
    giving the Kraus set of the interaction-picture map.
    """
    eta, xi, sgn = params.eta, params.xi, params.detuning_sign
    w_m, w_p = params.atom_weights()
    n = np.arange(params.n_max + 1)
    if interaction:
        rot_n = np.ones(len(n), dtype=complex)
        rot_up = rot_n
        rot_dn = rot_n
    else:
        wt = params.omega_tau
        rot_n = np.exp(-1j * wt * n)
        rot_up = np.exp(-1j * wt * (n + 1))
        rot_dn = np.exp(-1j * wt * (n - 1))
    c_mm = math.sqrt(w_m) * rot_n * c_function(n, eta, xi, sgn)
    # S(N) a^*: |n> -> sqrt(n+1) S(n+1) |n+1>
    c_mp = math.sqrt(w_p) * rot_up * s_function(n + 1, eta, xi) * np.sqrt(n + 1)
    # S(N+1) a: |n> -> sqrt(n) S(n) |n-1>
    c_pm = math.sqrt(w_m) * rot_dn * s_function(n, eta, xi) * np.sqrt(n)
    c_pp = math.sqrt(w_p) * rot_n * np.conj(c_function(n + 1, eta, xi, sgn))
    return _shift_ops(params, c_mm, c_mp, c_pm, c_pp,
                      "interaction" if interaction else "trace", (w_m, w_p))


def kraus_hs_picture(params: ModelParams) -> KrausSet:
    """Kraus set of the Hilbert-Schmidt map, X -> sum Vhat^* X Vhat."""
    eta, xi, sgn = params.eta, params.xi, params.detuning_sign
    z = params.z_beta
    bw = params.beta_omega0
    n = np.arange(params.n_max + 1)
    c_mm = c_function(n, eta, xi, sgn) / math.sqrt(z)
    c_mp = math.exp(-bw / 4) / math.sqrt(z) * s_function(n + 1, eta, xi) * np.sqrt(n + 1)
    c_pm = math.exp(-bw / 4) / math.sqrt(z) * s_function(n, eta, xi) * np.sqrt(n)
    c_pp = math.exp(-bw / 2) / math.sqrt(z) * np.conj(c_function(n + 1, eta, xi, sgn))
    return _shift_ops(params, c_mm, c_mp, c_pm, c_pp, "hs", params.atom_weights())


def _band_kernel(x: np.ndarray, d: int, ops) -> np.ndarray:
    """Band d (d >= 0) of sum V X V^* for X supported on that band."""
    y = np.zeros_like(x)
    length = len(x)
    for op in ops:
        c = op.coeff
        prod = c[:length] * np.conj(c[d:d + length]) * x
        if op.shift == 0:
            y += prod
        elif op.shift == 1:
            y[1:] += prod[:-1]
        else:
            y[:-1] += prod[1:]
    return y


def default_workers() -> int:
    return int(os.environ.get("MASERLAB_THREADS", "1"))


def apply_channel(rho: BandedState, kraus: KrausSet, leakage_threshold: float | None = None,
                  workers: int | None = None) -> BandedState:
    """rho -> sum V rho V^*, band by band.

    Bands are independent; with ``workers > 1`` they are processed on a thread
    pool (Kraus data is read-only and every band writes its own output).
    """
    if kraus.picture == "hs":
        raise ValueError("the HS Kraus set acts as X -> sum V^* X V; use apply_hs")
    if rho.n_max != kraus.n_max:
        raise ValueError("state and channel have different truncations")
    ops = list(kraus.ops.values())
    workers = default_workers() if workers is None else workers
    items = list(rho.bands.items())
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(lambda kv: _band_kernel(kv[1], kv[0], ops), items))
    else:
        outs = [_band_kernel(x, d, ops) for d, x in items]
    out = rho.replace_bands({d: y for (d, _), y in zip(items, outs)})
    if leakage_threshold is not None:
        leak = rho.trace() - out.trace()
        if leak > leakage_threshold:
            raise TruncationLeakageError(
                f"step leakage {leak:.3e} exceeds threshold {leakage_threshold:.3e}")
    return out


def apply_kraus_dense(x: np.ndarray, kraus: KrausSet, dual: bool = False) -> np.ndarray:
    """Dense sum V X V^* (or sum V^* X V with ``dual=True``)."""
    out = np.zeros_like(x, dtype=complex)
    for v in kraus.dense().values():
        out += (v.conj().T @ x @ v) if dual else (v @ x @ v.conj().T)
    return out


def apply_hs(x: np.ndarray, kraus_hs: KrausSet) -> np.ndarray:
    return apply_kraus_dense(x, kraus_hs, dual=True)


def dense_channel_oracle(rho: np.ndarray, params: ModelParams, pad: int = 1):
    """Conjugate rho (x) rho_atom by the dense exp(-i tau H), trace out the atom.

    The dense problem lives on n_max + pad photons so that nothing the exact
    map does to {0..n_max} is cut off. Returns ``(block, leaked)`` where
    ``block`` is the {0..n_max} corner and ``leaked`` the trace that left it.
    """
    from .propagator import dense_exponential_oracle

    n_max = rho.shape[0] - 1
    big = params.with_n_max(n_max + pad)
    u = dense_exponential_oracle(big)
    dim = n_max + pad + 1
    r = np.zeros((dim, dim), dtype=complex)
    r[: n_max + 1, : n_max + 1] = rho
    w_m, w_p = params.atom_weights()
    full = np.kron(np.diag([w_m, w_p]), r)
    out = u @ full @ u.conj().T
    reduced = out[:dim, :dim] + out[dim:, dim:]
    block = reduced[: n_max + 1, : n_max + 1]
    return block, float(np.trace(reduced).real - np.trace(block).real)


@dataclass(frozen=True)
class SectorOperator:
    """Tridiagonal restriction of a channel to band ``d``.

    Row ``i`` corresponds to photon number n = i + max(0, -d); ``lower[i-1]``
    multiplies x_{i-1} in row i and ``upper[i]`` multiplies x_{i+1}.
    """

    d: int
    picture: str
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def size(self) -> int:
        return len(self.diag)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.lower * x[:-1]
        y[:-1] += self.upper * x[1:]
        return y

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """Transpose (not conjugate) action."""
        y = self.diag * x
        y[:-1] += self.lower * x[1:]
        y[1:] += self.upper * x[:-1]
        return y

    def to_sparse(self):
        return sparse.diags([self.lower, self.diag, self.upper], [-1, 0, 1], format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def is_real(self) -> bool:
        return not (np.iscomplexobj(self.diag) or np.iscomplexobj(self.lower)
                    or np.iscomplexobj(self.upper))


def _sector_rows(d: int, n_max: int) -> np.ndarray:
    return np.arange(max(0, -d), n_max + 1 - max(0, d))


def _sector_pieces(d: int, params: ModelParams):
    eta, xi, sgn = params.eta, params.xi, params.detuning_sign
    n = _sector_rows(d, params.n_max).astype(float)
    c_n = c_function(n, eta, xi, sgn)
    c_nd = c_function(n + d, eta, xi, sgn)
    c_n1 = c_function(n + 1, eta, xi, sgn)
    c_n1d = c_function(n + 1 + d, eta, xi, sgn)
    # coupling to x_{n-1} in row n, and to x_{n+1} in row n
    s_low = np.sqrt(n * (n + d)) * s_function(n, eta, xi) * s_function(n + d, eta, xi)
    s_up = (np.sqrt((n + 1) * (n + 1 + d)) * s_function(n + 1, eta, xi)
            * s_function(n + 1 + d, eta, xi))
    return c_n, c_nd, c_n1, c_n1d, s_low[1:], s_up[:-1]


def sector_operator_trace(d: int, params: ModelParams, interaction: bool = False) -> SectorOperator:
    """Band-d block of the reduced dynamics acting on ``np.diagonal(rho, d)``.

    Entries come from the Kraus coefficients: the diagonal collects
    C(n) conj C(n+d) from V_{--} and conj C(n+1) C(n+1+d) from V_{++}; the
    emission/absorption shifts give the two off-diagonals.
    """
    z = params.z_beta
    e = math.exp(-params.beta_omega0)
    c_n, c_nd, c_n1, c_n1d, s_low, s_up = _sector_pieces(d, params)
    diag = (c_n * np.conj(c_nd) + e * np.conj(c_n1) * c_n1d) / z
    lower = e * s_low / z
    upper = s_up / z
    if d == 0:
        return SectorOperator(0, "interaction" if interaction else "trace",
                              lower.astype(float), diag.real.copy(), upper.astype(float))
    phase = 1.0 if interaction else np.exp(1j * params.omega_tau * d)
    return SectorOperator(d, "interaction" if interaction else "trace",
                          phase * lower.astype(complex), phase * diag, phase * upper.astype(complex))


def sector_operator_hs(d: int, params: ModelParams) -> SectorOperator:
    """Band-d block of the Hilbert-Schmidt map; real symmetric for d = 0."""
    z = params.z_beta
    h = math.exp(-params.beta_omega0 / 2)
    e = h * h
    c_n, c_nd, c_n1, c_n1d, s_low, s_up = _sector_pieces(d, params)
    diag = (np.conj(c_n) * c_nd + e * c_n1 * np.conj(c_n1d)) / z
    lower = h * s_low / z
    upper = h * s_up / z
    if d == 0:
        return SectorOperator(0, "hs", lower.astype(float), diag.real.copy(), upper.astype(float))
    return SectorOperator(d, "hs", lower.astype(complex), diag, upper.astype(complex))


def hs_to_trace(op: SectorOperator, params: ModelParams, interaction: bool = False) -> SectorOperator:
    """Carry an HS sector operator to the density-matrix picture.

    Conjugation by the embedding weights (diag h^n, h = e^{-beta omega0 / 2})
    turns L^(d) into conj of the interaction-picture block; the free rotation
    then contributes e^{i omega tau d}.
    """
    if op.picture != "hs":
        raise ValueError("expected an HS-picture operator")
    h = math.exp(-params.beta_omega0 / 2)
    lower = np.conj(op.lower) * h
    upper = np.conj(op.upper) / h
    diag = np.conj(op.diag)
    if op.d == 0:
        return SectorOperator(0, "interaction" if interaction else "trace",
                              lower.real, diag.real, upper.real)
    phase = 1.0 if interaction else np.exp(1j * params.omega_tau * op.d)
    return SectorOperator(op.d, "interaction" if interaction else "trace",
                          phase * lower, phase * diag, phase * upper)


def difference_operator(n_max: int, twist: float, adjoint: bool = False):
    """(nabla x)_n = x_n - twist x_{n-1} (x_0 at n = 0) on {0..n_max}, as a sparse matrix."""
    dim = n_max + 1
    m = sparse.diags([np.ones(dim), -twist * np.ones(dim - 1)], [0, -1], format="csr")
    return m.T.tocsr() if adjoint else m


def diagonal_sector_closed_form(params: ModelParams, picture: str = "trace", d_values=None):
    """1 - nabla_a^* D(N) nabla_b, compressed to {0..n_max}.

    trace: a = 1 (plain difference), b = e^{-beta omega0};
    hs:    a = b = e^{-beta omega0 / 2}.
    ``d_values`` overrides D(0..n_max+1), e.g. with quasi-resonances zeroed.
    """
    n_max = params.n_max
    big = n_max + 1
    if d_values is None:
        d_values = d_profile(params, np.arange(big + 1))
    dmat = sparse.diags(np.asarray(d_values, dtype=float))
    bw = params.beta_omega0
    if picture == "trace":
        left = difference_operator(big, 1.0, adjoint=True)
        right = difference_operator(big, math.exp(-bw))
    elif picture == "hs":
        left = difference_operator(big, math.exp(-bw / 2), adjoint=True)
        right = difference_operator(big, math.exp(-bw / 2))
    else:
        raise ValueError(f"unknown picture {picture!r}")
    full = sparse.identity(big + 1) - left @ dmat @ right
    return full.toarray()[: n_max + 1, : n_max + 1]


def embedding_weights(d: int, beta_omega0: float, n_max: int) -> np.ndarray:
    """p_n^{1/4} p_{n+d}^{1/4} along band d (np.diagonal convention)."""
    p = thermal_weights(beta_omega0, n_max) ** 0.25
    if d >= 0:
        return p[: n_max + 1 - d] * p[d:]
    return p[-d:] * p[: n_max + 1 + d]


def hs_embedding(a, beta_omega0: float):
    """A -> rho_th^{1/4} A rho_th^{1/4}; band-preserving and injective.

    Accepts a dense matrix or a :class:`BandedState`.
    """
    if isinstance(a, BandedState):
        return BandedState(a.n_max, {d: x * embedding_weights(d, beta_omega0, a.n_max)
                                     for d, x in a.bands.items()}, a.dropped_norm)
    a = np.asarray(a)
    q = thermal_weights(beta_omega0, a.shape[0] - 1) ** 0.25
    return q[:, None] * a * q[None, :]


def interaction_picture_split(n_steps: int, rho: BandedState, params: ModelParams) -> BandedState:
    """n steps of the dynamics computed in the interaction picture.

    The free rotation is restored at the end: band d picks up e^{i omega tau d n}.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    k = kraus_trace_picture(params, interaction=True)
    x = rho
    for _ in range(n_steps):
        x = apply_channel(x, k)
    wt = params.omega_tau
    return x.replace_bands({d: v * np.exp(1j * wt * d * n_steps) for d, v in x.bands.items()})

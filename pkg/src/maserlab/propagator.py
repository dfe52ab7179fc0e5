"""Jaynes-Cummings propagator on the truncated Fock space.

The cavity+atom space is ordered as H_S (+) H_S with the atomic ground state
``|->`` first: dense index ``sigma * (n_max + 1) + n`` with sigma = 0 for
``|->`` and 1 for ``|+>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .params import ModelParams, c_function, s_function


@dataclass(frozen=True)
class BlockPropagator:
    """exp(-i tau H) as four banded blocks.

    ``uu``/``dd`` are the diagonals of the (-,-) and (+,+) blocks. ``ud`` is
    the first subdiagonal of the (-,+) block (|n,+> -> |n+1,->) and ``du``
    the first superdiagonal of the (+,-) block (|n,-> -> |n-1,+>).
    """

    n_max: int
    uu: np.ndarray
    ud: np.ndarray
    du: np.ndarray
    dd: np.ndarray
    omega_tau: float
    global_phase: float

    def blocks_dense(self):
        return (np.diag(self.uu), np.diag(self.ud, -1), np.diag(self.du, 1), np.diag(self.dd))

    def to_dense(self) -> np.ndarray:
        uu, ud, du, dd = self.blocks_dense()
        return np.block([[uu, ud], [du, dd]])

    def total_number_subspace(self, m: int) -> list[int]:
        """Dense indices spanning {N_tot = m} inside the truncated space."""
        dim = self.n_max + 1
        idx = []
        if m <= self.n_max:
            idx.append(m)
        if 0 <= m - 1 <= self.n_max:
            idx.append(dim + m - 1)
        return idx

    def restricted(self, m: int) -> np.ndarray:
        idx = self.total_number_subspace(m)
        return self.to_dense()[np.ix_(idx, idx)]


def build_propagator(params: ModelParams) -> BlockPropagator:
    """Closed-form block propagator with hard truncation at ``n_max``.

    The state |n_max, +> couples to |n_max + 1, -> which is not represented;
    its unitarity defect is (n_max + 1) S(n_max + 1)^2.
    """
    eta, xi = params.eta, params.xi
    sgn = params.detuning_sign
    wt = params.omega_tau
    ph = sgn * math.pi * math.sqrt(eta)
    n = np.arange(params.n_max + 1)

    phase_n = np.exp(-1j * (wt * n + ph))
    phase_n1 = np.exp(-1j * (wt * (n + 1) + ph))
    uu = phase_n * c_function(n, eta, xi, sgn)
    dd = phase_n1 * np.conj(c_function(n + 1, eta, xi, sgn))
    # (-,+) block: -i e^{-i(tau w N + ph)} S(N) a^*, column n -> row n+1
    m = n[1:]
    ud = -1j * np.exp(-1j * (wt * m + ph)) * s_function(m, eta, xi) * np.sqrt(m)
    # (+,-) block: -i e^{-i(tau w (N+1) + ph)} S(N+1) a, column n -> row n-1
    du = -1j * np.exp(-1j * (wt * m + ph)) * s_function(m, eta, xi) * np.sqrt(m)
    return BlockPropagator(params.n_max, uu, ud, du, dd, wt, ph)


def jaynes_cummings_hamiltonian(params: ModelParams) -> np.ndarray:
    """Dense truncated H = w N (x) 1 + w0 (1 (x) b*b) + (lam/2)(a* (x) b + a (x) b*)."""
    dim = params.n_max + 1
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    num = np.diag(np.arange(dim, dtype=float))
    b = np.array([[0.0, 1.0], [0.0, 0.0]])  # |-><+|
    eye_f = np.eye(dim)
    eye_a = np.eye(2)
    h = (params.omega * np.kron(eye_a, num)
         + params.omega0 * np.kron(b.T @ b, eye_f)
         + 0.5 * params.lam * (np.kron(b, a.T) + np.kron(b.T, a)))
    return h.astype(complex)


def dense_exponential_oracle(params: ModelParams, max_squarings: int = 60) -> np.ndarray:
    """exp(-i tau H) by Pade scaling-and-squaring of the explicitly assembled H."""
    if params.n_max > 64:
        raise ValueError("dense oracle is limited to n_max <= 64")
    h = jaynes_cummings_hamiltonian(params)
    if not np.allclose(h, h.conj().T, atol=0.0, rtol=0.0):
        raise AssertionError("assembled Hamiltonian is not Hermitian")
    norm = params.tau * np.linalg.norm(h, 1)
    if not math.isfinite(norm) or norm > 2.0 ** max_squarings:
        raise OverflowError(f"norm estimate {norm!r} exceeds the squaring depth")
    return expm(-1j * params.tau * h)


def unitarity_defects(prop: BlockPropagator) -> np.ndarray:
    """max |U*U - 1| on each total-number subspace m = 0..n_max + 1."""
    u = prop.to_dense()
    out = []
    for m in range(prop.n_max + 2):
        idx = prop.total_number_subspace(m)
        blk = u[np.ix_(idx, idx)]
        out.append(np.max(np.abs(blk.conj().T @ blk - np.eye(len(idx)))))
    return np.array(out)


def off_block_max(prop: BlockPropagator) -> float:
    """Largest entry of U connecting different N_tot subspaces (zero by construction)."""
    u = prop.to_dense()
    dim = prop.n_max + 1
    ntot = np.concatenate([np.arange(dim), np.arange(dim) + 1])
    mask = ntot[:, None] != ntot[None, :]
    return float(np.max(np.abs(u[mask]))) if mask.any() else 0.0

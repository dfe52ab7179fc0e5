import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigvalsh_tridiagonal

from maserlab.channel import hs_to_trace, sector_operator_hs, sector_operator_trace
from maserlab.params import ModelParams
from maserlab.resonance import find_quasi_resonances
from maserlab.spectral import (entry_difference_profile, fixed_space_dimension, gap_scan,
                               inverse_iteration, iterate_norms, l0_bounds, l0_spectrum,
                               modified_trace_operator, peripheral_probe, sturm_count,
                               symmetrized_modified_l0, top_eigenpair_check, tridiagonal_spectrum)

from conftest import canon


class TestTridiagonalSolver:
    def test_diagonal(self):
        d = np.array([3.0, -1.0, 2.5, 0.0])
        assert np.allclose(tridiagonal_spectrum((d, np.zeros(3))), np.sort(d), atol=1e-12)

    def test_dirichlet_laplacian(self):
        n = 300
        ev = tridiagonal_spectrum((2.0 * np.ones(n), -np.ones(n - 1)))
        exact = 2 - 2 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))
        assert np.abs(ev - np.sort(exact)).max() <= 1e-12

    def test_rejects_non_symmetric(self):
        with pytest.raises(ValueError):
            tridiagonal_spectrum(np.array([[1.0, 2.0], [3.0, 1.0]]))
        with pytest.raises(ValueError):
            tridiagonal_spectrum(sector_operator_hs(1, canon(10)))
        with pytest.raises(ValueError):
            tridiagonal_spectrum(np.ones((3, 3)))

    def test_select(self):
        op = sector_operator_hs(0, canon(100))
        full = tridiagonal_spectrum(op)
        assert np.allclose(tridiagonal_spectrum(op, select=(-2, -1)), full[-2:], atol=1e-12)
        assert np.allclose(tridiagonal_spectrum(op, select=(3, 5)), full[3:6], atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 2**32 - 1))
    def test_matches_lapack(self, n, seed):
        r = np.random.default_rng(seed)
        d, e = r.standard_normal(n), r.standard_normal(n - 1)
        ev = tridiagonal_spectrum((d, e))
        assert len(ev) == n
        assert np.abs(ev - eigvalsh_tridiagonal(d, e)).max() <= 1e-11

    def test_sturm_count_total(self):
        op = sector_operator_hs(0, canon(200))
        assert sturm_count(op.diag, op.lower, 2.0)[0] == 201
        assert sturm_count(op.diag, op.lower, -2.0)[0] == 0

    def test_inverse_iteration_residual(self):
        op = sector_operator_hs(0, canon(150))
        lam = tridiagonal_spectrum(op, select=(40, 40))[0]
        v, res = inverse_iteration(op, lam)
        assert res <= 1e-10 and abs(np.linalg.norm(v) - 1) < 1e-12


class TestL0:
    def test_bounds_values(self):
        mpmath.mp.dps = 30
        lo, hi = l0_bounds(2.0, 1.0)
        assert lo == pytest.approx(float(-2 * mpmath.e ** -1 / (1 + mpmath.e ** -2)), abs=1e-15)
        assert round(lo, 5) == -0.64805 and hi == 1.0

    def test_bounds_limits(self):
        # high temperature: the lower bound approaches -1 from above
        assert l0_bounds(1e-3, 1.0)[0] == pytest.approx(-1.0, abs=1e-6)
        assert l0_bounds(1e-3, 1.0)[0] > -1.0
        assert -1e-10 < l0_bounds(60.0, 1.0)[0] < 0
        with pytest.raises(ValueError):
            l0_bounds(0.0, 1.0)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 3), st.floats(0.05, 3), st.floats(0.1, 5), st.integers(2, 80))
    def test_eigenvalues_within_bounds(self, eta, xi, bw, n_max):
        p = ModelParams.from_dimensionless(eta, xi, bw, 1.0, n_max)
        ev = l0_spectrum(p).eigenvalues
        lo, hi = l0_bounds(bw, 1.0)
        assert ev[0] >= lo - 1e-10 and ev[-1] <= hi + 1e-10

    def test_no_eigenvalue_below_bound_generic(self):
        p = ModelParams.from_dimensionless(0.3, 1.7, 1.0, 1.0, 2000)
        ev = l0_spectrum(p).eigenvalues
        assert len(ev) == 2001
        assert int(np.sum(ev < l0_bounds(1.0, 1.0)[0])) == 0

    def test_top_eigenvector_ln4(self):
        chk = top_eigenpair_check(canon(200, math.log(4)))
        assert not chk["resonant"]
        assert abs(chk["lambda_max"] - 1) <= 1e-10
        assert chk["cosine"] >= 1 - 1e-8
        assert chk["lambda_2"] < chk["lambda_max"]
        v = chk["vector"]
        # successive ratios of e^{-n ln2}; tiny entries carry only absolute accuracy
        k = int(np.sum(v >= 1e-3 * v.max()))
        assert np.allclose(v[1:k] / v[:k - 1], 0.5, rtol=1e-8)

    def test_fully_resonant_fixed_space_grows(self):
        dims = []
        for n_max in (10, 30, 60):
            chk = top_eigenpair_check(ModelParams.from_dimensionless(0, 1, 1.0, 1.0, n_max))
            assert chk["resonant"]
            dims.append(chk["fixed_dim"])
        # one exact fixed vector per complete resonance sector below the cutoff
        assert dims == [3, 5, 7]

    @pytest.mark.parametrize("n_max", [2, 5, 9, 40, 300])
    def test_lambda2_below_one(self, n_max):
        # at small cutoffs the boundary leak pushes even the top eigenvalue below 1
        chk = top_eigenpair_check(canon(n_max))
        assert chk["lambda_2"] < chk["lambda_max"] <= 1.0 + 1e-10
        assert chk["fixed_dim"] <= 1

    def test_embedding_maps_top_vector(self):
        p = canon(120, 0.8)
        chk = top_eigenpair_check(p)
        x = chk["vector"] * np.exp(-0.4 * np.arange(121))
        ratio = x[:20] / np.exp(-0.8 * np.arange(20))
        assert np.ptp(ratio) / ratio[0] <= 1e-10
        t = sector_operator_trace(0, p)
        y = np.exp(-0.8 * np.arange(121))
        assert np.abs(t.matvec(y) - y)[:-1].max() <= 1e-14

    def test_picture_conjugation(self):
        p = canon(120)
        a, b = hs_to_trace(sector_operator_hs(0, p), p), sector_operator_trace(0, p)
        assert np.abs(a.to_dense() - b.to_dense()).max() <= 1e-12


class TestGapScan:
    def test_non_increasing_and_shrinking(self):
        rows = gap_scan(canon(), range(2, 70))
        gaps = np.array([r["gap"] for r in rows])
        assert np.all(gaps > 0)
        assert np.all(np.diff(gaps) <= 1e-12)
        assert gaps[0] / gaps[-1] > 100

    def test_before_first_quasi_resonance_gap_is_large(self):
        # weak irrational coupling puts the first quasi-resonance at m_1 = 14
        xi = 0.05 * math.sqrt(2)
        p = ModelParams.from_dimensionless(0.0, xi, 1.0, 1.0, 2)
        m, _ = find_quasi_resonances(0.0, xi, 1.0, 1.0, 400)
        assert m[0] == 14
        rows = gap_scan(p, [2, m[0] - 1])
        assert all(r["gap"] > 1e-2 for r in rows)

    def test_lambda2_jumps_after_crossing(self):
        m, _ = find_quasi_resonances(canon().eta, canon().xi, 1.0, 1.0, 100)
        rows = {r["n_max"]: r for r in gap_scan(canon(), range(2, 66))}
        for a, b in zip(m[:4], m[1:5]):
            assert rows[b]["lambda_2"] > rows[a]["lambda_2"]

    def test_modified_operator_degenerate(self):
        p = canon(64)
        m, _ = find_quasi_resonances(p.eta, p.xi, 1.0, 1.0, 200)
        row = gap_scan(p, [64], quasi=m)[0]
        assert abs(row["lambda_2"] - 1.0) <= 1e-12
        assert fixed_space_dimension(symmetrized_modified_l0(p, m)) == sum(1 for x in m if x <= 64)

    def test_modified_trace_operator_similar(self):
        p = canon(40)
        m, _ = find_quasi_resonances(p.eta, p.xi, 1.0, 1.0, 100)
        diag, off = symmetrized_modified_l0(p, m)
        sym = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        h = math.exp(-0.5) ** np.arange(41)
        conj = (h[:, None] * sym) / h[None, :]
        assert np.abs(conj - modified_trace_operator(p, m)).max() <= 1e-12


class TestPeripheral:
    @pytest.mark.parametrize("d", [1, 2, 5])
    def test_hs_offdiagonal_decay(self, d, rng):
        op = sector_operator_hs(d, canon(200))
        pr = peripheral_probe(op)
        assert pr.estimate <= 1 + 1e-8
        assert not pr.peripheral_eigenvalue
        x = rng.standard_normal(op.size) + 1j * rng.standard_normal(op.size)
        norms = iterate_norms(op, x, 10**4, every=100)
        assert norms[-1] < 1e-6 * norms[0]
        assert np.all(np.diff(norms) <= 1e-12 * norms[0])

    @pytest.mark.parametrize("d", [1, 3])
    def test_uncoupled_trace_picture_is_phase(self, d):
        p = ModelParams.from_dimensionless(0.2, 0.0, 1.0, 0.7, 30)
        op = sector_operator_trace(d, p)
        assert np.allclose(op.diag, np.exp(1j * 0.7 * d), atol=1e-15)
        assert not np.any(op.lower) and not np.any(op.upper)
        pr = peripheral_probe(op)
        assert pr.estimate == pytest.approx(1.0, abs=1e-14)

    def test_decay_slower_for_larger_truncation(self, rng):
        steps = 2000
        out = []
        for n_max in (30, 120):
            op = sector_operator_trace(1, canon(n_max))
            x = np.ones(op.size, complex)
            out.append(iterate_norms(op, x, steps)[-1] / iterate_norms(op, x, 0)[0])
        assert out[0] < out[1] < 1.0

    def test_entry_decay_exponent(self):
        windows = [2**j for j in range(4, 17)]
        for d in (1, 2, 5):
            prof = entry_difference_profile(canon(), d, windows)
            slope = np.polyfit(np.log([w for w, _ in prof]), np.log([v for _, v in prof]), 1)[0]
            assert abs(slope + 0.5) <= 0.1

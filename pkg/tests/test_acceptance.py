"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import json
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import PHI, canon  # noqa: E402
from maserlab.channel import (apply_channel, dense_channel_oracle, hs_to_trace,  # noqa: E402
                              kraus_trace_picture, sector_operator_hs, sector_operator_trace)
from maserlab.dynamics import (iterate, metastable_fixed_residual, metastable_lifetime,  # noqa: E402
                               mixing_budget, slow_mixing_witness)
from maserlab.params import ModelParams  # noqa: E402
from maserlab.propagator import (build_propagator, dense_exponential_oracle,  # noqa: E402
                                 unitarity_defects)
from maserlab.resonance import find_quasi_resonances, fit_decay_exponent  # noqa: E402
from maserlab.spectral import (entry_difference_profile, fixed_space_dimension, gap_scan,  # noqa: E402
                               l0_bounds, l0_spectrum, symmetrized_modified_l0,
                               top_eigenpair_check)
from maserlab.state import BandedState, random_density_matrix, trace_norm_dense  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
RESULTS: list[str] = []


def _record(number, title, limit, fn):
    t0 = time.perf_counter()
    try:
        detail = fn()
        ok, err = True, None
    except AssertionError as exc:
        ok, detail, err = False, str(exc).splitlines()[0] if str(exc) else "assertion failed", exc
    wall = time.perf_counter() - t0
    if ok and limit is not None and wall > limit:
        ok, detail = False, f"runtime {wall:.1f} s over the {limit:.0f} s limit"
        err = AssertionError(detail)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} [{wall:.2f} s] {detail or ''}"
    RESULTS.append(line.rstrip())
    print(line)
    if err is not None:
        raise err


# --- checks -------------------------------------------------------------------

def check_unitarity():
    worst = 0.0
    for eta, xi in [(0.0, 1.0), (0.3, 1.7), (0.25, 0.5)]:
        p = ModelParams.from_dimensionless(eta, xi, 1.0, 1.0, 100)
        defects = unitarity_defects(build_propagator(p))
        # subspaces N_tot <= n_max lie fully inside the truncation
        worst = max(worst, float(defects[:101].max()))
    assert worst <= 1e-12, f"unitarity defect {worst:.2e}"
    p = ModelParams.from_dimensionless(0.3, 1.7, 1.0, 1.0, 16)
    u, ref = build_propagator(p).to_dense(), dense_exponential_oracle(p)
    keep = np.arange(15)
    idx = np.concatenate([keep, keep + 17])
    err = float(np.abs(u[np.ix_(idx, idx)] - ref[np.ix_(idx, idx)]).max())
    assert err <= 1e-10, f"oracle mismatch {err:.2e}"
    return f"max defect {worst:.1e}, oracle {err:.1e}"


def check_oracle_channel():
    p = ModelParams.from_dimensionless(0.3, 1.7, 1.0, 0.83, 32)
    rng = np.random.default_rng(2)
    k = kraus_trace_picture(p)
    worst = 0.0
    for _ in range(20):
        rho = random_density_matrix(32, rng)
        ours = apply_channel(BandedState.from_dense(rho), k).to_dense()
        ref, _ = dense_channel_oracle(rho, p)
        worst = max(worst, trace_norm_dense(ours - ref))
    assert worst <= 1e-10, f"trace-norm difference {worst:.2e}"
    return f"max ||diff||_1 {worst:.1e}"


def check_fixed_point():
    worst = []
    for bw in (0.5, 1.0, 2.0):
        p = canon(200, bw)
        th = BandedState.thermal(bw, 200)
        out = apply_channel(th, kraus_trace_picture(p))
        leak = max(0.0, 1.0 - out.trace())
        err = trace_norm_dense(out.to_dense() - th.to_dense())
        assert err <= 1e-9 + leak, f"bw={bw}: {err:.2e} > 1e-9 + {leak:.1e}"
        worst.append(err)
    return f"max ||L(rho)-rho||_1 {max(worst):.1e}"


def check_spectral_bounds():
    p = canon(2000, 1.0)
    ev = l0_spectrum(p).eigenvalues
    lo, hi = l0_bounds(1.0, 1.0)
    assert len(ev) == 2001
    assert ev[0] >= lo - 1e-10 and ev[-1] <= hi + 1e-10, f"spectrum [{ev[0]}, {ev[-1]}]"
    chk = top_eigenpair_check(p)
    assert not chk["resonant"]
    assert chk["cosine"] >= 1 - 1e-8, f"cosine {chk['cosine']}"
    assert chk["lambda_2"] < 1.0 and chk["lambda_2"] < chk["lambda_max"]
    # the (0.3, 1.7) set is resonant; the bound still holds for it
    ev2 = l0_spectrum(ModelParams.from_dimensionless(0.3, 1.7, 1.0, 1.0, 2000)).eigenvalues
    below = int(np.sum(ev2 < lo - 1e-10))
    assert below == 0, f"{below} eigenvalues below the lower bound for (0.3, 1.7)"
    return f"min {ev[0]:.6f} >= {lo:.6f}, cosine {chk['cosine']:.12f}, 1-lambda_2 {1 - chk['lambda_2']:.1e}"


def check_pictures():
    p = canon(500, 1.0)
    hs = sector_operator_hs(0, p)
    a, b = hs_to_trace(hs, p).to_dense(), sector_operator_trace(0, p).to_dense()
    err = float(np.abs(a - b).max())
    w = np.exp(-0.5 * np.arange(501))
    dense = (w[:, None] * hs.to_dense()) / w[None, :]
    err2 = float(np.abs(dense - b).max())
    assert max(err, err2) <= 1e-12, f"entry mismatch {max(err, err2):.2e}"
    return f"max entry difference {max(err, err2):.1e}"


def check_entry_decay():
    windows = [2 ** j for j in range(4, 16)] + [50_000]
    slopes = {}
    for d in (1, 2, 5):
        prof = entry_difference_profile(canon(64), d, windows)
        n = np.log([w for w, _ in prof])
        v = np.log([x for _, x in prof])
        slopes[d] = float(np.polyfit(n, v, 1)[0])
        assert abs(slopes[d] + 0.5) <= 0.1, f"d={d}: slope {slopes[d]:.3f}"
    return ", ".join(f"d={d}: {s:.3f}" for d, s in slopes.items())


def check_mixing():
    p = canon(64, 1.0)
    budget = mixing_budget(p, 1e-5)
    out = []
    for name, rho in (("fock0", BandedState.fock(0, 64)), ("coherent", BandedState.coherent(1.2, 64))):
        traj = iterate(rho, p, budget, stop_below=1e-5)
        assert traj.exact
        assert traj.trace_distance[-1] < 1e-5, f"{name}: {traj.trace_distance[-1]:.2e} after {budget}"
        assert traj.max_increase() <= 0.0, f"{name}: distance rose by {traj.max_increase():.1e}"
        out.append(f"{name} {traj.steps[-1]} steps")
    return ", ".join(out) + f" (budget {budget})"


QUASI_SETS = [(1 / (2 * PHI**2), 1 / PHI**2), (0.0, math.sqrt(2)), (0.1, 1 / PHI)]


def check_quasi_decay():
    slopes = []
    for eta, xi in QUASI_SETS:
        _, fit = find_quasi_resonances(eta, xi, 1.0, 1.0, 10**4)
        slopes.append(fit)
    inside = [s for s in slopes if s is not None and -2.3 <= s <= -1.7]
    assert len(inside) >= 2, f"slopes {slopes}"
    _, golden = find_quasi_resonances(0.0, 1 / PHI**2, 1.0, 1.0, 10**4)
    return ", ".join(f"{s:.3f}" for s in slopes) + f" (info: eta=0, xi=1/phi^2 gives {golden:.3f})"


def check_slow_mixing():
    p = canon(80)
    steps = [metastable_lifetime(p, k).steps for k in (1, 2, 3, 4)]
    assert all(b > a for a, b in zip(steps, steps[1:])), f"lifetimes {steps}"
    quasi, _ = find_quasi_resonances(p.eta, p.xi, 1.0, 1.0, 200)
    m4 = quasi[3]
    rows = gap_scan(canon(), range(2, m4 + 1))
    gaps = np.array([r["gap"] for r in rows])
    assert np.all(np.diff(gaps) <= 1e-12), "gap increases somewhere"
    by_n = {r["n_max"]: r["gap"] for r in rows}
    ratio = by_n[quasi[0]] / by_n[m4]
    assert ratio >= 10, f"gap ratio {ratio:.1f}"
    w = slow_mixing_witness(p, "inv_n", budget=10_000)
    assert w.full_sequence, "1/n not certified on the full sequence"
    return (f"lifetimes {steps}, gap(m_1)/gap(m_4) = {ratio:.1f}, "
            f"witness {w.kind} k={w.k} n0={w.n0} C={w.constant:.2e}")


def check_degeneracy():
    p = canon(64)
    quasi, _ = find_quasi_resonances(p.eta, p.xi, 1.0, 1.0, 200)
    ks = [k for k, m in enumerate(quasi, 1) if m <= 64]
    worst = max(metastable_fixed_residual(p, k, quasi) for k in ks)
    assert worst <= 1e-12, f"residual {worst:.2e}"
    dim = fixed_space_dimension(symmetrized_modified_l0(p, quasi))
    assert dim == len(ks), f"fixed dimension {dim} vs {len(ks)} quasi-sectors"
    return f"k = {ks}, residual {worst:.1e}, fixed dimension {dim}"


def check_determinism():
    configs = sorted((ROOT / "configs").glob("*.json"))
    assert configs
    with tempfile.TemporaryDirectory() as tmp:
        for cfg in configs:
            kind = json.loads(cfg.read_text())["experiment"]["kind"]
            outs = []
            for tag in ("a", "b"):
                out = Path(tmp) / cfg.stem / tag
                rc = subprocess.run([sys.executable, "-m", "maserlab", kind, "--config", str(cfg),
                                     "--out", str(out)], capture_output=True).returncode
                assert rc == 0, f"{cfg.name} exited {rc}"
                outs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())
                             if f.suffix in (".csv", ".json")})
            assert outs[0] == outs[1], f"{cfg.name} differs between runs"
    return f"{len(configs)} configs byte-identical"


CRITERIA = [
    (1, "propagator unitarity and oracle", 5, check_unitarity),
    (2, "channel vs dense oracle", 10, check_oracle_channel),
    (3, "thermal fixed point", 5, check_fixed_point),
    (4, "spectral bounds of L^(0)", 30, check_spectral_bounds),
    (5, "picture consistency", None, check_pictures),
    (6, "entry-decay exponent", None, check_entry_decay),
    (7, "mixing to the thermal state", 60, check_mixing),
    (8, "quasi-resonance decay slope", None, check_quasi_decay),
    (9, "slow mixing", 300, check_slow_mixing),
    (10, "D_0 degeneracy", None, check_degeneracy),
    (11, "determinism of shipped configs", None, check_determinism),
]


@pytest.mark.parametrize("number,title,limit,fn", CRITERIA, ids=[f"c{c[0]}" for c in CRITERIA])
def test_criterion(number, title, limit, fn):
    _record(number, title, limit, fn)


if __name__ == "__main__":
    failed = 0
    for args in CRITERIA:
        try:
            _record(*args)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)

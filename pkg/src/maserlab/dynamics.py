"""Long-horizon iteration: mixing, decoherence, metastability and slow-mixing witnesses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channel import (apply_channel, kraus_trace_picture,
                      sector_operator_hs, sector_operator_trace)
from .params import ModelParams, d_profile, thermal_weights
from .resonance import find_quasi_resonances, metastable_state
from .spectral import peripheral_probe, tridiagonal_spectrum
from .state import BandedState, trace_distance

HARD_STEP_CAP = 5_000_000
LIFTING_DEPTH = 62


class BudgetExceeded(RuntimeError):
    """Accumulated leakage or step count passed the configured budget."""


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)
    trace_distance: list = field(default_factory=list)
    distance_upper: list = field(default_factory=list)
    leakage: list = field(default_factory=list)
    band0_fixednorm: list = field(default_factory=list)
    band_l1: dict = field(default_factory=dict)
    observables: dict = field(default_factory=dict)
    exact: bool = True
    final_state: Optional[BandedState] = None

    def record(self, n, state, thermal, leak, track, observables, exact_limit):
        dist = trace_distance(state, thermal, exact_limit)
        if isinstance(dist, tuple):
            self.exact = False
            lo, hi = dist
        else:
            lo = hi = dist
        self.steps.append(n)
        self.trace_distance.append(float(lo))
        self.distance_upper.append(float(hi))
        self.leakage.append(float(leak))
        self.band0_fixednorm.append(
            0.5 * float(np.abs(state.band(0).real - thermal.band(0).real).sum()))
        for d in track:
            self.band_l1.setdefault(d, []).append(state.band_l1(d))
        for name, a in observables.items():
            self.observables.setdefault(name, []).append(expectation(state, a))

    def max_increase(self) -> float:
        """Largest step-to-step increase of the recorded trace distance."""
        v = np.asarray(self.trace_distance)
        return float(np.max(np.diff(v), initial=0.0))

    def columns(self) -> list[str]:
        return (["step", "trace_distance", "leakage", "band0_fixednorm"]
                + [f"band_d{d}_l1" for d in sorted(self.band_l1)])

    def rows(self):
        keys = sorted(self.band_l1)
        for i, n in enumerate(self.steps):
            yield ([n, self.trace_distance[i], self.leakage[i], self.band0_fixednorm[i]]
                   + [self.band_l1[d][i] for d in keys])


def expectation(state: BandedState, a: np.ndarray) -> complex:
    """Tr(rho A) from the stored bands and a dense observable."""
    a = np.asarray(a)
    total = 0j
    idx = np.arange(state.n_max + 1)
    for d, x in state.bands.items():
        i = idx[: len(x)]
        total += np.sum(x * a[i + d, i])
        if d:
            total += np.sum(np.conj(x) * a[i, i + d])
    return complex(total)


class BandStepper:
    """All tracked bands advanced at once through their tridiagonal sector operators."""

    def __init__(self, params: ModelParams, bands, interaction: bool = False):
        self.n_max = params.n_max
        self.bands = sorted(bands)
        size = self.n_max + 1
        shape = (len(self.bands), size)
        self.diag = np.zeros(shape, complex)
        self.lower = np.zeros(shape, complex)
        self.upper = np.zeros(shape, complex)
        for row, d in enumerate(self.bands):
            op = sector_operator_trace(d, params, interaction)
            m = op.size
            self.diag[row, :m] = op.diag
            self.lower[row, 1:m] = op.lower
            self.upper[row, : m - 1] = op.upper

    def pack(self, state: BandedState) -> np.ndarray:
        x = np.zeros_like(self.diag)
        for row, d in enumerate(self.bands):
            b = state.band(d)
            x[row, : len(b)] = b
        return x

    def unpack(self, x: np.ndarray, template: BandedState) -> BandedState:
        return template.replace_bands({d: x[row, : self.n_max + 1 - d]
                                       for row, d in enumerate(self.bands)})

    def step(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[:, 1:] += self.lower[:, 1:] * x[:, :-1]
        y[:, :-1] += self.upper[:, :-1] * x[:, 1:]
        return y


def iterate(rho0: BandedState, params: ModelParams, steps: int, path: str = "band",
            picture: str = "trace", track: Optional[list] = None,
            observables: Optional[dict] = None, record_every: int = 1,
            leakage_budget: Optional[float] = 1e-6, stop_below: Optional[float] = None,
            exact_limit: int = 256) -> Trajectory:
    """rho_n = L^n(rho_0) with per-record bookkeeping.

    Leakage is the running maximum of Tr(rho_0) - Tr(rho_n), so rounding
    noise of either sign never makes it decrease or go negative.

    ``path="kraus"`` applies the Kraus set; ``path="band"`` advances all bands
    with their sector operators in one vectorised step. ``stop_below`` ends
    the run at the first recorded trace distance under the given value.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if rho0.n_max != params.n_max:
        raise ValueError("state and model have different truncations")
    if picture not in ("trace", "interaction"):
        raise ValueError(f"unknown picture {picture!r}")
    track = sorted(rho0.bands) if track is None else sorted(track)
    observables = observables or {}
    thermal = BandedState.thermal(params.beta_omega0, params.n_max)
    traj = Trajectory()
    tr0 = rho0.trace()
    interaction = picture == "interaction"
    traj.record(0, rho0, thermal, 0.0, track, observables, exact_limit)

    def check_leak(leak):
        if leakage_budget is not None and leak > leakage_budget:
            raise BudgetExceeded(f"accumulated leakage {leak:.3e} exceeds budget {leakage_budget:.3e}")

    state = rho0
    if path == "kraus":
        kraus = kraus_trace_picture(params, interaction)
        for n in range(1, steps + 1):
            state = apply_channel(state, kraus)
            if n % record_every == 0 or n == steps:
                leak = max(traj.leakage[-1], tr0 - state.trace())
                check_leak(leak)
                traj.record(n, state, thermal, leak, track, observables, exact_limit)
                if stop_below is not None and traj.trace_distance[-1] < stop_below:
                    break
    elif path == "band":
        stepper = BandStepper(params, rho0.bands, interaction)
        x = stepper.pack(rho0)
        for n in range(1, steps + 1):
            x = stepper.step(x)
            if n % record_every == 0 or n == steps:
                state = stepper.unpack(x, rho0)
                leak = max(traj.leakage[-1], tr0 - state.trace())
                check_leak(leak)
                traj.record(n, state, thermal, leak, track, observables, exact_limit)
                if stop_below is not None and traj.trace_distance[-1] < stop_below:
                    break
        state = stepper.unpack(x, rho0)
    else:
        raise ValueError(f"unknown path {path!r}")
    traj.final_state = state
    return traj


def ergodic_average(values) -> np.ndarray:
    """Cesaro means (1/N) sum_{n < N} a_n for N = 1, 2, ..."""
    v = np.asarray(values)
    return np.cumsum(v) / np.arange(1, len(v) + 1)


def step_budget(rate: float, tol: float, cap: int = HARD_STEP_CAP) -> int:
    """Steps for exp(-rate n) to fall below ``tol`` with an e^10 safety factor, capped."""
    if not rate > 0:
        return cap
    return int(min(cap, math.ceil((math.log(1.0 / tol) + 10.0) / rate)))


def relaxation_rate(params: ModelParams, bands=(0,), max_iter: int = 20000) -> float:
    """Smallest decay rate among the given bands.

    Band 0 uses 1 - lambda_2 of the symmetric block; other bands use
    1 - (power-iteration spectral radius) of the HS block.
    """
    rates = []
    for d in bands:
        if d == 0:
            lam2 = tridiagonal_spectrum(sector_operator_hs(0, params), select=(-2, -2))[0]
            rates.append(1.0 - abs(lam2))
        else:
            pr = peripheral_probe(sector_operator_hs(d, params), max_iter=max_iter)
            rates.append(1.0 - pr.interval[1])
    return float(min(rates))


def mixing_budget(params: ModelParams, tol: float, bands=(0,), cap: int = HARD_STEP_CAP) -> int:
    return step_budget(relaxation_rate(params, bands), tol, cap)


def decoherence_curve(rho0: BandedState, params: ModelParams, d: int, steps: int,
                      interaction: bool = False) -> np.ndarray:
    """l1 norm of band d after n = 0..steps steps."""
    if d == 0 or d > rho0.n_max:
        raise ValueError("d must be a non-zero stored band")
    x = np.asarray(rho0.band(d), complex)
    if not np.any(x):
        raise ValueError(f"band {d} of the initial state is empty")
    op = sector_operator_trace(d, params, interaction)
    out = np.empty(steps + 1)
    out[0] = np.abs(x).sum()
    for n in range(1, steps + 1):
        x = op.matvec(x)
        out[n] = np.abs(x).sum()
    return out


# --- metastability -----------------------------------------------------------

def _trace_block(params: ModelParams, d_values: np.ndarray) -> np.ndarray:
    """Dense 1 - nabla_0^* D nabla_{2 beta} on {0..n_max} for the given D(0..n_max+1)."""
    from .channel import diagonal_sector_closed_form

    return diagonal_sector_closed_form(params, "trace", d_values)


def _boundary_flux(rho: np.ndarray, d_diff: np.ndarray, beta_omega0: float) -> np.ndarray:
    """-nabla_0^* (D - D') nabla_{2 beta} rho, the exact one-step increment.

    ``d_diff`` is D - D' on 0..n_max+1; it is non-zero only at a few indices,
    so the result is computed without cancellation against rho itself.
    """
    e = math.exp(-beta_omega0)
    g = np.append(rho, 0.0)
    g[1:] -= e * rho
    f = d_diff * g
    return -(f[:-1] - f[1:])


@dataclass
class LifetimeResult:
    k: int
    m_k: int
    steps: Optional[int]
    lower_bound: bool
    threshold: float
    saturation: float
    method: str

    @property
    def infinite(self) -> bool:
        return self.steps is None and not self.lower_bound


def _metastable_setup(params: ModelParams, k: int, quasi, modified: bool):
    bw = params.beta_omega0
    if quasi is None:
        quasi, _ = find_quasi_resonances(params.eta, params.xi, bw, 1.0, params.n_max + 1)
    rho = metastable_state(k, quasi, bw, 1.0, params.n_max).values
    dvals = np.asarray(d_profile(params, np.arange(params.n_max + 2)), float)
    d0 = dvals.copy()
    d0[[m for m in quasi if m <= params.n_max + 1]] = 0.0
    m_k = int(quasi[k - 1])
    # rho_k is fixed by the D_0 dynamics; the true dynamics differs from that
    # only through D at the quasi-resonances, which rho_k sees only at m_k.
    used = d0 if modified else dvals
    mat = _trace_block(params, used)
    r = _boundary_flux(rho, used - d0, bw)
    return rho, mat, r, m_k, quasi


def metastable_lifetime(params: ModelParams, k: int, threshold: float = 0.5,
                        relative: bool = True, quasi=None, modified: bool = False,
                        method: str = "lifting", budget: Optional[int] = None,
                        headroom: int = 4) -> LifetimeResult:
    """Smallest n with 1/2 ||L^n(rho_k) - rho_k||_1 > threshold.

    With ``relative=True`` the threshold is a fraction of the saturation
    value 1/2 ||rho_th - rho_k||_1, which is about e^{-beta omega0 m_k}; an
    absolute threshold above that value is never crossed.

    The displacement L^n(rho_k) - rho_k is accumulated as sum_{j<n} L^j r with
    r the exact one-step increment, so it keeps full relative accuracy even
    when it is far below double-precision resolution of rho_k itself.
    ``method="lifting"`` finds n by repeated squaring and binary descent
    (assumes the displacement norm first exceeds the threshold only once,
    which the brute-force ``method="iterate"`` cross-checks on small k).
    """
    rho, mat, r, m_k, quasi = _metastable_setup(params, k, quasi, modified)
    if params.n_max < m_k + headroom:
        raise ValueError(f"n_max = {params.n_max} leaves no headroom above m_{k} = {m_k}")
    thermal = thermal_weights(params.beta_omega0, params.n_max)
    saturation = 0.5 * float(np.abs(thermal - rho).sum())
    target = threshold * saturation if relative else threshold
    if not np.any(r):
        return LifetimeResult(k, m_k, None, False, target, saturation, method)

    def dist(v):
        return 0.5 * float(np.abs(v).sum())

    if method == "iterate":
        cap = budget or 10**6
        delta = np.zeros_like(rho)
        for n in range(1, cap + 1):
            delta = r + mat @ delta
            if dist(delta) > target:
                return LifetimeResult(k, m_k, n, False, target, saturation, method)
        return LifetimeResult(k, m_k, cap, True, target, saturation, method)
    if method != "lifting":
        raise ValueError(f"unknown method {method!r}")
    depth = LIFTING_DEPTH if budget is None else max(1, int(math.ceil(math.log2(budget))))
    powers, deltas = [mat], [r]
    while dist(deltas[-1]) <= target:
        if len(powers) > depth:
            return LifetimeResult(k, m_k, 2 ** (len(powers) - 1), True, target, saturation, method)
        deltas.append(deltas[-1] + powers[-1] @ deltas[-1])
        powers.append(powers[-1] @ powers[-1])
    n = 0
    cur = np.zeros_like(rho)
    for j in range(len(powers) - 1, -1, -1):
        cand = deltas[j] + powers[j] @ cur
        if dist(cand) <= target:
            cur = cand
            n += 2 ** j
    return LifetimeResult(k, m_k, n + 1, False, target, saturation, method)


def metastable_fixed_residual(params: ModelParams, k: int, quasi=None) -> float:
    """max |L_0 rho_k - rho_k| for the D_0-modified operator (dense product)."""
    rho, mat, _, _, _ = _metastable_setup(params, k, quasi, modified=True)
    return float(np.max(np.abs(mat @ rho - rho)))


# --- slow-mixing witness -----------------------------------------------------

EPSILON_SEQUENCES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    # log(eps_n), n >= 1
    "inv_n": lambda n: -np.log(n),
    "inv_sqrt_n": lambda n: -0.5 * np.log(n),
    "inv_log_n": lambda n: -np.log(np.log(n + 1.0)),
    "exp2": lambda n: -n * math.log(2.0),
}


@dataclass
class Witness:
    kind: str
    k: int
    d: int
    m_k: int
    n0: int
    constant: float
    budget: int
    full_sequence: bool
    subsequence: bool
    state: BandedState
    observable: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.full_sequence or self.subsequence


def _log_epsilon(epsilon, n: np.ndarray) -> np.ndarray:
    if isinstance(epsilon, str):
        try:
            return EPSILON_SEQUENCES[epsilon](n)
        except KeyError:
            raise ValueError(f"unknown epsilon sequence {epsilon!r}") from None
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(epsilon(n), float))


def _certify(diff: np.ndarray, log_eps: np.ndarray, floor: float, n0_max: int):
    """Find the smallest n0 <= n0_max with diff_n >= C eps_n for all n in [n0, budget].

    C = diff_{n0} / (2 eps_{n0}). Values below ``floor`` count as zero.
    Returns (n0, C, full, subsequence) with n0 = None when nothing works.
    """
    with np.errstate(divide="ignore"):
        log_g = np.where(diff > floor, np.log(np.maximum(diff, 1e-300)), -np.inf) - log_eps
    suffix_min = np.minimum.accumulate(log_g[::-1])[::-1]
    ok = np.isfinite(log_g[:n0_max]) & (suffix_min[:n0_max] >= log_g[:n0_max] - math.log(2.0))
    if np.any(ok):
        i = int(np.argmax(ok))
        return i + 1, float(math.exp(log_g[i] - math.log(2.0))), True, True
    # subsequence: from the best start, some hit in every dyadic block up to the budget
    for i in range(min(n0_max, len(log_g))):
        if not np.isfinite(log_g[i]):
            continue
        hits = log_g[i:] >= log_g[i] - math.log(2.0)
        n_hits = np.nonzero(hits)[0] + i + 1
        j = int(math.floor(math.log2(i + 1)))
        blocks = range(j + 1, int(math.floor(math.log2(len(log_g)))))
        if all(np.any((n_hits >= 2 ** b) & (n_hits < 2 ** (b + 1))) for b in blocks):
            return i + 1, float(math.exp(log_g[i] - math.log(2.0))), False, True
    return None, 0.0, False, False


def _thermal_boundary_residual(params: ModelParams, pi: np.ndarray) -> np.ndarray:
    """L(pi) - pi for the truncated thermal vector, from the closed form.

    nabla_{2 beta} pi vanishes identically inside the box, so only the cut at
    n_max contributes; evaluating L(pi) - pi directly would leave rounding
    noise of order 1e-17 that accumulates over long runs.
    """
    dvals = np.asarray(d_profile(params, np.arange(params.n_max + 2)), float)
    g = np.zeros(params.n_max + 2)
    g[-1] = -math.exp(-params.beta_omega0) * pi[-1]
    f = dvals * g
    return -(f[:-1] - f[1:])


def _diagonal_deviation(params, mat, rho, pi, m_k, budget, resolution):
    """|Tr(L^n(rho) P) - Tr(pi P)| for n = 1..budget, P the projector onto [0, m_k).

    Tracks e_n = L^n(rho) - pi, which keeps relative accuracy as it decays.
    Values below ``resolution`` times ||e_n||_1 are reported as 0.
    """
    r = _thermal_boundary_residual(params, pi)
    e = rho - pi
    diff = np.empty(budget)
    for i in range(budget):
        e = mat @ e + r
        val = abs(float(e[:m_k].sum()))
        diff[i] = val if val > resolution * float(np.abs(e).sum()) else 0.0
    return diff


def _coherence_deviation(op, y, mask, budget, resolution):
    diff = np.empty(budget)
    for i in range(budget):
        y = op.matvec(y)
        val = abs(2.0 * float(np.real(np.sum(y * mask))))
        diff[i] = val if val > resolution * float(np.abs(y).sum()) else 0.0
    return diff


def slow_mixing_witness(params: ModelParams, epsilon="inv_n", budget: int = 10_000,
                        k_max: int = 6, d_list=(1, 2), n0_max: Optional[int] = None,
                        quasi=None, resolution: float = 1e-12) -> Witness:
    """Search an initial state and observable that relax no faster than eps_n.

    Candidates, in order: metastable states rho_k (observable: projector onto
    [0, m_k)) for k = 1..k_max, then the coherence construction
    X + X^* + |X| + |X^*| with X in band d (observable: the X-direction
    coherence). The first candidate certified on the full sequence wins;
    otherwise the first subsequence certificate. Certification only covers
    n <= budget.
    """
    bw = params.beta_omega0
    n0_max = n0_max or max(1, budget // 10)
    if quasi is None:
        quasi, _ = find_quasi_resonances(params.eta, params.xi, bw, 1.0, params.n_max + 1)
    log_eps = _log_epsilon(epsilon, np.arange(1, budget + 1, dtype=float))
    pi = thermal_weights(bw, params.n_max)
    usable = [k for k in range(1, k_max + 1)
              if k <= len(quasi) and quasi[k - 1] + 1 <= params.n_max]
    mat = _trace_block(params, np.asarray(d_profile(params, np.arange(params.n_max + 2)), float))

    def candidates():
        for k in usable:
            m_k = int(quasi[k - 1])
            rho = metastable_state(k, quasi, bw, 1.0, params.n_max).values
            diff = _diagonal_deviation(params, mat, rho, pi, m_k, budget, resolution)
            yield ("metastable", k, 0, m_k, BandedState.diagonal(rho),
                   f"projector onto [0, {m_k})", diff)
        for d in d_list:
            op = sector_operator_trace(d, params)
            for k in usable:
                m_k = int(quasi[k - 1])
                if m_k - d < 1:
                    continue
                state = _coherence_state(params.n_max, d, m_k, bw)
                mask = np.zeros(params.n_max + 1 - d)
                mask[: m_k - d] = 1.0
                diff = _coherence_deviation(op, state.band(d).copy(), mask, budget, resolution)
                yield ("coherence", k, d, m_k, state,
                       f"|n><n+{d}| + h.c. summed over n < {m_k - d}", diff)

    tried = []
    fallback = None
    for kind, k, d, m_k, state, obs, diff in candidates():
        n0, c, full, sub = _certify(diff, log_eps, 0.0, n0_max)
        tried.append({"kind": kind, "k": k, "d": d, "n0": n0, "full": full, "subsequence": sub})
        if full:
            return Witness(kind, k, d, m_k, n0, c, budget, True, True, state, obs, {"tried": tried})
        if sub and fallback is None:
            fallback = (kind, k, d, m_k, n0, c, state, obs)
    if fallback is not None:
        kind, k, d, m_k, n0, c, state, obs = fallback
        return Witness(kind, k, d, m_k, n0, c, budget, False, True, state, obs, {"tried": tried})
    raise BudgetExceeded(f"no witness for {epsilon!r} within budget {budget}, k <= {k_max}: {tried}")


def _coherence_state(n_max: int, d: int, m_k: int, beta_omega0: float):
    """rho proportional to X + X^* + |X| + |X^*| with X = sum_{n+d < m_k} sqrt(p_n p_{n+d}) |n><n+d|."""
    p = np.exp(-beta_omega0 * np.arange(n_max + 1))
    x = np.zeros(n_max + 1 - d)
    x[: m_k - d] = np.sqrt(p[: m_k - d] * p[d:m_k])
    diag = np.zeros(n_max + 1)
    diag[: n_max + 1 - d] += np.abs(x)   # |X^*|
    diag[d:] += np.abs(x)                # |X|
    z = diag.sum()
    return BandedState(n_max, {0: diag / z, d: x / z})

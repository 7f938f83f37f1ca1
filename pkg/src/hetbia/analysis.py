"""Degrees-of-freedom accounting, ergodic rate estimation, and tuning of
the direction-vector constant c.

DoF are computed in exact rational arithmetic (small integers, no
tolerances). Rates are per user and per channel use, estimated by Monte
Carlo over channel draws with reproducible per-block substreams; trials
can be distributed over worker threads without changing the result.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import network, receiver
from ._parallel import run_blocks
from .beamforming import default_slot_plan, direction_vector, switch_pattern
from .errors import NotUnimodal
from .network import substream

# Stream-kind tags for substream derivation (see network.substream).
_TAG_RATE_MACRO = 11
_TAG_RATE_FEMTO = 12

_RATE_BLOCK = 2048


@dataclass(frozen=True)
class DofReport:
    """Degrees of freedom per channel use, as exact fractions."""

    macro_bia: Fraction
    femto_bia_total: Fraction
    total_bia: Fraction
    macro_tdma: Fraction
    femto_tdma_total: Fraction
    total_tdma: Fraction
    gain: Fraction


def dof(config):
    """DoF of the alignment scheme vs. a TDMA baseline.

    Scheme: the macrocell delivers K*N messages and each femtocell
    K*M_r + 1 messages per supersymbol of K + 1 slots. TDMA: the
    macrocell alone would use N streams; each femtocell gets a 1/K time
    share of M_r streams in the K-1 slots the macrocell leaves idle,
    totalling M_r*(K-1) across cells.
    """
    K, N, Mr = config.K, config.N, config.Mr
    T = K + 1
    macro_bia = Fraction(K * N, T)
    femto_bia_total = Fraction(K * (K * Mr + 1), T)
    macro_tdma = Fraction(N)
    femto_tdma_total = Fraction(Mr * (K - 1))
    return DofReport(
        macro_bia=macro_bia,
        femto_bia_total=femto_bia_total,
        total_bia=macro_bia + femto_bia_total,
        macro_tdma=macro_tdma,
        femto_tdma_total=femto_tdma_total,
        total_tdma=macro_tdma + femto_tdma_total,
        gain=macro_bia + femto_bia_total - macro_tdma - femto_tdma_total,
    )


def det_d_profile(config, plan, k, c):
    """|det D| of user k's diagonal factor at direction constant ``c``.

    Channel independent: D = diag(w2.v, ..., w2.v, w1.v) depends only on
    c and the slot plan. This is the quantity whose maximization picks
    the rate-optimal c in the high-SNR regime.
    """
    cfg = config.replace(c=float(c))
    w1, w2 = receiver.build_w(cfg, plan, k)
    v = direction_vector(cfg, plan, k)
    w1v = float(w1 @ v)
    w2v = float(w2 @ v)
    return abs(w2v) ** (cfg.N - 1) * abs(w1v)


def _profile_objective(config, plan):
    ks = range(1, config.K + 1)

    def objective(c):
        return min(det_d_profile(config, plan, k, c) for k in ks)

    return objective


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo, hi, tol):
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
    return 0.5 * (lo + hi)


def optimize_c(config, plan, tol=1e-6, grid_points=513):
    """argmax over c in (0, 1) of min_k |det D_k(c)|.

    A coarse grid pre-scan brackets the maximum; golden-section search
    refines it to ``tol``. Under the default plan all users share one
    unimodal profile, so the pre-scan finds a single peak; if it ever
    finds several separated peaks the best one's bracket is refined on a
    dense grid instead (and NotUnimodal is raised only if that fails to
    produce a finite objective).
    """
    f = _profile_objective(config, plan)
    eps = 1e-6
    grid = np.linspace(eps, 1.0 - eps, grid_points)
    vals = np.array([f(c) for c in grid])
    if not np.all(np.isfinite(vals)):
        raise NotUnimodal("profile objective is not finite on (0, 1)")

    interior = np.flatnonzero(
        (vals[1:-1] > vals[:-2]) & (vals[1:-1] >= vals[2:])
    ) + 1
    best = int(np.argmax(vals))
    step = grid[1] - grid[0]
    separated = [i for i in interior if abs(grid[i] - grid[best]) > max(tol, step)]

    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid_points - 1)]
    if separated:
        # multiple local maxima: fall back to dense refinement of the best
        fine = np.linspace(lo, hi, 100001)
        fvals = np.array([f(c) for c in fine])
        return float(fine[np.argmax(fvals)])
    return float(_golden_section(f, lo, hi, tol))


@dataclass(frozen=True)
class RateEstimate:
    """Monte Carlo rate estimate in bits per channel use."""

    mean: float
    std_err: float
    trials: int
    per_user: tuple


def _merge_blocks(block_stats, trials):
    total = 0.0
    total_sq = 0.0
    for s, sq in block_stats:
        total += s
        total_sq += sq
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    std_err = math.sqrt(var / trials)
    return mean, std_err


def macro_rate(config, plan, k, trials, seed, workers=1):
    """Per-slot ergodic rate of macro user k.

    Averages (1/T) log2 det(I_N + rho G G^H) over channel draws, where
    G = D h_tilde h is the scaled effective channel kernel and
    rho = P_mac / (K N^2 sigma^2) with nominal transmit power
    P_mac = K N a^2.
    """
    cfg = config
    N, T = cfg.N, cfg.T
    rho = (cfg.K * cfg.N * cfg.a**2) / (cfg.K * cfg.N**2 * cfg.noise_var)
    D = receiver.script_d(cfg, plan, k)
    eye = np.eye(N)

    n_blocks = -(-trials // _RATE_BLOCK)

    def block(j):
        size = min(_RATE_BLOCK, trials - j * _RATE_BLOCK)
        rng = substream(seed, _TAG_RATE_MACRO, k, j)
        h = network.complex_gaussian(rng, (size, N, N))
        h_cross = network.complex_gaussian(rng, (size, N, N))
        ht, ok = receiver.h_tilde_with_mask(h_cross, cfg.Mr)
        for i in np.flatnonzero(~ok):
            # degenerate cross draws have probability ~0; redraw in place
            for _ in range(64):
                sub = network.complex_gaussian(rng, (1, N, N))
                ht_i, ok_i = receiver.h_tilde_with_mask(sub, cfg.Mr)
                if ok_i[0]:
                    ht[i] = ht_i[0]
                    break
        G = D[None] @ (ht @ h)
        gram = G @ np.conj(np.swapaxes(G, -1, -2))
        _, logdet = np.linalg.slogdet(eye[None] + rho * gram)
        rates = logdet / (np.log(2.0) * T)
        return float(rates.sum()), float((rates**2).sum())

    stats = run_blocks(block, n_blocks, workers)
    mean, std_err = _merge_blocks(stats, trials)
    return RateEstimate(mean=mean, std_err=std_err, trials=trials, per_user=(mean,))


def femto_rate(config, k, trials, seed, workers=1):
    """Per-slot ergodic rate of femtocell user k.

    Averages (1/T) log2 det(I_M + (P_fem / sigma^2) (1/M^2) Ht^H Ht),
    with Ht the amplitude-normalized effective channel and the nominal
    power P_fem = M^2 b^2 / N. The determinant is evaluated on the M x M
    Gram form (equal to the M_r*T-sized form by the push-through
    identity). The rate distribution does not depend on the slot plan, so
    none is needed.
    """
    cfg = config
    T, N, Mr, M = cfg.T, cfg.N, cfg.Mr, cfg.M
    rho = cfg.b**2 / (cfg.N * cfg.noise_var)
    pattern = switch_pattern(cfg, default_slot_plan(cfg.K), k)
    s3 = pattern.selector().reshape(T, N, M)
    eye = np.eye(M)

    n_blocks = -(-trials // _RATE_BLOCK)

    def block(j):
        size = min(_RATE_BLOCK, trials - j * _RATE_BLOCK)
        rng = substream(seed, _TAG_RATE_FEMTO, k, j)
        h_f = network.complex_gaussian(rng, (size, Mr, N))
        lifted = np.einsum("bij,tjm->btim", h_f, s3).reshape(size, Mr * T, M)
        gram = np.conj(np.swapaxes(lifted, -1, -2)) @ lifted
        _, logdet = np.linalg.slogdet(eye[None] + rho * gram)
        rates = logdet / (np.log(2.0) * T)
        return float(rates.sum()), float((rates**2).sum())

    stats = run_blocks(block, n_blocks, workers)
    mean, std_err = _merge_blocks(stats, trials)
    return RateEstimate(mean=mean, std_err=std_err, trials=trials, per_user=(mean,))

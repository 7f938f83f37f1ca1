"""End-to-end Monte Carlo simulation: QPSK over the full
transmit -> channel -> noise -> project -> zero-force -> demodulate chain.

Every experiment is reproducible bit for bit from (spec, master seed):
trials are processed in fixed-size blocks, each block drawing its
channels, payload bits and noise from substreams keyed by the block
index. Sweeps reuse the same substreams at every sweep value (matched
seeds), so monotone trends are visible without Monte Carlo noise between
points, and worker threads cannot change any result.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import analysis, network, receiver
from ._parallel import run_blocks
from .beamforming import (
    default_slot_plan,
    direction_vector,
    femto_stream_power,
    macro_stream_power,
    switch_pattern,
)
from .errors import InvalidConfig, OddBitCount, RankDeficient
from .network import complex_gaussian, substream

#: Gray-mapped QPSK constellation, unit average (and peak) energy.
#: Point index = 2*b0 + b1 for bit pair (b0, b1).
QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)

BITS_PER_SYMBOL = 2

# Substream kind tags (block index and resample attempt are appended).
_TAG_CHAN = 1
_TAG_BITS = 2
_TAG_NOISE = 3

_BLOCK = 512
_MAX_RESAMPLE_ATTEMPTS = 64

# Effective channels whose singular-value ratio falls below this are
# treated as degenerate draws and resampled.
RANK_TOL = 1e-10

SWEEPABLE = ("a", "b", "c", "noise_var")


def qpsk_mod(bits):
    """Map bit pairs to Gray-coded QPSK symbols of unit energy.

    ``bits`` has an even number of entries along its last axis; the output
    last axis is half as long. (b0, b1) -> ((1-2*b0) + 1j*(1-2*b1))/sqrt2.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise OddBitCount(f"bit count {bits.shape[-1]} is odd")
    pairs = bits.reshape(bits.shape[:-1] + (bits.shape[-1] // 2, 2)).astype(float)
    return ((1 - 2 * pairs[..., 0]) + 1j * (1 - 2 * pairs[..., 1])) / np.sqrt(2.0)


def qpsk_demod(symbols):
    """Per-axis sign decisions; exact inverse of :func:`qpsk_mod` in the
    absence of noise."""
    symbols = np.asarray(symbols)
    bits = np.empty(symbols.shape + (2,), dtype=np.uint8)
    bits[..., 0] = symbols.real < 0
    bits[..., 1] = symbols.imag < 0
    return bits.reshape(symbols.shape[:-1] + (symbols.shape[-1] * 2,))


def index_to_bits(indices):
    """Constellation point indices -> bit pairs (inverse of 2*b0 + b1)."""
    indices = np.asarray(indices)
    bits = np.empty(indices.shape + (2,), dtype=np.uint8)
    bits[..., 0] = indices >> 1
    bits[..., 1] = indices & 1
    return bits.reshape(indices.shape[:-1] + (indices.shape[-1] * 2,))


class _Scheme:
    """Channel-independent matrices of one (config, plan) pair."""

    def __init__(self, config, plan):
        K, T, N, M = config.K, config.T, config.N, config.M
        self.config = config
        self.plan = plan
        self.v = np.stack([direction_vector(config, plan, k) for k in range(1, K + 1)])
        w = [receiver.build_w(config, plan, k) for k in range(1, K + 1)]
        self.w1 = np.stack([wk[0] for wk in w])
        self.w2 = np.stack([wk[1] for wk in w])
        # diagonal factors: first N-1 entries w2.v, last entry w1.v
        d = np.full((K, N), np.einsum("kt,kt->k", self.w2, self.v)[:, None])
        d[:, N - 1] = np.einsum("kt,kt->k", self.w1, self.v)
        self.d_diag = d
        self.s3 = np.stack(
            [
                switch_pattern(config, plan, k).selector().reshape(T, N, M)
                for k in range(1, K + 1)
            ]
        )

    def broken_w1(self):
        """Deliberately unorthogonalized w1 rows (negative-control hook):
        uniform over each user's non-exclusive slots."""
        w1 = np.where(self.w2 > 0, 0.0, 1.0)
        return w1 / np.linalg.norm(w1, axis=-1, keepdims=True)


@dataclass(frozen=True)
class SupersymbolResult:
    """Bit-error counts of one simulated supersymbol."""

    macro_bit_errors: np.ndarray   # (K,) per macro user
    femto_bit_errors: np.ndarray   # (K,) per femtocell
    bits_per_macro_user: int       # 2*N
    bits_per_femtocell: int        # 2*M


def _pipeline(config, scheme, macro_h, cross_h, femto_h, mac_bits, fem_bits,
              z_mac, z_fem, w1_override=None):
    """Simulate a batch of supersymbols; arrays carry a leading batch axis.

    Returns (macro_errors (B, K), femto_errors (B, K), ok (B,)) where ok
    flags trials whose effective channels were numerically full rank.
    """
    a, b = config.a, config.b
    N, T, Mr, M = config.N, config.T, config.Mr, config.M
    sigma = math.sqrt(config.noise_var)
    p_mac = macro_stream_power(config)
    p_fem = femto_stream_power(config)
    w1 = scheme.w1 if w1_override is None else w1_override

    u_mac = math.sqrt(p_mac) * qpsk_mod(mac_bits)        # (B, K, N)
    u_fem = math.sqrt(p_fem) * qpsk_mod(fem_bits)        # (B, K, M)

    x_a = (a / math.sqrt(N)) * np.einsum("kt,bkn->btn", scheme.v, u_mac)
    x_f = (b / math.sqrt(N)) * np.einsum("ktnm,bkm->bktn", scheme.s3, u_fem)

    # --- macro receivers -------------------------------------------------
    y = np.einsum("bkij,btj->bkti", macro_h, x_a)
    y += np.einsum("bkij,bktj->bkti", cross_h, x_f)
    y += sigma * z_mac

    ht, ok = receiver.h_tilde_with_mask(cross_h, Mr)
    P = receiver.projection_matrix(w1, scheme.w2, ht)    # (B, K, N, N*T)
    y_proj = np.einsum("bknt,bkt->bkn", P, y.reshape(y.shape[:2] + (T * N,)))

    h_eff = (a / math.sqrt(N)) * (scheme.d_diag[..., None] * (ht @ macro_h))
    sv = np.linalg.svd(h_eff, compute_uv=False)
    ok = ok & (sv[..., -1] > RANK_TOL * sv[..., 0])
    safe = np.where(ok[..., None, None], h_eff, np.eye(N))
    x_hat = np.linalg.solve(safe, y_proj[..., None])[..., 0]
    det_mac = qpsk_demod(x_hat / math.sqrt(p_mac))
    mac_err = np.sum(det_mac != mac_bits, axis=-1)

    # --- femto receivers -------------------------------------------------
    y_f = np.einsum("bkij,bktj->bkti", femto_h, x_f) + sigma * z_fem
    h_f = (b / math.sqrt(N)) * np.einsum("bkij,ktjm->bktim", femto_h, scheme.s3)
    h_f = h_f.reshape(h_f.shape[:2] + (Mr * T, M))
    sv_f = np.linalg.svd(h_f, compute_uv=False)
    ok_f = sv_f[..., M - 1] > RANK_TOL * sv_f[..., 0]
    h_f_h = np.conj(np.swapaxes(h_f, -1, -2))
    gram = h_f_h @ h_f
    safe_g = np.where(ok_f[..., None, None], gram, np.eye(M))
    rhs = np.einsum("bkmi,bki->bkm", h_f_h, y_f.reshape(y_f.shape[:2] + (Mr * T,)))
    x_hat_f = np.linalg.solve(safe_g, rhs[..., None])[..., 0]
    det_fem = qpsk_demod(x_hat_f / math.sqrt(p_fem))
    fem_err = np.sum(det_fem != fem_bits, axis=-1)

    ok_all = np.all(ok & ok_f, axis=-1)
    return mac_err, fem_err, ok_all


def run_supersymbol(config, plan, channels, rng):
    """Simulate one supersymbol on the given channel set.

    Payload bits and receiver noise are drawn from ``rng``; the noise
    variance comes from the config. Raises :class:`RankDeficient` when an
    effective channel of this draw is numerically rank deficient (the
    caller resamples the channel).
    """
    scheme = _Scheme(config, plan)
    K, N, T, Mr, M = config.K, config.N, config.T, config.Mr, config.M
    mac_bits = rng.integers(0, 2, size=(1, K, N * 2), dtype=np.uint8)
    fem_bits = rng.integers(0, 2, size=(1, K, M * 2), dtype=np.uint8)
    z_mac = complex_gaussian(rng, (1, K, T, N))
    z_fem = complex_gaussian(rng, (1, K, T, Mr))
    mac_err, fem_err, ok = _pipeline(
        config, scheme, channels.macro[None], channels.cross[None],
        channels.femto[None], mac_bits, fem_bits, z_mac, z_fem,
    )
    if not ok[0]:
        raise RankDeficient("effective channel numerically rank deficient")
    return SupersymbolResult(
        macro_bit_errors=mac_err[0],
        femto_bit_errors=fem_err[0],
        bits_per_macro_user=2 * N,
        bits_per_femtocell=2 * M,
    )


def _ber_block(config, scheme, seed, block, size):
    """Simulate one block of trials; returns per-user error counts and the
    number of resampled channel draws."""
    K, N, T, Mr, M = config.K, config.N, config.T, config.Mr, config.M
    rng_bits = substream(seed, _TAG_BITS, block)
    mac_bits = rng_bits.integers(0, 2, size=(size, K, N * 2), dtype=np.uint8)
    fem_bits = rng_bits.integers(0, 2, size=(size, K, M * 2), dtype=np.uint8)
    rng_noise = substream(seed, _TAG_NOISE, block)
    z_mac = complex_gaussian(rng_noise, (size, K, T, N))
    z_fem = complex_gaussian(rng_noise, (size, K, T, Mr))

    mac_err = np.zeros((size, K), dtype=np.int64)
    fem_err = np.zeros((size, K), dtype=np.int64)
    pending = np.arange(size)
    resamples = 0
    for attempt in range(_MAX_RESAMPLE_ATTEMPTS):
        rng_chan = substream(seed, _TAG_CHAN, block, attempt)
        macro_h, cross_h, femto_h = network._channel_arrays(
            config, rng_chan, (pending.size,)
        )
        me, fe, ok = _pipeline(
            config, scheme, macro_h, cross_h, femto_h,
            mac_bits[pending], fem_bits[pending],
            z_mac[pending], z_fem[pending],
        )
        good = pending[ok]
        mac_err[good] = me[ok]
        fem_err[good] = fe[ok]
        pending = pending[~ok]
        if pending.size == 0:
            break
        resamples += pending.size
    else:
        raise RankDeficient(
            f"{pending.size} trials still rank deficient after "
            f"{_MAX_RESAMPLE_ATTEMPTS} channel resamples"
        )
    return mac_err.sum(axis=0), fem_err.sum(axis=0), resamples


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep experiment: vary one constant, hold everything else."""

    config: "network.NetworkConfig"
    var: str
    values: tuple
    trials: int
    seed: int

    def __post_init__(self):
        if self.var not in SWEEPABLE:
            raise InvalidConfig(f"sweep variable must be one of {SWEEPABLE}")
        if len(self.values) == 0 or not all(np.isfinite(v) for v in self.values):
            raise InvalidConfig("sweep values must be finite and non-empty")
        if self.trials < 1:
            raise InvalidConfig("trials must be >= 1")

    def configs(self):
        return [self.config.replace(**{self.var: float(v)}) for v in self.values]


@dataclass(frozen=True)
class BerRecord:
    """BER of one sweep point, pooled and per user/cell."""

    sweep_value: float
    macro_ber: float
    femto_ber: float
    macro_ber_per_user: tuple
    femto_ber_per_cell: tuple
    macro_bits: int
    femto_bits: int
    resamples: int


def run_ber_sweep(spec, plan=None, workers=None):
    """One :class:`BerRecord` per sweep value.

    Channel, bit and noise substreams depend only on (seed, block), never
    on the sweep value, so points are directly comparable (matched seeds)
    and results do not depend on the worker count.
    """
    plan = plan or default_slot_plan(spec.config.K)
    n_blocks = -(-spec.trials // _BLOCK)
    records = []
    for value, cfg in zip(spec.values, spec.configs()):
        scheme = _Scheme(cfg, plan)

        def block(j, cfg=cfg, scheme=scheme):
            size = min(_BLOCK, spec.trials - j * _BLOCK)
            return _ber_block(cfg, scheme, spec.seed, j, size)

        parts = run_blocks(block, n_blocks, workers)
        mac_err = sum(p[0] for p in parts)
        fem_err = sum(p[1] for p in parts)
        resamples = sum(p[2] for p in parts)
        mac_bits_user = spec.trials * 2 * cfg.N
        fem_bits_cell = spec.trials * 2 * cfg.M
        records.append(
            BerRecord(
                sweep_value=float(value),
                macro_ber=float(mac_err.sum() / (mac_bits_user * cfg.K)),
                femto_ber=float(fem_err.sum() / (fem_bits_cell * cfg.K)),
                macro_ber_per_user=tuple(mac_err / mac_bits_user),
                femto_ber_per_cell=tuple(fem_err / fem_bits_cell),
                macro_bits=mac_bits_user * cfg.K,
                femto_bits=fem_bits_cell * cfg.K,
                resamples=resamples,
            )
        )
    return records


@dataclass(frozen=True)
class RateRecord:
    """Rate estimates of one sweep point (per macro user / per femtocell)."""

    sweep_value: float
    macro: "analysis.RateEstimate"
    femto: "analysis.RateEstimate"


def run_rate_sweep(spec, plan=None, workers=None):
    """Per sweep value: per-user macro rate and per-cell femto rate,
    pooled over the symmetric users with matched channel substreams."""
    plan = plan or default_slot_plan(spec.config.K)
    records = []
    for value, cfg in zip(spec.values, spec.configs()):
        macro_ests = [
            analysis.macro_rate(cfg, plan, k, spec.trials, spec.seed, workers)
            for k in range(1, cfg.K + 1)
        ]
        femto_ests = [
            analysis.femto_rate(cfg, k, spec.trials, spec.seed, workers)
            for k in range(1, cfg.K + 1)
        ]
        records.append(
            RateRecord(
                sweep_value=float(value),
                macro=_pool_estimates(macro_ests, spec.trials),
                femto=_pool_estimates(femto_ests, spec.trials),
            )
        )
    return records


def _pool_estimates(estimates, trials):
    means = [e.mean for e in estimates]
    std_err = math.sqrt(sum(e.std_err**2 for e in estimates)) / len(estimates)
    return analysis.RateEstimate(
        mean=float(np.mean(means)),
        std_err=std_err,
        trials=trials,
        per_user=tuple(means),
    )


@dataclass(frozen=True)
class CheckResult:
    value: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of the invariant checks over random channel draws."""

    checks: dict
    trials: int

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    @property
    def worst_leakage(self):
        return max(self.checks["intra_leakage"].value,
                   self.checks["inter_leakage"].value)


def verify_invariants(config, plan=None, trials=1000, seed=0, break_w=False):
    """Numerically verify the scheme's structural guarantees.

    Checks, over ``trials`` random channel draws: interference nulling
    (intra- and inter-cell leakage), projector row orthonormality, and the
    closed-form factorization of the projected channel. The two nominal
    transmit powers are checked against at least 10^4 random payloads
    (symbol draws are cheap and the 2% tolerance needs them). ``break_w``
    swaps in unorthogonalized w1 vectors as a negative control; leakage
    then lands at O(1).
    """
    plan = plan or default_slot_plan(config.K)
    scheme = _Scheme(config, plan)
    K, N, T, M = config.K, config.N, config.T, config.M
    w_broken = scheme.broken_w1() if break_w else None

    worst_intra = worst_inter = worst_orth = worst_fact = 0.0
    for t in range(trials):
        ch = network.sample_channels(config, _verify_seed(seed, t))
        for k in range(1, K + 1):
            override = (w_broken[k - 1], scheme.w2[k - 1]) if break_w else None
            intra, inter = receiver.interference_leakage(
                config, plan, ch, k, w_override=override
            )
            worst_intra = max(worst_intra, intra)
            worst_inter = max(worst_inter, inter)

            proj = receiver.build_projector(config, plan, ch, k)
            orth = np.max(np.abs(proj.P @ proj.P.conj().T - np.eye(N)))
            worst_orth = max(worst_orth, orth)
            try:
                receiver.macro_effective_channel(config, proj, ch, k)
            except Exception:
                worst_fact = np.inf
    # factorization error is re-measured explicitly for reporting
    ch = network.sample_channels(config, _verify_seed(seed, 0))
    for k in range(1, K + 1):
        proj = receiver.build_projector(config, plan, ch, k)
        eff = receiver.macro_effective_channel(config, proj, ch, k)
        v = direction_vector(config, plan, k)
        p3 = proj.P.reshape(N, T, N)
        direct = (config.a / math.sqrt(N)) * (
            np.einsum("nti,t->ni", p3, v) @ ch.macro[k - 1]
        )
        rel = np.linalg.norm(direct - eff.H_eff) / np.linalg.norm(eff.H_eff)
        worst_fact = max(worst_fact, rel)

    # symbol draws are cheap; floor the count so the 2% tolerance is
    # meaningful even when --trials is small
    power_mac, power_fem = _empirical_powers(
        config, plan, scheme, max(trials, 10_000), seed
    )
    nominal_mac = K * N * config.a**2
    nominal_fem = M**2 * config.b**2 / N

    checks = {
        "intra_leakage": CheckResult(worst_intra, receiver.LEAKAGE_TOL,
                                     worst_intra < receiver.LEAKAGE_TOL),
        "inter_leakage": CheckResult(worst_inter, receiver.LEAKAGE_TOL,
                                     worst_inter < receiver.LEAKAGE_TOL),
        "projector_orthonormality": CheckResult(worst_orth, 1e-12,
                                                worst_orth < 1e-12),
        "factorization": CheckResult(worst_fact, 1e-10, worst_fact < 1e-10),
        "power_macro": CheckResult(
            abs(power_mac - nominal_mac) / nominal_mac, 0.02,
            abs(power_mac - nominal_mac) / nominal_mac < 0.02),
        "power_femto": CheckResult(
            abs(power_fem - nominal_fem) / nominal_fem, 0.02,
            abs(power_fem - nominal_fem) / nominal_fem < 0.02),
    }
    return VerifyReport(checks=checks, trials=trials)


def _verify_seed(seed, trial):
    # keep verify's channel draws disjoint from experiment streams
    return (int(seed) << 20) + 7_000_000 + trial


def empirical_transmit_power(config, plan=None, draws=10000, seed=0):
    """Mean tr(X X^H) of the macro and femto supersymbol vectors over
    random QPSK payloads: (macro_power, femto_power)."""
    plan = plan or default_slot_plan(config.K)
    scheme = _Scheme(config, plan)
    return _empirical_powers(config, plan, scheme, draws, seed)


def _empirical_powers(config, plan, scheme, draws, seed):
    K, N, M = config.K, config.N, config.M
    rng = substream(seed, 9, 0)
    mac_bits = rng.integers(0, 2, size=(draws, K, N * 2), dtype=np.uint8)
    fem_bits = rng.integers(0, 2, size=(draws, K, M * 2), dtype=np.uint8)
    u_mac = math.sqrt(macro_stream_power(config)) * qpsk_mod(mac_bits)
    u_fem = math.sqrt(femto_stream_power(config)) * qpsk_mod(fem_bits)
    x_a = (config.a / math.sqrt(N)) * np.einsum("kt,bkn->btn", scheme.v, u_mac)
    x_f = (config.b / math.sqrt(N)) * np.einsum(
        "ktnm,bkm->bktn", scheme.s3, u_fem
    )
    p_mac = np.mean(np.sum(np.abs(x_a) ** 2, axis=(1, 2)))
    # femto power is per transmitter; average over cells and draws
    p_fem = np.mean(np.sum(np.abs(x_f) ** 2, axis=(2, 3)))
    return float(p_mac), float(p_fem)

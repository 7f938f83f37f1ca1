"""Transmit-side constructions: slot plans, precoders, supersymbol vectors.

The macro transmitter spreads each user's ``N`` streams over two time
slots (a slot shared by everyone plus one slot exclusive to that user)
with weights ``c`` and ``sqrt(1 - c^2)``. Each femto transmitter cycles
through antenna/message switching patterns, staying off its companion
macro user's exclusive slot except for one final message sent from the
last antenna. All precoders depend only on the configuration and the
slot plan, never on channel realisations (no transmitter CSI).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidConfig

# Per-stream symbol energy convention. With "matched", macro streams carry
# E|u|^2 = N and femto streams E|u|^2 = M, which makes the nominal
# transmit powers exactly K*N*a^2 (macro) and M^2*b^2/N (femto). Flip to
# "unit" for sensitivity studies with unit-energy symbols.
POWER_CONVENTION = "matched"


def macro_stream_power(config):
    """Symbol energy per macro stream under the active convention."""
    return float(config.N) if POWER_CONVENTION == "matched" else 1.0


def femto_stream_power(config):
    """Symbol energy per femto stream under the active convention."""
    return float(config.M) if POWER_CONVENTION == "matched" else 1.0


@dataclass(frozen=True)
class SlotPlan:
    """Assignment of the T = K + 1 supersymbol slots (1-based indices).

    ``common_slot`` is the slot in which the macro transmitter serves all
    K users at once; ``exclusive[k-1]`` is the slot in which only user k
    is served (and in which femtocell k causes it no interference).
    Together they are a permutation of 1..T.
    """

    common_slot: int
    exclusive: tuple

    def __post_init__(self):
        T = len(self.exclusive) + 1
        slots = {self.common_slot, *self.exclusive}
        if slots != set(range(1, T + 1)):
            raise InvalidConfig(
                f"slot plan must cover 1..{T} exactly once, got common="
                f"{self.common_slot}, exclusive={self.exclusive}"
            )

    @property
    def K(self):
        return len(self.exclusive)

    @property
    def T(self):
        return self.K + 1

    def exclusive_slot(self, k):
        """Exclusive slot of user k (both 1-based)."""
        return self.exclusive[k - 1]

    # 0-based helpers for array code
    @property
    def common_idx(self):
        return self.common_slot - 1

    def exclusive_idx(self, k):
        return self.exclusive[k - 1] - 1


def default_slot_plan(K):
    """Canonical slot plan: common slot 2, exclusive slots filling the
    rest.

    For K = 3 the exclusive slots are (3, 1, 4) so the constructed
    vectors reproduce the standard worked example; for other K they
    enumerate {1, 3, 4, ...} in increasing order. Any permutation is
    valid; pass one to :class:`SlotPlan` directly if needed.
    """
    if K < 2:
        raise InvalidConfig(f"K must be >= 2, got {K}")
    if K == 3:
        return SlotPlan(common_slot=2, exclusive=(3, 1, 4))
    slots = [1] + list(range(3, K + 2))
    return SlotPlan(common_slot=2, exclusive=tuple(slots[:K]))


def direction_vector(config, plan, k):
    """Length-T unit direction vector of macro user k: entry ``c`` on the
    common slot, ``sqrt(1 - c^2)`` on the user's exclusive slot."""
    v = np.zeros(config.T)
    v[plan.common_idx] = config.c
    v[plan.exclusive_idx(k)] = np.sqrt(1.0 - config.c**2)
    return v


@dataclass(frozen=True)
class MacroBeamformer:
    """Macro user k's precoder V = (a/sqrt(N)) * (v kron I_N)."""

    k: int
    v: np.ndarray          # (T,)  real direction vector
    V: np.ndarray          # (N*T, N)


def macro_beamformer(config, plan, k):
    v = direction_vector(config, plan, k)
    V = (config.a / np.sqrt(config.N)) * np.kron(v[:, None], np.eye(config.N))
    return MacroBeamformer(k=k, v=v, V=V.astype(complex))


@dataclass(frozen=True)
class SwitchPattern:
    """Femtocell k's antenna/message switching schedule.

    gammas[i] (rows of a (T, T) 0/1 array) indicate which slot pattern i
    occupies: patterns 1..T-1 take the non-exclusive slots in increasing
    order, pattern T takes the companion macro user's exclusive slot.
    r[i] selects the transmit antennas of pattern i (first M_r columns of
    I_N, except the last pattern which uses the last antenna only) and
    q[i] selects which block of the M messages it carries.
    """

    k: int
    gammas: np.ndarray     # (T, T)
    r: tuple               # T arrays: (N, M_r) x (T-1), then (N, 1)
    q: tuple               # T arrays: (M_r, M) x (T-1), then (1, M)

    def selector(self):
        """The combined 0/1 selector  sum_i gamma_i^T kron (r_i q_i),
        shape (N*T, M)."""
        parts = [
            np.kron(g[:, None], ri @ qi)
            for g, ri, qi in zip(self.gammas, self.r, self.q)
        ]
        return sum(parts)


@dataclass(frozen=True)
class FemtoBeamformer:
    """Femtocell k's precoder V = (b/sqrt(N)) * selector, (N*T, M)."""

    k: int
    pattern: SwitchPattern
    V: np.ndarray


def switch_pattern(config, plan, k):
    T, N, Mr, M = config.T, config.N, config.Mr, config.M
    excl = plan.exclusive_idx(k)
    eye_n = np.eye(N)
    eye_m = np.eye(M)

    gammas = np.zeros((T, T))
    active_slots = [t for t in range(T) if t != excl]
    for i, t in enumerate(active_slots):
        gammas[i, t] = 1.0
    gammas[T - 1, excl] = 1.0

    r = tuple(eye_n[:, :Mr] for _ in range(T - 1)) + (eye_n[:, N - 1 :],)
    q = tuple(eye_m[Mr * i : Mr * (i + 1), :] for i in range(T - 1)) + (
        eye_m[M - 1 :, :],
    )
    return SwitchPattern(k=k, gammas=gammas, r=r, q=q)


def femto_beamformer(config, plan, k):
    pattern = switch_pattern(config, plan, k)
    V = (config.b / np.sqrt(config.N)) * pattern.selector()
    return FemtoBeamformer(k=k, pattern=pattern, V=V.astype(complex))


@dataclass(frozen=True)
class SymbolBlock:
    """Data streams for one supersymbol.

    macro[k-1] holds macro user k's N stream symbols, femto[k-1] the M
    symbols of femtocell k. Symbols are expected to already carry the
    per-stream energies of the active power convention.
    """

    macro: np.ndarray      # (K, N) complex
    femto: np.ndarray      # (K, M) complex


def transmit_macro(beamformers, symbols):
    """Supersymbol vector X_A = sum_k V_k U_k sent by the macro
    transmitter, shape (N*T,)."""
    X = None
    for bf in beamformers:
        u = np.asarray(symbols.macro[bf.k - 1], dtype=complex)
        if u.shape != (bf.V.shape[1],):
            raise DimensionMismatch(
                f"user {bf.k}: expected {bf.V.shape[1]} stream symbols, got {u.shape}"
            )
        term = bf.V @ u
        X = term if X is None else X + term
    if X is None:
        raise DimensionMismatch("need at least one beamformer")
    return X


def transmit_femto(beamformer, symbols):
    """Supersymbol vector X_f = V_f U_f sent by femto transmitter k,
    shape (N*T,)."""
    u = np.asarray(symbols.femto[beamformer.k - 1], dtype=complex)
    if u.shape != (beamformer.V.shape[1],):
        raise DimensionMismatch(
            f"femtocell {beamformer.k}: expected {beamformer.V.shape[1]} "
            f"stream symbols, got {u.shape}"
        )
    return beamformer.V @ u

"""Network configuration and random channel generation.

One macrocell transmitter with ``N`` antennas serves ``K`` users (``N``
antennas each); ``K`` femtocell transmitters (``N`` antennas) each serve
one user with ``M_r = N - 1`` antennas. The scheme operates on a
supersymbol of ``T = K + 1`` time slots over which every channel is held
constant, so one flat-fading matrix per link fully describes a
supersymbol; :func:`lift` expands it to the block-diagonal supersymbol
operator when needed.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig

# Typical amplitude constants for a real deployment; used whenever a
# config does not specify a and b explicitly.
DEFAULT_A = math.sqrt(40.0)
DEFAULT_B = math.sqrt(5.0)
# Direction-vector constant that maximises the macro users' effective
# channel determinant for the K=3, N=2 network (see analysis.optimize_c).
DEFAULT_C = 0.5299


@dataclass(frozen=True)
class NetworkConfig:
    """Dimensions and constants of the heterogeneous network.

    Attributes
    ----------
    K : int
        Macrocell user count; also the femtocell count. K >= 2.
    N : int
        Antennas at the macro transmitter, at each macro user, and at each
        femto transmitter. N >= 2.
    a, b : float
        Macro / femto beamforming amplitudes (power constants).
    c : float
        Macro direction-vector parameter, strictly inside (0, 1).
    noise_var : float
        Receiver noise variance sigma_n^2 (linear power units).
    """

    K: int
    N: int
    a: float = DEFAULT_A
    b: float = DEFAULT_B
    c: float = DEFAULT_C
    noise_var: float = 1.0

    def __post_init__(self):
        if self.K < 2:
            raise InvalidConfig(f"K must be >= 2, got {self.K}")
        if self.N < 2:
            raise InvalidConfig(f"N must be >= 2, got {self.N}")
        if not (0.0 < self.c < 1.0):
            raise InvalidConfig(f"c must lie strictly in (0, 1), got {self.c}")
        if self.a <= 0 or self.b <= 0:
            raise InvalidConfig("amplitudes a and b must be positive")
        if self.noise_var < 0:
            raise InvalidConfig(f"noise_var must be >= 0, got {self.noise_var}")

    @property
    def T(self):
        """Supersymbol length in time slots."""
        return self.K + 1

    @property
    def Mr(self):
        """Receive antennas at each femtocell user."""
        return self.N - 1

    @property
    def M(self):
        """Messages per femtocell per supersymbol."""
        return (self.T - 1) * self.Mr + 1

    def replace(self, **changes):
        """Copy with some fields replaced (sweep helper)."""
        return dataclasses.replace(self, **changes)


def derive(config):
    """Derived supersymbol dimensions ``(T, M_r, M)`` of a config."""
    return config.T, config.Mr, config.M


@dataclass(frozen=True)
class ChannelSet:
    """One supersymbol's fading state.

    macro[k] : (N, N) channel from the macro transmitter to macro user k.
    cross[k] : (N, N) interference channel from femto transmitter k to
               macro user k.
    femto[k] : (M_r, N) channel from femto transmitter k to its user.

    Arrays are stacked over users: ``macro`` has shape (K, N, N) and so
    on. Entries are i.i.d. circularly-symmetric complex Gaussian with
    zero mean and unit variance. Instances are frozen and their arrays
    are marked read-only.
    """

    macro: np.ndarray
    cross: np.ndarray
    femto: np.ndarray

    def __post_init__(self):
        for arr in (self.macro, self.cross, self.femto):
            arr.flags.writeable = False


def substream(master_seed, *key):
    """Independent random generator derived from (master seed, key).

    Uses numpy's ``SeedSequence`` spawn-key mechanism, so distinct keys
    give statistically independent streams and the mapping is stable
    across platforms and process/thread layouts.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def complex_gaussian(rng, shape):
    """i.i.d. CN(0, 1) samples: unit total variance per entry."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def _channel_arrays(config, rng, size=()):
    """Draw (macro, cross, femto) arrays with leading dims ``size``."""
    size = tuple(size)
    K, N, Mr = config.K, config.N, config.Mr
    macro = complex_gaussian(rng, size + (K, N, N))
    cross = complex_gaussian(rng, size + (K, N, N))
    femto = complex_gaussian(rng, size + (K, Mr, N))
    return macro, cross, femto


def sample_channels(config, seed):
    """Draw one supersymbol's :class:`ChannelSet` from a deterministic
    stream seeded by ``seed`` (same seed, same channels, bit for bit)."""
    macro, cross, femto = _channel_arrays(config, substream(seed))
    return ChannelSet(macro=macro, cross=cross, femto=femto)


def lift(h, T):
    """Supersymbol channel ``I_T (x) h`` for a constant per-slot channel."""
    return np.kron(np.eye(T), np.asarray(h, dtype=complex))


def lift_apply(h, x):
    """Apply the lifted channel without forming it.

    ``h`` is ``(..., m, n)``, ``x`` is ``(..., T, n)`` (one row per slot);
    returns ``(..., T, m)``. Equivalent to multiplying by ``I_T (x) h``
    slot by slot.
    """
    return np.einsum("...ij,...tj->...ti", h, x)

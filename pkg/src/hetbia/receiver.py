"""Receiver-side processing for macro users, and effective channels.

Macro user k sees its own precoded streams, the other K-1 macro users'
streams, and femtocell k's transmission. Projecting the received
supersymbol onto the right N-dimensional subspace removes both
interference kinds *exactly*, with no transmitter channel knowledge:

* two unit row vectors w_1, w_2 (length T) are chosen orthogonal to every
  other user's direction vector -- w_2 is simply the indicator of user
  k's exclusive slot, w_1 lives on the remaining slots;
* an N x N matrix h_tilde is built from the cross channel so that its
  last row annihilates the femto transmitter's first M_r antenna columns
  and its first N-1 rows annihilate the last antenna column;
* P = w_1 kron (D_1 h_tilde) + w_2 kron (D_2 h_tilde), where D_1/D_2 are
  the complementary 0/1 diagonal selectors keeping the last row / the
  first N-1 rows.

P has orthonormal rows (P P^H = I_N), so projected noise stays white with
unchanged variance. Channel-argument functions accept stacked input with
arbitrary leading batch dimensions, numpy-gufunc style.
"""

from dataclasses import dataclass

import numpy as np

from . import matkernel
from .beamforming import SlotPlan, direction_vector, switch_pattern
from .errors import DegenerateGeometry, FactorizationMismatch, RankDeficient

#: Relative Frobenius threshold below which leakage counts as exact nulling.
LEAKAGE_TOL = 1e-10


def build_w(config, plan, k):
    """Projection row vectors (w1, w2) for macro user k, both (T,) float.

    w2 indicates the user's exclusive slot. w1 is the unique (up to sign)
    unit vector that is zero on that slot and orthogonal to every other
    user's direction vector; its sign is fixed so the first nonzero entry
    is positive.
    """
    T = config.T
    excl = plan.exclusive_idx(k)

    w2 = np.zeros(T)
    w2[excl] = 1.0

    constraints = np.zeros((config.K, T))
    row = 0
    for i in range(1, config.K + 1):
        if i == k:
            continue
        constraints[row] = direction_vector(config, plan, i)
        row += 1
    constraints[row, excl] = 1.0  # force the exclusive-slot coordinate to 0

    basis = matkernel.nullspace(constraints)
    if basis.shape[1] != 1:
        raise DegenerateGeometry(
            f"constrained null space for user {k} has dimension "
            f"{basis.shape[1]}, expected 1"
        )
    w1 = basis[:, 0]
    w1[excl] = 0.0  # exact support disjointness (solver leaves ~1e-17 dust)
    w1 = w1 / np.linalg.norm(w1)
    nz = np.flatnonzero(np.abs(w1) > 1e-12 * np.abs(w1).max())
    pivot = w1[nz[0]]
    w1 = w1 * (np.conj(pivot) / np.abs(pivot))
    return np.ascontiguousarray(w1.real), w2


def selector_diagonals(N):
    """(D1, D2): diagonal 0/1 selectors keeping the last row / the first
    N-1 rows respectively. D1 + D2 = I_N."""
    d1 = np.zeros((N, N))
    d1[N - 1, N - 1] = 1.0
    d2 = np.eye(N) - d1
    return d1, d2


def _null_rows(mat_t, tol):
    """Rows spanning {x : x @ cols = 0} for ``mat_t = cols^T``, batched.

    ``mat_t`` is (..., m, N) with expected full row rank m; returns
    (rows (..., N-m, N), ok (...)) where ok flags draws whose rank is as
    expected. Rows are Hermitian-orthonormal and phase-fixed (largest
    entry real positive), matching matkernel.nullspace's convention.
    """
    _, s, vh = np.linalg.svd(mat_t)
    m = mat_t.shape[-2]
    ok = (s[..., 0] > 0) & (s[..., m - 1] > tol * s[..., 0])
    rows = np.conj(vh[..., m:, :])
    cols = matkernel.phase_fix_columns(np.swapaxes(rows, -1, -2))
    return np.swapaxes(cols, -1, -2), ok


def h_tilde_with_mask(h_cross, Mr, tol=matkernel.DEFAULT_TOL):
    """Batched h_tilde; returns (h_tilde (..., N, N), ok (...)).

    ``ok`` is False where the cross channel is numerically rank deficient
    (callers resample those draws).
    """
    h = np.asarray(h_cross, dtype=complex)
    N = h.shape[-1]
    active_t = np.swapaxes(h[..., :, :Mr], -1, -2)   # (..., Mr, N)
    last_t = np.swapaxes(h[..., :, Mr:], -1, -2)     # (..., 1, N)
    top, ok_top = _null_rows(last_t, tol)
    bottom, ok_bot = _null_rows(active_t, tol)
    return np.concatenate([top, bottom], axis=-2), ok_top & ok_bot


def build_h_tilde(h_cross, pattern, tol=matkernel.DEFAULT_TOL):
    """The receiver-side matrix h_tilde for one cross channel.

    Row N is the unit vector orthogonal (plain bilinear product, matching
    how the projection acts on the channel) to the columns the femto
    switching pattern uses in its first T-1 patterns (h_cross r_i); rows
    1..N-1 are an orthonormal basis of the complement of the last-pattern
    column (h_cross r_T).

    Raises RankDeficient on a numerically degenerate cross channel.
    Accepts stacked channels (any leading dims).
    """
    Mr = pattern.r[0].shape[1]
    ht, ok = h_tilde_with_mask(h_cross, Mr, tol)
    if not np.all(ok):
        raise RankDeficient("cross channel columns are numerically dependent")
    return ht


def projection_matrix(w1, w2, h_tilde):
    """P = w1 kron (D1 h_tilde) + w2 kron (D2 h_tilde), (..., N, N*T).

    Rows are orthonormal by construction (the top rows of h_tilde are
    mutually orthonormal and the last row has unit norm).
    """
    ht = np.asarray(h_tilde, dtype=complex)
    N = ht.shape[-1]
    T = w1.shape[-1]
    d1h = np.zeros_like(ht)
    d1h[..., N - 1, :] = ht[..., N - 1, :]
    d2h = ht.copy()
    d2h[..., N - 1, :] = 0.0
    # kron of a (T,) row with an (..., N, N) block -> (..., N, T*N)
    p = w1[..., None, :, None] * d1h[..., :, None, :]
    p = p + w2[..., None, :, None] * d2h[..., :, None, :]
    return p.reshape(ht.shape[:-2] + (N, T * N))


@dataclass(frozen=True)
class Projector:
    """All constituents of macro user k's projection."""

    k: int
    plan: SlotPlan
    w1: np.ndarray
    w2: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    h_tilde: np.ndarray
    P: np.ndarray


def build_projector(config, plan, channels, k):
    """Assemble the :class:`Projector` for user k from one channel set."""
    w1, w2 = build_w(config, plan, k)
    pattern = switch_pattern(config, plan, k)
    ht = build_h_tilde(channels.cross[k - 1], pattern)
    d1, d2 = selector_diagonals(config.N)
    return Projector(
        k=k, plan=plan, w1=w1, w2=w2, D1=d1, D2=d2, h_tilde=ht,
        P=projection_matrix(w1, w2, ht),
    )


def script_d_from(N, w1v, w2v):
    """Diagonal factor with (w2.v) on the first N-1 entries, (w1.v) last."""
    d = np.full(N, w2v)
    d[N - 1] = w1v
    return np.diag(d)


def script_d(config, plan, k):
    """The diagonal factor of the projected macro channel for user k.
    Depends only on c and the plan, not on the channel."""
    w1, w2 = build_w(config, plan, k)
    v = direction_vector(config, plan, k)
    return script_d_from(config.N, float(w1 @ v), float(w2 @ v))


@dataclass(frozen=True)
class MacroEffectiveChannel:
    """Post-projection macro channel H_eff = (a/sqrt(N)) D kernel."""

    k: int
    H_eff: np.ndarray      # (..., N, N)
    D_script: np.ndarray   # (N, N) real diagonal
    kernel: np.ndarray     # (..., N, N) = h_tilde @ h_macro


@dataclass(frozen=True)
class FemtoEffectiveChannel:
    """End-to-end femto channel and its amplitude-normalized form."""

    k: int
    H_eff: np.ndarray         # (..., M_r*T, M)
    H_normalized: np.ndarray  # (sqrt(N)/b) * H_eff


def macro_effective_channel(config, projector, channels, k, check_tol=1e-10):
    """Effective channel of macro user k after projection.

    Computes the closed form (a/sqrt(N)) D (h_tilde h) and verifies it
    against the directly projected product P (I_T kron h) V_k; the two
    paths must agree to ``check_tol`` relative (raises
    FactorizationMismatch otherwise).
    """
    h = channels.macro[k - 1]
    v = direction_vector(config, projector.plan, k)
    kernel = projector.h_tilde @ h
    D = script_d_from(config.N, float(projector.w1 @ v), float(projector.w2 @ v))
    scale = config.a / np.sqrt(config.N)
    H_eff = scale * (D @ kernel)

    # direct path: P H V = (a/sqrt(N)) P (v kron h)
    N, T = config.N, config.T
    p3 = projector.P.reshape(projector.P.shape[:-1] + (T, N))
    projected = scale * (np.einsum("...nti,t->...ni", p3, v) @ h)
    err = np.linalg.norm(projected - H_eff)
    if err > check_tol * max(1.0, np.linalg.norm(H_eff)):
        raise FactorizationMismatch(
            f"projected channel and closed form differ by {err:.3e}"
        )
    return MacroEffectiveChannel(k=k, H_eff=H_eff, D_script=D, kernel=kernel)


def femto_effective_channel(config, channels, pattern, k):
    """End-to-end channel of femtocell k: (b/sqrt(N)) (I_T kron h_f) times
    the switching selector, shape (M_r*T, M). Full column rank with
    probability 1 over continuous channels."""
    h_f = channels.femto[k - 1]
    T, N, Mr, M = config.T, config.N, config.Mr, config.M
    s3 = pattern.selector().reshape(T, N, M)
    lifted = np.einsum("...ij,tjm->...tim", h_f, s3)
    H_norm = lifted.reshape(lifted.shape[:-3] + (Mr * T, M))
    scale = config.b / np.sqrt(config.N)
    return FemtoEffectiveChannel(k=k, H_eff=scale * H_norm, H_normalized=H_norm)


def interference_leakage(config, plan, channels, k, w_override=None):
    """Residual interference power at user k's projector output.

    Returns (intra, inter): the largest relative Frobenius norm of
    P H^[a_k] V^[a_i] over i != k, and of P H^[f_k a_k] V^[f_k]. Both are
    normalized by the product of the operand norms, so exact nulling shows
    up as values at double-precision rounding level (< LEAKAGE_TOL).

    ``w_override`` replaces (w1, w2) -- used by negative-control tests.
    """
    N, T, M = config.N, config.T, config.M
    if w_override is None:
        w1, w2 = build_w(config, plan, k)
    else:
        w1, w2 = w_override
    pattern = switch_pattern(config, plan, k)
    ht = build_h_tilde(channels.cross[k - 1], pattern)
    P = projection_matrix(w1, w2, ht)
    p3 = P.reshape(N, T, N)
    p_norm = np.linalg.norm(P)

    h = channels.macro[k - 1]
    h_lift_norm = np.sqrt(T) * np.linalg.norm(h)
    intra = 0.0
    for i in range(1, config.K + 1):
        if i == k:
            continue
        v_i = direction_vector(config, plan, i)
        leak = (config.a / np.sqrt(N)) * (np.einsum("nti,t->ni", p3, v_i) @ h)
        v_norm = config.a  # ||V^[a_i]||_F
        intra = max(intra, np.linalg.norm(leak) / (p_norm * h_lift_norm * v_norm))

    hc = channels.cross[k - 1]
    s3 = pattern.selector().reshape(T, N, M)
    lifted = np.einsum("ij,tjm->tim", hc, s3)           # (T, N, M)
    leak = (config.b / np.sqrt(N)) * np.einsum("nti,tim->nm", p3, lifted)
    vf_norm = config.b * np.sqrt(M / N)                  # ||V^[f_k]||_F
    hc_lift_norm = np.sqrt(T) * np.linalg.norm(hc)
    inter = np.linalg.norm(leak) / (p_norm * hc_lift_norm * vf_norm)
    return float(intra), float(inter)


def zf_detect(h_eff, y, constellation, stream_power=1.0):
    """Zero-forcing detection: least-squares solve then nearest
    constellation point per stream (after removing the per-stream power
    scaling). Returns integer point indices.

    Propagates RankDeficient from the solve on degenerate channels.
    """
    x = matkernel.pinv_solve(h_eff, y)
    s = x / np.sqrt(stream_power)
    points = np.asarray(constellation, dtype=complex)
    return np.argmin(np.abs(s[..., None] - points), axis=-1)

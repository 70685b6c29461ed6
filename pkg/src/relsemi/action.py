"""Path weight for the subordinated spin process.

A path bundle carries one realization of (subordinator grid, Brownian values
on the union time grid of [0, T_t], Poisson jump times, starting spin).  Its
weight in the semigroup representation is

    spin mode:      exp(T_t) * exp(S_V) * exp(S_A) * exp(S_diag) * prod_j z_j
    spinless mode:  exp(S_V) * exp(S_A)

with

    S_V     = - sum_j V(B at T_{s_j}) * ds          (left endpoints in s)
    S_A     = - i * sum_i a(midpoint_i) . dB_i      (Stratonovich, union grid)
    S_diag  = - sum_i U_d(B_i, theta_i) * dtau_i    (left endpoints in tau)
    z_j     = - chi_eps(U_od at jump j, pre-jump spin)

chi_eps(z) = z + eps * 1_{|z| < eps} keeps the flip factors away from zero;
at eps = 0 an exactly vanishing factor zeroes the whole weight (the path has
jumped onto the zero set of W, where the representation assigns no mass).
The off-diagonal product is accumulated as log-modulus plus phase so that
many-jump paths neither overflow nor lose the exact zero.
"""

from dataclasses import dataclass

import numpy as np

from .levy import JumpSet, SpinTrack, SubordinatorPath


@dataclass
class PathBundle:
    """One sampled path of the three processes on a common union grid.

    ``grid`` is the sorted union of the subordinator images T_{s_j}, the jump
    times, and any refinement points, spanning [0, T_t]; ``bm`` holds the
    Brownian values at exactly those times.  ``img_idx[j]`` locates T_{s_j}
    in the grid and ``jump_idx[k]`` the k-th jump time.
    """
    sub: SubordinatorPath
    grid: np.ndarray
    bm: np.ndarray
    jumps: JumpSet
    alpha: int
    img_idx: np.ndarray
    jump_idx: np.ndarray

    @property
    def spin_track(self):
        return SpinTrack(alpha=self.alpha, jumps=self.jumps)

    def spins_on_grid(self):
        """Right-continuous spin at every grid time."""
        flips = np.searchsorted(self.jumps.jump_times, self.grid, side="right")
        return np.where((self.alpha + flips) % 2, -1.0, 1.0)

    @property
    def end_point(self):
        return self.bm[-1]

    @property
    def end_spin(self):
        n = self.alpha + self.jumps.count
        return -1 if n % 2 else 1


@dataclass
class ActionParts:
    """Decomposed exponent of one path weight."""
    s_v: float
    s_a_phase: float          # S_A = -i * s_a_phase
    diag_spin: float
    offdiag_log: float        # log of |prod z_j|, -inf on an exact zero
    offdiag_phase: float
    zero_hit: bool


def chi_eps(z, eps):
    """z + eps for |z| < eps, else z.  Keeps flip factors off the origin."""
    z = np.asarray(z, dtype=complex)
    out = np.where(np.abs(z) < eps, z + eps, z)
    if out.ndim == 0:
        return complex(out)
    return out


def action_potential(bundle, V):
    """S_V = - sum_j V(B at T_{s_j}) ds over the uniform s-grid (left endpoints)."""
    ds = np.diff(bundle.sub.s_grid)
    pts = bundle.bm[bundle.img_idx[:-1]]
    return float(-np.sum(V(pts) * ds))


def action_vector(bundle, a):
    """Stratonovich phase: S_A = -i phi with

        phi = sum_i a((B_i + B_{i+1})/2) . (B_{i+1} - B_i)

    over the union grid.  Returns phi.
    """
    if a.is_zero:
        return 0.0
    db = np.diff(bundle.bm, axis=0)
    mid = 0.5 * (bundle.bm[:-1] + bundle.bm[1:])
    return float(np.sum(a(mid) * db))


def action_spin(bundle, coupling, eps=0.0):
    """Diagonal spin integral and off-diagonal jump product.

    diag = - sum_i U_d(B_i, theta_i) dtau_i   (left endpoints on the grid);
    each jump contributes z = -chi_eps(U_od(B_jump, pre-jump spin)), with the
    pre-jump (left-limit) spin.  At eps = 0 a factor of exactly 0 sets
    ``zero_hit`` and the product is identically zero.
    """
    dtau = np.diff(bundle.grid)
    theta = bundle.spins_on_grid()
    diag = float(-np.sum(coupling.u_d(bundle.bm[:-1], theta[:-1]) * dtau))

    k = bundle.jumps.count
    if k == 0:
        return diag, 0.0, 0.0, False
    jump_pts = bundle.bm[bundle.jump_idx]
    # the j-th jump (0-based) has seen j earlier flips: pre-jump spin is
    # (-1)^(alpha + j)
    pre_spin = np.where((bundle.alpha + np.arange(k)) % 2, -1.0, 1.0)
    z = -chi_eps(coupling.u_od(jump_pts, pre_spin), eps)
    mod = np.abs(z)
    zero_hit = bool(np.any(mod == 0.0))
    if zero_hit:
        return diag, -np.inf, 0.0, True
    log_mod = float(np.sum(np.log(mod)))
    phase = float(np.sum(np.angle(z)))
    return diag, log_mod, phase, False


def action_parts(bundle, fields, coupling, eps=0.0):
    diag, olog, ophase, zero_hit = action_spin(bundle, coupling, eps)
    return ActionParts(
        s_v=action_potential(bundle, fields.V),
        s_a_phase=action_vector(bundle, fields.a),
        diag_spin=diag,
        offdiag_log=olog,
        offdiag_phase=ophase,
        zero_hit=zero_hit,
    )


def fk_weight(bundle, fields, eps=0.0, spinless=False, coupling=None):
    """Total complex path weight.

    Spinless mode: exp(S_V + S_A), no spin terms and no exp(T_t) factor.
    Spin mode: exp(T_t + S_V + diag) * (jump product) * exp(-i phi); exactly 0
    on a zero hit.  The magnitude is assembled in log space.
    """
    s_v = action_potential(bundle, fields.V)
    phi = action_vector(bundle, fields.a)
    if spinless:
        return np.exp(s_v) * np.exp(-1j * phi)
    if coupling is None:
        from .fields import SpinCoupling
        coupling = SpinCoupling(fields.b)
    diag, olog, ophase, zero_hit = action_spin(bundle, coupling, eps)
    if zero_hit:
        return 0.0 + 0.0j
    log_mag = bundle.sub.final + s_v + diag + olog
    return np.exp(log_mag) * np.exp(1j * (ophase - phi))

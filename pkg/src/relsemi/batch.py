"""Vectorized sampling and weighting of path bundles, one chunk at a time.

A chunk of k samples is generated with numpy array operations throughout.
Ragged structures (per-sample union grids, jump lists) are padded: grids are
padded with repeats of the final time T_t, which contribute zero-length
increments and therefore change nothing, and jump lists are padded with
masked slots.  Random draws come from per-(seed, chunk, role) counter-based
streams, so the content of a chunk depends only on its index, never on the
worker that produced it.

Per-sample reference semantics live in ``action``; ``extract_bundle`` pulls a
single row out of a batch as a ``PathBundle`` so the two implementations can
be compared exactly.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .action import PathBundle
from .levy import JumpSet, SubordinatorPath, sample_subordinator_increment

# Fixed chunk width; the partial-sum layout (and hence the bit pattern of
# every estimate) depends on it, so it is a constant, not a tunable.
CHUNK = 2048

# Cap on padded grid cells per chunk, to fail loudly instead of exhausting
# memory when heavy-tailed horizons (m = 0) meet a fine Brownian step.
MAX_CELLS = 6_000_000


class EngineError(RuntimeError):
    """Numerical failure inside the Monte Carlo engine."""


@dataclass
class BundleBatch:
    """k path bundles in padded array form."""
    s_grid: np.ndarray        # (n+1,) physical-time grid, shared
    T: np.ndarray             # (k, n+1) subordinator values
    grid: np.ndarray          # (k, L) sorted union time grids, padded with T_t
    B: np.ndarray             # (k, L, 3) Brownian values on the grid
    img_idx: np.ndarray       # (k, n+1) grid position of each T_{s_j}
    jump_count: np.ndarray    # (k,)
    jump_idx: np.ndarray      # (k, Jmax) grid positions, first count valid
    jump_marker: np.ndarray   # (k, L) 1.0 at jump grid slots
    alpha: np.ndarray         # (k,)
    x0: np.ndarray            # (k, 3)

    @property
    def k(self):
        return self.T.shape[0]

    @property
    def t_final(self):
        return self.T[:, -1]

    def end_points(self):
        # padding repeats T_t, so the last column always holds B_{T_t}
        return self.B[:, -1, :]

    def end_spins(self):
        return np.where((self.alpha + self.jump_count) % 2, -1.0, 1.0)

    def spins_on_grid(self):
        flips = np.cumsum(self.jump_marker, axis=1)
        return np.where((self.alpha[:, None] + flips) % 2, -1.0, 1.0)


def sample_batch(seed, chunk, k, t, m, n_steps, bm_max_step, x0, alpha,
                 need_jumps=True, need_refine=True, identity_time=False):
    """Sample one chunk of path bundles.

    ``x0`` is (k, 3) start points and ``alpha`` (k,) start spin indices.
    ``need_jumps``/``need_refine`` skip generating structure whose
    contribution to the weight is identically zero for the configuration at
    hand (no spin coupling, or integrands constant between the retained grid
    points); the retained draws are unaffected because every role has its own
    stream.  ``identity_time`` replaces the subordinator by T_s = s.
    """
    n = int(n_steps)
    s_grid = np.linspace(0.0, t, n + 1)
    if identity_time:
        T = np.broadcast_to(s_grid, (k, n + 1)).copy()
    else:
        gen = rng.stream(seed, chunk, rng.SUBORDINATOR)
        incs = sample_subordinator_increment(t / n, m, gen, size=(k, n))
        T = np.concatenate([np.zeros((k, 1)), np.cumsum(incs, axis=1)], axis=1)
    horizon = T[:, -1]

    # Poisson jump times on (0, T_t], padded beyond each count with T_t.
    if need_jumps:
        counts = rng.stream(seed, chunk, rng.JUMP_COUNT).poisson(horizon)
        jmax = int(counts.max()) if k else 0
        if jmax > 0:
            u = rng.stream(seed, chunk, rng.JUMP_TIMES).uniform(size=(k, jmax))
            raw = horizon[:, None] * (1.0 - u)
            valid = np.arange(jmax)[None, :] < counts[:, None]
            raw = np.where(valid, raw, np.inf)
            raw = np.sort(raw, axis=1)
            jump_times = np.where(np.isfinite(raw), raw, horizon[:, None])
        else:
            jump_times = np.empty((k, 0))
    else:
        counts = np.zeros(k, dtype=np.int64)
        jmax = 0
        jump_times = np.empty((k, 0))

    # Uniform refinement of [0, T_t] with step <= bm_max_step, padded at T_t.
    if need_refine and bm_max_step is not None:
        n_ref = np.maximum(np.ceil(horizon / bm_max_step).astype(np.int64), 1)
        rmax = int(n_ref.max())
        frac = np.minimum(np.arange(rmax + 1)[None, :] / n_ref[:, None], 1.0)
        ref = horizon[:, None] * frac
    else:
        ref = np.empty((k, 0))

    # Union grid: jump slots first so that on (measure-zero) ties the stable
    # sort puts the flip before any equal-time grid point, keeping the spin
    # right-continuous.
    times = np.concatenate([jump_times, T, ref], axis=1)
    L = times.shape[1]
    if k * L > MAX_CELLS:
        raise EngineError(
            f"padded union grid too large ({k}x{L} cells); the subordinated "
            "horizon is too heavy-tailed for this Brownian step (m = 0?)")
    marker = np.zeros((k, L))
    marker[:, :jmax] = (np.arange(jmax)[None, :] < counts[:, None])

    perm = np.argsort(times, axis=1, kind="stable")
    grid = np.take_along_axis(times, perm, axis=1)
    jump_marker = np.take_along_axis(marker, perm, axis=1)
    inv = np.argsort(perm, axis=1, kind="stable")
    jump_idx = inv[:, :jmax]
    img_idx = inv[:, jmax:jmax + n + 1]

    gaps = np.diff(grid, axis=1)
    normals = rng.stream(seed, chunk, rng.BROWNIAN).standard_normal((k, L - 1, 3))
    steps = normals * np.sqrt(gaps)[:, :, None]
    B = np.empty((k, L, 3))
    B[:, 0, :] = x0
    B[:, 1:, :] = x0[:, None, :] + np.cumsum(steps, axis=1)

    return BundleBatch(s_grid=s_grid, T=T, grid=grid, B=B, img_idx=img_idx,
                       jump_count=counts.astype(np.int64), jump_idx=jump_idx,
                       jump_marker=jump_marker, alpha=np.asarray(alpha),
                       x0=np.asarray(x0))


def batch_weights(batch, fields, coupling=None, eps=0.0, spinless=False,
                  extra_tt_weight=0.0):
    """Path weights for a whole batch.

    Returns (weights complex (k,), invalid bool (k,), zero_hit bool (k,)).
    Matches ``action.fk_weight`` row by row; magnitudes are assembled in log
    space and non-finite results are flagged invalid rather than propagated.
    """
    k = batch.k
    ds = np.diff(batch.s_grid)

    if fields.V.is_zero:
        s_v = np.zeros(k)
    else:
        img = np.take_along_axis(
            batch.B, batch.img_idx[:, :, None], axis=1)
        s_v = -np.sum(fields.V(img[:, :-1, :]) * ds[None, :], axis=1)

    if fields.a.is_zero:
        phi = np.zeros(k)
    else:
        db = np.diff(batch.B, axis=1)
        mid = 0.5 * (batch.B[:, :-1, :] + batch.B[:, 1:, :])
        phi = np.sum(fields.a(mid) * db, axis=(1, 2))

    if spinless:
        w = np.exp(s_v + extra_tt_weight * batch.t_final) * np.exp(-1j * phi)
        return w, ~np.isfinite(w), np.zeros(k, dtype=bool)

    if coupling is None:
        from .fields import SpinCoupling
        coupling = SpinCoupling(fields.b)

    if fields.b.is_zero:
        diag = np.zeros(k)
    else:
        dtau = np.diff(batch.grid, axis=1)
        theta = batch.spins_on_grid()
        diag = -np.sum(coupling.u_d(batch.B[:, :-1, :], theta[:, :-1]) * dtau,
                       axis=1)

    jmax = batch.jump_idx.shape[1]
    if jmax > 0:
        jpts = np.take_along_axis(batch.B, batch.jump_idx[:, :, None], axis=1)
        pre_spin = np.where(
            (batch.alpha[:, None] + np.arange(jmax)[None, :]) % 2, -1.0, 1.0)
        uo = coupling.u_od(jpts, pre_spin)
        if eps > 0:
            uo = np.where(np.abs(uo) < eps, uo + eps, uo)
        z = -uo
        mod = np.abs(z)
        valid = np.arange(jmax)[None, :] < batch.jump_count[:, None]
        zero_hit = np.any(valid & (mod == 0.0), axis=1)
        with np.errstate(divide="ignore"):
            log_terms = np.where(valid & (mod > 0), np.log(np.where(mod > 0, mod, 1.0)), 0.0)
        olog = np.sum(log_terms, axis=1)
        ophase = np.sum(np.where(valid, np.angle(z), 0.0), axis=1)
    else:
        zero_hit = np.zeros(k, dtype=bool)
        olog = np.zeros(k)
        ophase = np.zeros(k)

    log_mag = (1.0 + extra_tt_weight) * batch.t_final + s_v + diag + olog
    with np.errstate(over="ignore"):
        w = np.exp(log_mag) * np.exp(1j * (ophase - phi))
    w = np.where(zero_hit, 0.0 + 0.0j, w)
    invalid = ~np.isfinite(w.real) | ~np.isfinite(w.imag)
    return np.where(invalid, 0.0 + 0.0j, w), invalid, zero_hit


def extract_bundle(batch, i, m=np.nan):
    """Row i of a batch as a per-sample ``PathBundle`` (padding retained;
    padded grid slots are zero-length repeats of T_t and change nothing)."""
    jc = int(batch.jump_count[i])
    # jump slots enter the batch already sorted by time
    jump_pos = batch.jump_idx[i, :jc]
    jump_times = batch.grid[i, jump_pos] if jc else np.empty(0)
    sub = SubordinatorPath(t_final=float(batch.s_grid[-1]),
                           s_grid=batch.s_grid.copy(),
                           values=batch.T[i].copy(), mass=m)
    return PathBundle(
        sub=sub,
        grid=batch.grid[i].copy(),
        bm=batch.B[i].copy(),
        jumps=JumpSet(horizon=float(batch.T[i, -1]), jump_times=jump_times),
        alpha=int(batch.alpha[i]),
        img_idx=batch.img_idx[i].copy(),
        jump_idx=jump_pos.copy(),
    )

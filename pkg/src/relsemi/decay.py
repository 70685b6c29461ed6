"""Bound-state fall-off toolkit: martingale scans, stopped bounds, tail fits.

Given a lattice bound state (E, phi) of the relativistic operator plus
potential, the process

    Y_t = exp(tE) exp(T_t) exp(S) phi(q_t)

has constant expectation phi(x, (-1)^alpha) in the starting point; the same
holds in the non-relativistic variant with the time change replaced by the
deterministic clock.  Scanning E[Y_t] over t checks that constancy, a
stopped version yields the upper bound used to prove exponential decay, and
least-squares fits of shell maxima against radius quantify the decay rate
itself.
"""

import csv
import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import rng
from .engine import Estimate, apply_semigroup, derive_seed
from .fields import SpinCoupling
from .levy import sample_subordinator_increment


@dataclass
class DecayFit:
    a_hat: float          # fitted decay rate (1/length)
    b_hat: float          # prefactor
    window: tuple         # radial interval used
    r_squared: float
    n_shells: int


@dataclass
class RateBounds:
    m_star: float
    E: float
    m: float
    m_epsilon: float
    condition_n34: bool | None   # None when m^2 <= 2 m_star (not evaluable)


@dataclass
class MartingaleScan:
    x: np.ndarray
    alpha: int
    t_list: tuple
    estimates: list
    reference: complex


def rate_bounds(E, m, m_star):
    """Decay-rate constant for decaying potentials and the smallness condition.

    m_epsilon = m when 2|E| > m, else 2 sqrt(m|E| - |E|^2); both branches
    agree at 2|E| = m.  The condition m - sqrt(m^2 - 2 m_star) < -2E needs
    m^2 > 2 m_star to be evaluable.
    """
    if E >= 0:
        raise ValueError("the rate formula applies to E < 0")
    if m < 0 or m_star < 0:
        raise ValueError("m and m_star must be >= 0")
    aE = abs(E)
    m_eps = m if 2.0 * aE > m else 2.0 * math.sqrt(m * aE - aE * aE)
    if m * m > 2.0 * m_star:
        cond = (m - math.sqrt(m * m - 2.0 * m_star)) < -2.0 * E
    else:
        cond = None
    return RateBounds(m_star=m_star, E=E, m=m, m_epsilon=m_eps,
                      condition_n34=cond)


def radial_profile(state, exclude_boundary=True):
    """Shell-max |phi| against shell radius.

    Sites are grouped by their (minimum-image) distance from the origin; the
    shell value is the max of |phi| over the shell and both spin sectors.
    ``exclude_boundary`` drops sites with any coordinate within 2 dx of the
    periodic wrap midplane at +-L/2, where image tails contaminate the state.
    Returns (radii, values) sorted by radius.
    """
    lat = state.lattice
    coords = lat.site_coords()
    r = np.linalg.norm(coords, axis=1)
    mags = np.max(np.abs(state.phi_grid().reshape(state.phi_grid().shape[0], -1)),
                  axis=0)
    if exclude_boundary:
        cap = lat.L / 2.0 - 2.0 * lat.spacing
        keep = np.max(np.abs(coords), axis=1) <= cap + 1e-12
        r, mags = r[keep], mags[keep]
    key = np.round(r, 9)
    order = np.argsort(key)
    radii, starts = np.unique(key[order], return_index=True)
    vals = np.maximum.reduceat(mags[order], starts)
    return radii, vals


def fit_decay(state, window):
    """Least-squares fit of log(shell max |phi|) = log b - a r on the window.

    Sites with a coordinate within 2 dx of the periodic wrap midplane are
    excluded before shelling; at least 8 shells are required.
    """
    lo, hi = window
    radii, vals = radial_profile(state)
    keep = (radii >= lo) & (radii <= hi) & (vals > 1e-280)
    radii, vals = radii[keep], vals[keep]
    if len(radii) < 8:
        raise ValueError(
            f"window {window} leaves {len(radii)} shells (< 8) after the "
            "boundary exclusion")
    y = np.log(vals)
    A = np.stack([radii, np.ones_like(radii)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = coef
    resid = y - A @ coef
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(a_hat=float(-slope), b_hat=float(np.exp(intercept)),
                    window=(float(lo), float(hi)),
                    r_squared=r2, n_shells=len(radii))


def martingale_scan(spec, state, x, alpha, t_list, relativistic=True):
    """Estimate E[Y_t] for each t and compare with phi(x, (-1)^alpha).

    Y_t = exp(tE) exp(T_t) exp(S) phi(q_t) in the relativistic case; the
    non-relativistic variant runs the same weight with the identity time
    change (T_s = s), whose spin-mode normalization exp(t) combines with
    exp(tE) into the factor exp(t(E+1)).  The state's eigenvalue and
    eigenvector must come from the matching lattice operator.  t = 0 returns
    the reference exactly, without sampling.
    """
    x = np.asarray(x, dtype=float)
    theta0 = 1 if alpha % 2 == 0 else -1
    ref = complex(state.value_at(x[None, :], np.array([theta0]))[0])
    g = _StateFunction(state)
    time_change = "subordinated" if relativistic else "identity"
    estimates = []
    for j, t in enumerate(t_list):
        if t == 0.0:
            estimates.append(Estimate(mean=ref, stderr=0.0, n=0))
            continue
        sub = dc_replace(spec, t=float(t), time_change=time_change,
                         seed=derive_seed(spec.seed, f"mart-{j}"))
        est = apply_semigroup(x, alpha, g, sub)
        scale = math.exp(t * state.E)
        estimates.append(Estimate(mean=scale * est.mean,
                                  stderr=scale * est.stderr, n=est.n,
                                  invalid_count=est.invalid_count,
                                  zero_hit_fraction=est.zero_hit_fraction,
                                  note=est.note))
    return MartingaleScan(x=x, alpha=alpha, t_list=tuple(t_list),
                          estimates=estimates, reference=ref)


class _StateFunction:
    """Test-function adapter around an interpolated bound state: the spin
    argument selects the sector at interpolation time, which the plain
    spatial-times-weights TestFunction cannot express."""

    name = "phi_g"

    def __init__(self, state):
        self.state = state

    def __call__(self, x, theta=None):
        if not self.state.spin:
            return self.state.value_at(x)
        if theta is None:
            theta = np.ones(np.asarray(x).shape[0])
        return self.state.value_at(x, theta)


def stopped_bound(spec, state, x, alpha, t, radius, variant="exit",
                  budget=0.0):
    """Monte Carlo check of the stopped upper bound

        |phi(x, (-1)^alpha)|  <=  E[ exp((t ^ tau) E)
                                     exp(-int_0^{t^tau} V(B_{T_r} + x) dr)
                                     exp(m_star T_{t^tau} / 2) ] * sup|phi|,

    with tau the first s-grid point where |B_{T_s}| > radius (variant
    "exit") or |B_{T_s} + x| <= radius (variant "entry"); paths start at the
    origin.  Returns (estimate of the expectation, holds, lhs, rhs) where
    holds allows 3 stderr plus the stated budget.
    """
    if variant not in ("exit", "entry"):
        raise ValueError(f"unknown variant {variant!r}")
    x = np.asarray(x, dtype=float)
    theta0 = 1 if alpha % 2 == 0 else -1
    m_star = SpinCoupling(spec.fields.b).m_star() if not spec.fields.b.is_zero else 0.0
    n = spec.discretization.n_subordinator_steps
    s_grid = np.linspace(0.0, t, n + 1)
    ds = t / n
    V = spec.fields.V
    E = state.E
    seed = derive_seed(spec.seed, f"stop-{variant}-{radius}-{t}")

    def chunk_eval(c, k):
        incs = sample_subordinator_increment(
            t / n, spec.m, rng.stream(seed, c, rng.SUBORDINATOR), size=(k, n))
        T = np.concatenate([np.zeros((k, 1)), np.cumsum(incs, axis=1)], axis=1)
        dT = np.diff(T, axis=1)
        z = rng.stream(seed, c, rng.BROWNIAN).standard_normal((k, n, 3))
        steps = z * np.sqrt(dT)[:, :, None]
        B = np.concatenate([np.zeros((k, 1, 3)), np.cumsum(steps, axis=1)],
                           axis=1)
        if variant == "exit":
            crossed = np.linalg.norm(B, axis=2) > radius
        else:
            crossed = np.linalg.norm(B + x, axis=2) <= radius
        # first grid index where the condition holds, else the final index n
        any_cross = crossed.any(axis=1)
        first = np.where(any_cross, np.argmax(crossed, axis=1), n)
        stopped_t = s_grid[first]
        vvals = V(B + x)                      # (k, n+1)
        cum = np.concatenate([np.zeros((k, 1)),
                              np.cumsum(vvals[:, :-1] * ds, axis=1)], axis=1)
        v_int = np.take_along_axis(cum, first[:, None], axis=1)[:, 0]
        T_stop = np.take_along_axis(T, first[:, None], axis=1)[:, 0]
        vals = np.exp(stopped_t * E - v_int + 0.5 * m_star * T_stop)
        vals = vals.astype(complex)
        invalid = ~np.isfinite(vals.real)
        zeros = np.zeros(k, dtype=bool)
        return np.where(invalid, 0, vals), invalid, zeros

    from .engine import _finish, _run_chunks
    est = _finish(*_run_chunks(spec.n_samples, spec.workers, chunk_eval))
    lhs = abs(complex(state.value_at(x[None, :], np.array([theta0]))[0]))
    rhs = est.mean.real * state.sup_norm()
    holds = lhs <= rhs + 3.0 * est.stderr * state.sup_norm() + budget
    return est, bool(holds), lhs, rhs


def export_profile(state, path):
    """CSV of (radius, shell max |phi|)."""
    radii, vals = radial_profile(state)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "shell_max_abs_phi"])
        for r, v in zip(radii, vals):
            w.writerow([f"{r:.17g}", f"{v:.17g}"])


def export_scan(scan, path):
    """CSV of a martingale scan."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_re", "mean_im", "stderr", "n",
                    "reference_re", "reference_im"])
        for t, est in zip(scan.t_list, scan.estimates):
            w.writerow([f"{t:.17g}", f"{est.mean.real:.17g}",
                        f"{est.mean.imag:.17g}", f"{est.stderr:.17g}",
                        est.n, f"{scan.reference.real:.17g}",
                        f"{scan.reference.imag:.17g}"])

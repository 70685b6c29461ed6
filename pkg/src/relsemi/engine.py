"""Monte Carlo estimators for semigroup quantities.

Estimates are unbiased sample means of path weights times test-function
evaluations.  Samples are organized into fixed-width chunks; each chunk's
partial sums are computed from counter-keyed random streams and merged in
chunk order, so an estimate is a pure function of (seed, n_samples,
discretization) regardless of how many workers ran the chunks.

In spin mode the weight carries the factor exp(T_t), which has finite
moments only while the coupling strength stays below m^2/2; estimates
outside that regime are still produced but labelled as carrying no
finite-variance guarantee.
"""

import cmath
import hashlib
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .batch import CHUNK, EngineError, batch_weights, sample_batch
from .fields import FieldConfig, SpinCoupling, comparison_field, free_fields
from .levy import sample_subordinator_increment

MAX_INVALID_FRACTION = 1e-3


def derive_seed(seed, label):
    """Deterministic sub-seed for a named internal run."""
    h = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


# ---------------------------------------------------------------------------
# configuration and results

@dataclass(frozen=True)
class Discretization:
    n_subordinator_steps: int = 32
    bm_max_step: float = 0.05

    def __post_init__(self):
        if self.n_subordinator_steps < 1:
            raise ValueError("n_subordinator_steps must be >= 1")
        if self.bm_max_step is not None and self.bm_max_step <= 0:
            raise ValueError("bm_max_step must be > 0")


@dataclass(frozen=True)
class ExperimentSpec:
    t: float
    fields: FieldConfig = field(default_factory=free_fields)
    m: float = 1.0
    mode: str = "spin"                # "spin" | "spinless"
    epsilon: float = 0.0
    n_samples: int = 100_000
    seed: int = 0
    discretization: Discretization = field(default_factory=Discretization)
    workers: int = 1
    extra_tt_weight: float = 0.0      # multiplies the weight by exp(c * T_t)
    time_change: str = "subordinated"  # "subordinated" | "identity"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.mode not in ("spin", "spinless"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.time_change not in ("subordinated", "identity"):
            raise ValueError(f"unknown time_change {self.time_change!r}")
        if self.t < 0 or self.m < 0 or self.epsilon < 0:
            raise ValueError("t, m and epsilon must be >= 0")


@dataclass
class Estimate:
    mean: complex
    stderr: float
    n: int
    invalid_count: int = 0
    zero_hit_fraction: float = 0.0
    note: str = ""

    @property
    def real(self):
        return self.mean.real


# ---------------------------------------------------------------------------
# chunked deterministic runner

def _run_chunks(n_samples, workers, chunk_eval):
    """Accumulate (sum, sum|.|^2, valid, invalid, zero) over fixed chunks.

    ``chunk_eval(chunk_index, k)`` returns (values, invalid, zero_hit) for the
    k samples of that chunk.  Partials are merged in chunk order.
    """
    n_chunks = (n_samples + CHUNK - 1) // CHUNK

    def one(c):
        k = min(CHUNK, n_samples - c * CHUNK)
        values, invalid, zero = chunk_eval(c, k)
        good = ~invalid
        v = np.where(good, values, 0.0 + 0.0j)
        return (complex(np.sum(v)), float(np.sum(np.abs(v) ** 2)),
                int(np.sum(good)), int(np.sum(invalid)), int(np.sum(zero)))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(one, range(n_chunks)))
    else:
        partials = [one(c) for c in range(n_chunks)]

    s1 = 0.0 + 0.0j
    s2 = 0.0
    n_valid = n_invalid = n_zero = 0
    for p1, p2, nv, ni, nz in partials:   # fixed order: bit-reproducible
        s1 += p1
        s2 += p2
        n_valid += nv
        n_invalid += ni
        n_zero += nz
    return s1, s2, n_valid, n_invalid, n_zero


def _finish(s1, s2, n_valid, n_invalid, n_zero, note=""):
    total = n_valid + n_invalid
    if n_invalid > MAX_INVALID_FRACTION * total:
        raise EngineError(
            f"invalid-sample fraction {n_invalid / total:.2e} exceeds "
            f"{MAX_INVALID_FRACTION:.0e}")
    if n_valid == 0:
        raise EngineError("no valid samples")
    mean = s1 / n_valid
    if n_valid > 1:
        var = max(s2 - abs(s1) ** 2 / n_valid, 0.0) / (n_valid - 1)
        stderr = math.sqrt(var / n_valid)
    else:
        stderr = math.inf
    return Estimate(mean=mean, stderr=stderr, n=n_valid,
                    invalid_count=n_invalid,
                    zero_hit_fraction=n_zero / total, note=note)


def _spin_note(spec, coupling):
    if spec.mode != "spin" or coupling is None:
        return ""
    ms = coupling.m_star()
    if ms >= 0.5 * spec.m ** 2:
        msg = (f"no finite-variance guarantee: m_star={ms:.3g} >= "
               f"m^2/2={0.5 * spec.m ** 2:.3g}")
        warnings.warn(msg)
        return msg
    return ""


def _structure_flags(spec):
    f = spec.fields
    spin = spec.mode == "spin"
    need_jumps = spin
    # the Stratonovich sum needs the fine grid; the diagonal spin integral
    # needs it only when b varies between the retained grid points
    need_refine = (not f.a.is_zero) or (spin and not (f.b.is_zero or f.b.is_constant))
    return need_jumps, need_refine


def _bundle_chunk(spec, seed, x0_of, alpha_of):
    """Build a chunk_eval that samples bundles and returns (batch, weights)."""
    coupling = SpinCoupling(spec.fields.b) if spec.mode == "spin" else None
    need_jumps, need_refine = _structure_flags(spec)

    def make(c, k):
        x0 = x0_of(c, k)
        alpha = alpha_of(c, k)
        batch = sample_batch(
            seed, c, k, spec.t, spec.m,
            spec.discretization.n_subordinator_steps,
            spec.discretization.bm_max_step, x0, alpha,
            need_jumps=need_jumps, need_refine=need_refine,
            identity_time=(spec.time_change == "identity"))
        w, invalid, zero = batch_weights(
            batch, spec.fields, coupling=coupling, eps=spec.epsilon,
            spinless=(spec.mode == "spinless"),
            extra_tt_weight=spec.extra_tt_weight)
        return batch, w, invalid, zero

    return make, coupling


# ---------------------------------------------------------------------------
# test functions and initial measures

@dataclass(frozen=True)
class TestFunction:
    """Spatial profile times per-spin weights (w_plus, w_minus).

    Called with only points it returns the spatial part (spinless usage);
    with a spin array it multiplies by the matching weight.
    """
    name: str
    spatial: callable
    spin_weights: tuple = (1.0, 1.0)

    def __call__(self, x, theta=None):
        s = self.spatial(np.asarray(x, dtype=float))
        if theta is None:
            return s
        w = np.where(np.asarray(theta) > 0, self.spin_weights[0],
                     self.spin_weights[1])
        return s * w

    def absolute(self):
        return TestFunction(f"|{self.name}|",
                            lambda x: np.abs(self.spatial(x)),
                            (abs(self.spin_weights[0]), abs(self.spin_weights[1])))


def gaussian_g(center=(0.0, 0.0, 0.0), sigma=1.0, spin_weights=(1.0, 1.0)):
    c = np.asarray(center, dtype=float)
    return TestFunction(
        f"gaussian(c={tuple(c)},s={sigma})",
        lambda x: np.exp(-np.sum((x - c) ** 2, axis=-1) / (2.0 * sigma ** 2)),
        spin_weights)


def box_g(center=(0.0, 0.0, 0.0), halfwidth=1.0, spin_weights=(1.0, 1.0)):
    c = np.asarray(center, dtype=float)
    return TestFunction(
        f"box(c={tuple(c)},h={halfwidth})",
        lambda x: np.all(np.abs(x - c) < halfwidth, axis=-1).astype(float),
        spin_weights)


def spin_sector_g(sector=+1):
    w = (1.0, 0.0) if sector > 0 else (0.0, 1.0)
    return TestFunction(f"spin_sector({sector:+d})",
                        lambda x: np.ones(x.shape[:-1]), w)


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian initial vector f with its own importance sampler.

    f(x, theta) = exp(-|x - center|^2 / (2 sigma^2)) * w_theta; starts are
    drawn from the same Gaussian (density rho) and spins with probability
    proportional to |w|; each sample carries conj(f(q_0)) / density.
    """
    center: tuple = (0.0, 0.0, 0.0)
    sigma: float = 1.0
    spin_weights: tuple = (1.0, 1.0)

    @property
    def function(self):
        return gaussian_g(self.center, self.sigma, self.spin_weights)

    def spin_probs(self):
        w = np.abs(np.asarray(self.spin_weights, dtype=float))
        if w.sum() == 0:
            raise ValueError("initial measure has zero spin weights")
        return w / w.sum()

    def sample(self, seed, chunk, k, spinless):
        c = np.asarray(self.center, dtype=float)
        x = c + self.sigma * rng.stream(seed, chunk, rng.START_POINT) \
            .standard_normal((k, 3))
        rho_x = ((2.0 * np.pi * self.sigma ** 2) ** -1.5
                 * np.exp(-np.sum((x - c) ** 2, axis=-1) / (2.0 * self.sigma ** 2)))
        g = self.function
        if spinless:
            alpha = np.zeros(k, dtype=np.int64)
            base = np.conjugate(g(x)) / rho_x
            return x, alpha, base
        p = self.spin_probs()
        u = rng.stream(seed, chunk, rng.START_SPIN).uniform(size=k)
        alpha = (u >= p[0]).astype(np.int64)      # alpha=0 -> theta=+1
        theta = np.where(alpha % 2, -1.0, 1.0)
        base = np.conjugate(g(x, theta)) / (rho_x * p[alpha])
        return x, alpha, base


# ---------------------------------------------------------------------------
# estimators

def apply_semigroup(x, alpha, g, spec):
    """Pointwise semigroup action at (x, (-1)^alpha):

    spin mode      E[ exp(T_t) g(q_t) exp(S) ],
    spinless mode  E[ g(B_{T_t}) exp(S_V + S_A) ],

    for paths started at x with starting spin index alpha.
    """
    x = np.asarray(x, dtype=float)
    spinless = spec.mode == "spinless"
    make, coupling = _bundle_chunk(
        spec, spec.seed,
        lambda c, k: np.broadcast_to(x, (k, 3)).copy(),
        lambda c, k: np.full(k, alpha, dtype=np.int64))

    def chunk_eval(c, k):
        batch, w, invalid, zero = make(c, k)
        if spinless:
            vals = w * g(batch.end_points())
        else:
            vals = w * g(batch.end_points(), batch.end_spins())
        return vals, invalid, zero

    note = _spin_note(spec, coupling)
    return _finish(*_run_chunks(spec.n_samples, spec.workers, chunk_eval),
                   note=note)


def matrix_element(f, g, spec):
    """Sesquilinear form (f, exp(-t(H+V)) g) by importance sampling the start.

    ``f`` is an initial measure (function + sampler + density); the
    conjugation of f is applied to the sampled start.
    """
    spinless = spec.mode == "spinless"
    base_cache = {}

    def x0_of(c, k):
        x, alpha, base = f.sample(spec.seed, c, k, spinless)
        base_cache[c] = (alpha, base)
        return x

    make, coupling = _bundle_chunk(spec, spec.seed, x0_of,
                                   lambda c, k: base_cache[c][0])

    def chunk_eval(c, k):
        batch, w, invalid, zero = make(c, k)
        _, base = base_cache.pop(c)
        if spinless:
            vals = base * w * g(batch.end_points())
        else:
            vals = base * w * g(batch.end_points(), batch.end_spins())
        return vals, invalid, zero

    note = _spin_note(spec, coupling)
    return _finish(*_run_chunks(spec.n_samples, spec.workers, chunk_eval),
                   note=note)


def characteristic_exact(t, m, xi, z):
    """Closed-form characteristic function of (B_{T_t}, theta_{T_t}) from
    (0, +1):

        exp(-t(sqrt(|xi|^2 + m^2) - m)) cos z
        + i exp(-t(sqrt(|xi|^2 + 4 + m^2) - m)) sin z.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    xi2 = float(np.sum(np.asarray(xi, dtype=float) ** 2))
    re = math.exp(-t * (math.sqrt(xi2 + m * m) - m)) * math.cos(z)
    im = math.exp(-t * (math.sqrt(xi2 + 4.0 + m * m) - m)) * math.sin(z)
    return complex(re, im)


def characteristic_mc(t, m, xi, z, spec):
    """Monte Carlo mean of exp(i xi . B_{T_t}) exp(i z theta_{T_t}).

    Uses the exact marginal triple (T_t one subordinator increment, B_{T_t}
    Gaussian given T_t, theta_{T_t} from a Poisson count on [0, T_t]); starts
    at the origin with spin +1.
    """
    xi = np.asarray(xi, dtype=float)

    def chunk_eval(c, k):
        T = sample_subordinator_increment(
            t, m, rng.stream(spec.seed, c, rng.SUBORDINATOR), size=k)
        B = np.sqrt(T)[:, None] * rng.stream(spec.seed, c, rng.BROWNIAN) \
            .standard_normal((k, 3))
        n = rng.stream(spec.seed, c, rng.JUMP_COUNT).poisson(T)
        theta = np.where(n % 2, -1.0, 1.0)
        vals = np.exp(1j * (B @ xi)) * np.exp(1j * z * theta)
        zeros = np.zeros(k, dtype=bool)
        return vals, zeros, zeros

    return _finish(*_run_chunks(spec.n_samples, spec.workers, chunk_eval))


def exp_moment(q_times_mstar, t, m, spec):
    """Monte Carlo mean of exp(q m_star T_t) and its closed form.

    For q m_star < m^2/2 the closed form is exp(t(m - sqrt(m^2 - 2 q m_star)));
    at or beyond m^2/2 the moment diverges, so only the MC value is returned,
    with a warning note.  Returns (estimate, closed_form_or_None).
    """
    qm = float(q_times_mstar)

    def chunk_eval(c, k):
        T = sample_subordinator_increment(
            t, m, rng.stream(spec.seed, c, rng.SUBORDINATOR), size=k)
        vals = np.exp(qm * T).astype(complex)
        invalid = ~np.isfinite(vals.real)
        zeros = np.zeros(k, dtype=bool)
        return np.where(invalid, 0, vals), invalid, zeros

    if qm < 0.5 * m * m:
        closed = math.exp(t * (m - math.sqrt(m * m - 2.0 * qm)))
        note = ""
        if 2.0 * qm >= 0.5 * m * m:
            note = ("second moment diverges (2 q m_star >= m^2/2): stderr "
                    "is a heavy-tail underestimate")
    else:
        closed = None
        note = (f"q*m_star={qm:.3g} >= m^2/2={0.5 * m * m:.3g}: "
                "closed-form moment diverges; MC value only")
    est = _finish(*_run_chunks(spec.n_samples, spec.workers, chunk_eval),
                  note=note)
    return est, closed


def ground_state_energy(spec, x0, g, t1, t2):
    """Bottom-of-spectrum estimate from long-time semigroup decay:

        E = -log(u(t2) / u(t1)) / (t2 - t1),

    u(t) the pointwise semigroup estimate at (x0, spin +1).  Returns
    (energy, propagated standard error).
    """
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    e1 = apply_semigroup(x0, 0, g, replace(
        spec, t=t1, seed=derive_seed(spec.seed, "gse-t1")))
    e2 = apply_semigroup(x0, 0, g, replace(
        spec, t=t2, seed=derive_seed(spec.seed, "gse-t2")))
    for e, tag in ((e1, "t1"), (e2, "t2")):
        if e.mean.real <= 0:
            raise EngineError(f"semigroup estimate at {tag} is not positive")
        if e.stderr / abs(e.mean.real) > 0.05:
            raise EngineError(
                f"semigroup estimate at {tag} is noise-dominated "
                f"(rel err {e.stderr / abs(e.mean.real):.2%})")
    dt = t2 - t1
    energy = -math.log(e2.mean.real / e1.mean.real) / dt
    sigma = math.hypot(e1.stderr / e1.mean.real, e2.stderr / e2.mean.real) / dt
    return energy, sigma


def diamagnetic_check(spec, f, g):
    """Two-sided estimate of the kernel comparison:

        |(f, exp(-t(H+V)) g)|  vs  (|f|, exp(-t(H_{b0}+V)) |g|),

    the right side with a = 0 and b0 = (sqrt(b1^2+b2^2), 0, b3).  ``f`` must
    be an initial measure with nonnegative weights and ``g`` a nonnegative
    test function.  Returns (lhs, rhs, holds) where holds allows a 3-sigma
    combined buffer.
    """
    lhs = matrix_element(f, g, spec)
    rhs_fields = comparison_field(spec.fields)
    rhs_spec = replace(spec, fields=rhs_fields,
                       seed=derive_seed(spec.seed, "dia-rhs"))
    f_abs = replace(f, spin_weights=tuple(abs(w) for w in f.spin_weights))
    rhs = matrix_element(f_abs, g.absolute(), rhs_spec)
    buffer = 3.0 * math.hypot(lhs.stderr, rhs.stderr)
    holds = abs(lhs.mean) <= rhs.mean.real + buffer
    return lhs, rhs, holds

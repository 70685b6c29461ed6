"""Estimator-level tests: oracles by quadrature, identities, determinism."""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from relsemi.batch import EngineError
from relsemi.engine import (Discretization, ExperimentSpec, GaussianMeasure,
                            apply_semigroup, characteristic_exact,
                            characteristic_mc, diamagnetic_check,
                            exp_moment, gaussian_g, ground_state_energy,
                            matrix_element, spin_sector_g, _finish,
                            _run_chunks)
from relsemi.fields import (FieldConfig, ScalarField, constant_b, free_fields,
                            gaussian_bump_b, harmonic_v, linear_gauge)
from relsemi.levy import relativistic_kernel_radial


def free_spec(**kw):
    base = dict(t=1.0, m=1.0, mode="spinless", n_samples=50_000, seed=101,
                discretization=Discretization(32, 0.05))
    base.update(kw)
    return ExperimentSpec(**base)


def fourier_gaussian_value(t, m, sigma=1.0):
    """(g, exp(-t H_0) g) for g = exp(-|x|^2 / (2 sigma^2)) by Plancherel:
    (2 pi)^{-3} |g_hat|^2 against the subordination symbol, reduced to a
    radial quadrature."""
    # g_hat(xi) = (2 pi sigma^2)^{3/2} exp(-sigma^2 |xi|^2 / 2)
    pref = (2 * math.pi * sigma ** 2) ** 3 / (2 * math.pi) ** 3
    val, _ = quad(lambda r: pref * 4 * math.pi * r * r
                  * math.exp(-sigma ** 2 * r * r)
                  * math.exp(-t * (math.sqrt(r * r + m * m) - m)),
                  0, 60, limit=200)
    return val


# ---------------------------------------------------------------------------
# characteristic function

def test_characteristic_trivial_point():
    assert characteristic_exact(3.0, 1.0, (0, 0, 0), 0.0) == 1.0


def test_characteristic_closed_form_values():
    # (t=1, xi=0, z=pi/2, m=0) -> i e^{-2}
    v = characteristic_exact(1.0, 0.0, (0, 0, 0), math.pi / 2)
    assert v.imag == pytest.approx(math.exp(-2.0), rel=1e-12)
    assert abs(v.real) < 1e-15
    # (t=1, |xi|=1, z=0, m=0) -> e^{-1}
    assert characteristic_exact(1.0, 0.0, (1, 0, 0), 0.0).real == \
        pytest.approx(math.exp(-1.0), rel=1e-12)


def test_characteristic_mc_constant_case():
    spec = free_spec(n_samples=4096)
    est = characteristic_mc(1.0, 1.0, (0, 0, 0), 0.0, spec)
    assert est.mean == 1.0 + 0.0j
    assert est.stderr == 0.0


def test_characteristic_mc_matches_exact():
    spec = free_spec(n_samples=100_000, seed=7)
    est = characteristic_mc(1.0, 1.0, (1, 0, 0), 1.0, spec)
    exact = characteristic_exact(1.0, 1.0, (1, 0, 0), 1.0)
    assert abs(est.mean - exact) <= 3 * est.stderr


# ---------------------------------------------------------------------------
# pointwise semigroup

def test_semigroup_free_matches_kernel_quadrature():
    g = gaussian_g(sigma=1.0)
    spec = free_spec(n_samples=100_000, seed=13)
    est = apply_semigroup(np.zeros(3), 0, g, spec)
    target, _ = quad(lambda r: 4 * math.pi * r * r
                     * relativistic_kernel_radial(1.0, 1.0, r)
                     * math.exp(-r * r / 2), 0, 40, limit=200)
    assert abs(est.mean.real - target) <= 3 * est.stderr
    assert abs(est.mean.imag) <= 3 * est.stderr


def test_semigroup_identity_limit():
    g = gaussian_g(sigma=1.0)
    x = np.array([0.4, 0.1, -0.2])
    spec = free_spec(t=1e-9, n_samples=20_000,
                     discretization=Discretization(4, 0.05))
    est = apply_semigroup(x, 0, g, spec)
    assert abs(est.mean.real - g(x)) < 1e-6 + 3 * est.stderr
    assert est.stderr < 1e-6


def test_semigroup_spin_decoupling():
    b3, m = 0.5, 2.0
    fields = FieldConfig(b=constant_b((0, 0, b3)))
    spec_spin = ExperimentSpec(t=1.0, fields=fields, m=m, mode="spin",
                               n_samples=100_000, seed=17)
    e_spin = apply_semigroup(np.zeros(3), 0,
                             gaussian_g(spin_weights=(1.0, 0.0)), spec_spin)
    spec_sl = ExperimentSpec(t=1.0, m=m, mode="spinless", n_samples=100_000,
                             seed=18, extra_tt_weight=0.5 * b3)
    e_sl = apply_semigroup(np.zeros(3), 0, gaussian_g(), spec_sl)
    dev = abs(e_spin.mean.real - e_sl.mean.real)
    assert dev <= 3 * math.hypot(e_spin.stderr, e_sl.stderr)


def test_zero_field_spin_reduces_to_spinless():
    # with all fields zero the only surviving spin-mode paths are jump-free,
    # and exp(T_t) cancels their Poisson probability exactly
    g = gaussian_g()
    spin = ExperimentSpec(t=1.0, m=1.0, mode="spin", n_samples=150_000,
                          seed=19)
    sl = free_spec(n_samples=150_000, seed=20)
    e1 = apply_semigroup(np.zeros(3), 0, g, spin)
    e2 = apply_semigroup(np.zeros(3), 0, g, sl)
    assert e1.zero_hit_fraction > 0.2   # jumps are being produced and killed
    assert abs(e1.mean.real - e2.mean.real) <= 3 * math.hypot(e1.stderr,
                                                              e2.stderr)


# ---------------------------------------------------------------------------
# matrix elements

def test_matrix_element_identity_limit():
    f = GaussianMeasure(sigma=1.0)
    g = gaussian_g(sigma=1.0)
    spec = free_spec(t=1e-9, n_samples=400_000,
                     discretization=Discretization(4, 0.05))
    est = matrix_element(f, g, spec)
    target = math.pi ** 1.5    # int exp(-|x|^2) dx
    assert abs(est.mean.real - target) <= 1e-4 + 3 * est.stderr


def test_matrix_element_free_fourier_oracle():
    f = GaussianMeasure(sigma=1.0)
    g = gaussian_g(sigma=1.0)
    spec = free_spec(n_samples=200_000, seed=23)
    est = matrix_element(f, g, spec)
    target = fourier_gaussian_value(1.0, 1.0)
    assert abs(est.mean.real - target) <= 3 * est.stderr


def test_matrix_element_semigroup_composition():
    # kernel composition: the value at t1 + t2 equals the Fourier product,
    # i.e. the symbol at t1 + t2
    f = GaussianMeasure(sigma=1.0)
    g = gaussian_g(sigma=1.0)
    t1, t2 = 0.4, 0.8
    spec = free_spec(t=t1 + t2, n_samples=200_000, seed=29)
    est = matrix_element(f, g, spec)
    target = fourier_gaussian_value(t1 + t2, 1.0)
    assert abs(est.mean.real - target) <= 3 * est.stderr


def test_matrix_element_hermitian_symmetry():
    fields = FieldConfig(a=linear_gauge((0, 0, 1.0)),
                         b=constant_b((0.3, 0.2, 0.4)), V=harmonic_v(1.0))
    f = GaussianMeasure(center=(0.5, 0, 0), sigma=0.8,
                        spin_weights=(1.0, 0.5))
    gm = GaussianMeasure(center=(-0.3, 0.2, 0), sigma=1.1,
                         spin_weights=(0.7, 1.0))
    g_fn = gaussian_g(center=(-0.3, 0.2, 0), sigma=1.1,
                      spin_weights=(0.7, 1.0))
    f_fn = gaussian_g(center=(0.5, 0, 0), sigma=0.8, spin_weights=(1.0, 0.5))
    spec = ExperimentSpec(t=0.8, fields=fields, m=2.0, mode="spin",
                          n_samples=150_000, seed=31)
    fg = matrix_element(f, g_fn, spec)
    gf = matrix_element(gm, f_fn, replace(spec, seed=32))
    dev = abs(fg.mean - np.conjugate(gf.mean))
    assert dev <= 3 * math.hypot(fg.stderr, gf.stderr)


# ---------------------------------------------------------------------------
# exponential moment and ground-state energy

def test_exp_moment_trivial():
    est, closed = exp_moment(0.0, 1.0, 1.0, free_spec(n_samples=4096))
    assert est.mean == 1.0 + 0.0j and closed == 1.0


def test_exp_moment_closed_forms():
    assert exp_moment(1.5, 1.0, 2.0, free_spec(n_samples=1))[1] == \
        pytest.approx(math.e, rel=1e-12)
    assert exp_moment(0.375, 2.0, 1.0, free_spec(n_samples=1))[1] == \
        pytest.approx(math.e, rel=1e-12)


def test_exp_moment_divergence_refusal():
    est, closed = exp_moment(2.1, 1.0, 2.0, free_spec(n_samples=4096))
    assert closed is None
    assert "diverges" in est.note


def test_ground_state_energy_free_is_zero():
    g = gaussian_g(sigma=6.0)
    spec = free_spec(n_samples=150_000, seed=37)
    E, sig = ground_state_energy(spec, np.zeros(3), g, 1.0, 2.0)
    # inf spec H_0 = 0; small positive bias from the finite test function
    assert abs(E) <= 0.05 + 3 * sig


def test_ground_state_energy_rejects_noise():
    g = gaussian_g(sigma=1.0)
    spec = free_spec(n_samples=64)
    with pytest.raises(EngineError):
        ground_state_energy(spec, np.zeros(3), g, 1.0, 2.0)


# ---------------------------------------------------------------------------
# diamagnetic comparison

def test_diamagnetic_trivial_equality():
    # a = 0, b = 0: both sides are the same estimator up to the stream
    f = GaussianMeasure(sigma=1.0)
    g = gaussian_g(sigma=1.0)
    spec = ExperimentSpec(t=1.0, m=2.0, mode="spin", n_samples=60_000,
                          seed=41)
    lhs, rhs, holds = diamagnetic_check(spec, f, g)
    assert holds
    assert abs(abs(lhs.mean) - rhs.mean.real) <= 3 * math.hypot(lhs.stderr,
                                                                rhs.stderr)


def test_diamagnetic_constant_field():
    fields = FieldConfig(a=linear_gauge((0.3, 0.4, 0.5)),
                         b=constant_b((0.3, 0.4, 0.5)), V=harmonic_v(1.0))
    f = GaussianMeasure(sigma=1.0)
    g = gaussian_g(sigma=1.0)
    spec = ExperimentSpec(t=1.0, fields=fields, m=2.0, mode="spin",
                          n_samples=60_000, seed=43)
    lhs, rhs, holds = diamagnetic_check(spec, f, g)
    assert holds


# ---------------------------------------------------------------------------
# engine mechanics

def test_determinism_across_workers():
    g = gaussian_g()
    spec = free_spec(n_samples=30_000, seed=47)
    ests = [apply_semigroup(np.zeros(3), 0, g, replace(spec, workers=w))
            for w in (1, 4, 8)]
    assert ests[0].mean == ests[1].mean == ests[2].mean
    assert ests[0].stderr == ests[1].stderr == ests[2].stderr


def test_unbiasedness_under_sample_doubling():
    g = gaussian_g()
    half = apply_semigroup(np.zeros(3), 0, g, free_spec(n_samples=50_000,
                                                        seed=53))
    full = apply_semigroup(np.zeros(3), 0, g, free_spec(n_samples=100_000,
                                                        seed=53))
    assert abs(half.mean.real - full.mean.real) <= \
        3 * math.hypot(half.stderr, full.stderr)


def test_discretization_refinement_within_noise():
    g = gaussian_g()
    coarse = free_spec(n_samples=200_000, seed=59,
                       discretization=Discretization(32, 0.05))
    fine = free_spec(n_samples=200_000, seed=59,
                     discretization=Discretization(64, 0.025))
    e1 = apply_semigroup(np.zeros(3), 0, g, coarse)
    e2 = apply_semigroup(np.zeros(3), 0, g, fine)
    assert abs(e1.mean.real - e2.mean.real) <= \
        3 * math.hypot(e1.stderr, e2.stderr)


def test_invalid_samples_counted_and_capped():
    # direct check of the runner: a few flagged samples are excluded and
    # counted, too many raise
    def eval_few(c, k):
        vals = np.ones(k, dtype=complex)
        invalid = np.zeros(k, dtype=bool)
        if c == 0:
            invalid[:2] = True
        return vals, invalid, np.zeros(k, dtype=bool)

    est = _finish(*_run_chunks(10_000, 1, eval_few))
    assert est.invalid_count == 2
    assert est.n == 9_998

    def eval_many(c, k):
        vals = np.ones(k, dtype=complex)
        invalid = np.zeros(k, dtype=bool)
        invalid[: k // 2] = True
        return vals, invalid, np.zeros(k, dtype=bool)

    with pytest.raises(EngineError):
        _finish(*_run_chunks(10_000, 1, eval_many))


def test_nan_potential_raises_engine_error():
    bad_v = ScalarField("nan", lambda x: np.full(x.shape[:-1], np.nan))
    spec = free_spec(fields=FieldConfig(V=bad_v), n_samples=4096)
    with pytest.raises(EngineError):
        apply_semigroup(np.zeros(3), 0, gaussian_g(), spec)


def test_spin_variance_guarantee_warning():
    fields = FieldConfig(b=constant_b((0, 0, 3.0)))   # m_star = 3 >= m^2/2
    spec = ExperimentSpec(t=0.5, fields=fields, m=1.0, mode="spin",
                          n_samples=4096, seed=61)
    with pytest.warns(UserWarning, match="finite-variance"):
        est = apply_semigroup(np.zeros(3), 0, gaussian_g(), spec)
    assert "finite-variance" in est.note


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(t=1.0, mode="bogus")
    with pytest.raises(ValueError):
        ExperimentSpec(t=-1.0)
    with pytest.raises(ValueError):
        Discretization(0, 0.05)

"""Lattice oracle: dispersion, spectral mapping, gauge and energy comparisons."""

import math
import os

import numpy as np
import pytest

from relsemi.fields import (FieldConfig, constant_b, free_fields,
                            gaussian_bump_b, harmonic_v, linear_gauge)
from relsemi.lattice import (BoundState, Lattice, OperatorMatrix, OracleError,
                             add_potential, build_h, export_spectrum,
                             export_state, ground_state, hamiltonian,
                             semigroup_matrix, sqrt_shift)


def free_dispersion(n, L, spin=True):
    dx = L / n
    ks = 2.0 * math.pi * np.arange(n) / n
    one = (2.0 - 2.0 * np.cos(ks)) / (2.0 * dx * dx)
    disp = (one[:, None, None] + one[None, :, None]
            + one[None, None, :]).ravel()
    if spin:
        disp = np.concatenate([disp, disp])
    return np.sort(disp)


def test_free_h_matches_dispersion():
    lat = Lattice(n=6, L=6.0)
    h = build_h(free_fields(), lat, spin=True)
    evs = np.sort(h.eigenvalues())
    assert np.max(np.abs(evs - free_dispersion(6, 6.0))) < 1e-8
    assert h.hermiticity_defect() < 1e-10
    # lowest eigenvalue 0 with constant eigenvector
    gs = ground_state(h)
    assert gs.E == pytest.approx(0.0, abs=1e-10)
    mags = np.abs(gs.phi)
    nonzero = mags[mags > 1e-8]
    assert np.allclose(nonzero, nonzero[0], rtol=1e-8)


def test_constant_b3_splits_sectors():
    lat = Lattice(n=4, L=4.0)
    b3 = 0.8
    h = build_h(FieldConfig(b=constant_b((0, 0, b3))), lat, spin=True)
    evs = np.sort(h.eigenvalues())
    free = free_dispersion(4, 4.0, spin=False)
    expected = np.sort(np.concatenate([free - 0.5 * b3, free + 0.5 * b3]))
    assert np.max(np.abs(evs - expected)) < 1e-10


def test_hermiticity_with_fields():
    lat = Lattice(n=5, L=5.0)
    fields = FieldConfig(a=linear_gauge((0.2, 0.3, 0.4)),
                         b=gaussian_bump_b(1.0, 1.0, 2.0),
                         V=harmonic_v(1.0))
    h = build_h(fields, lat, spin=True)
    assert h.hermiticity_defect() < 1e-10
    hv = add_potential(h, fields.V)
    assert hv.hermiticity_defect() < 1e-10


def test_gauge_invariance_of_spectrum():
    lat = Lattice(n=6, L=6.0)
    fields = FieldConfig(a=linear_gauge((0, 0, 0.7)),
                         b=constant_b((0.4, 0.1, 0.3)))

    def chi(pts):
        return 0.9 * np.sin(2 * np.pi * pts[:, 0] / lat.L) \
            - 0.4 * np.cos(2 * np.pi * pts[:, 2] / lat.L)

    e0 = np.sort(build_h(fields, lat, spin=True).eigenvalues())
    e1 = np.sort(build_h(fields, lat, spin=True, gauge=chi).eigenvalues())
    assert np.max(np.abs(e0 - e1)) < 1e-8


def test_sqrt_shift_zero_operator():
    lat = Lattice(n=3, L=3.0)
    zero = OperatorMatrix(np.zeros((8, 8), dtype=complex), "h", lat, False)
    H = sqrt_shift(zero, 2.0)
    assert np.max(np.abs(H.mat)) < 1e-12


def test_sqrt_shift_spectral_mapping():
    lat = Lattice(n=5, L=5.0)
    h = build_h(free_fields(), lat, spin=False)
    for m in (0.0, 1.0):
        H = sqrt_shift(h, m)
        got = np.sort(H.eigenvalues())
        want = np.sqrt(2 * free_dispersion(5, 5.0, spin=False) + m * m) - m
        assert np.max(np.abs(got - want)) < 1e-8


def test_sqrt_shift_rejects_small_mass():
    lat = Lattice(n=3, L=3.0)
    h = build_h(FieldConfig(b=constant_b((0, 0, 50.0))), lat, spin=True)
    with pytest.raises(OracleError, match="negative eigenvalue"):
        sqrt_shift(h, 0.0)


def test_semigroup_matrix_properties():
    lat = Lattice(n=4, L=4.0)
    fields = FieldConfig(V=harmonic_v(1.0))
    op = hamiltonian(fields, lat, m=1.0, spin=False)
    ident = semigroup_matrix(op, 0.0)
    assert np.max(np.abs(ident.mat - np.eye(op.dim))) < 1e-10
    s1 = semigroup_matrix(op, 0.6)
    s2 = semigroup_matrix(op, 0.9)
    s3 = semigroup_matrix(op, 1.5)
    assert np.max(np.abs(s1.mat @ s2.mat - s3.mat)) < 1e-8
    # trace monotone nonincreasing for a nonnegative operator
    traces = [np.trace(semigroup_matrix(op, t).mat).real
              for t in (0.0, 0.5, 1.0, 2.0)]
    assert all(a >= b - 1e-10 for a, b in zip(traces, traces[1:]))


def test_energy_comparison_spin():
    lat = Lattice(n=6, L=6.0)
    fields = FieldConfig(a=linear_gauge((0, 0, 0.6)),
                         b=constant_b((0.3, 0.4, 0.5)), V=harmonic_v(1.0))
    from relsemi.fields import comparison_field
    e_full = ground_state(hamiltonian(fields, lat, m=2.0, spin=True)).E
    e_cmp = ground_state(hamiltonian(comparison_field(fields), lat, m=2.0,
                                     spin=True)).E
    assert e_cmp <= e_full + 1e-8


def test_energy_comparison_spinless():
    lat = Lattice(n=6, L=6.0)
    with_a = FieldConfig(a=linear_gauge((0, 0, 1.0)), V=harmonic_v(1.0))
    no_a = FieldConfig(V=harmonic_v(1.0))
    e_a = ground_state(hamiltonian(with_a, lat, m=1.0, spin=False)).E
    e_0 = ground_state(hamiltonian(no_a, lat, m=1.0, spin=False)).E
    assert e_0 <= e_a + 1e-8


def test_continuum_consistency_rate():
    # free low eigenvalues approach |2 pi k / L|^2 / 2 at rate O(dx^2)
    L = 6.0
    target = 0.5 * (2 * math.pi / L) ** 2
    errs = []
    for n in (6, 12):
        h = build_h(free_fields(), Lattice(n=n, L=L), spin=False)
        evs = np.sort(h.eigenvalues())
        errs.append(abs(evs[1] - target))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_ground_state_normalization_and_interpolation():
    lat = Lattice(n=8, L=8.0)
    fields = FieldConfig(V=harmonic_v(1.0))
    gs = ground_state(hamiltonian(fields, lat, m=1.0, spin=False))
    # physical normalization
    total = np.sum(np.abs(gs.phi) ** 2) * lat.spacing ** 3
    assert total == pytest.approx(1.0, rel=1e-10)
    # interpolation reproduces the lattice values at the sites
    pts = lat.site_coords()[:50]
    direct = gs.phi[:50]
    interp = gs.value_at(pts)
    assert np.allclose(interp, direct, rtol=1e-12)
    # periodic wrap: a point past the edge equals its image
    edge = np.array([[lat.L / 2, 0.0, 0.0]])
    image = np.array([[-lat.L / 2, 0.0, 0.0]])
    assert gs.value_at(edge)[0] == pytest.approx(gs.value_at(image)[0],
                                                 rel=1e-12)


def test_spin_ground_state_sector():
    lat = Lattice(n=5, L=5.0)
    fields = FieldConfig(b=constant_b((0, 0, 0.8)), V=harmonic_v(1.0))
    gs = ground_state(hamiltonian(fields, lat, m=2.0, spin=True))
    grid = gs.phi_grid()
    # ground state lives in the theta = +1 sector for b3 > 0
    assert np.max(np.abs(grid[0])) > 1e3 * np.max(np.abs(grid[1]))
    # interpolation respects the sector argument
    x = np.array([[0.4, 0.2, 0.0]])
    up = gs.value_at(x, np.array([1.0]))[0]
    down = gs.value_at(x, np.array([-1.0]))[0]
    assert abs(up) > 1e3 * abs(down)


def test_csv_exports(tmp_path):
    lat = Lattice(n=4, L=4.0)
    op = hamiltonian(FieldConfig(V=harmonic_v(1.0)), lat, m=1.0, spin=False)
    gs = ground_state(op)
    spath = tmp_path / "spectrum.csv"
    export_spectrum(op, spath)
    lines = spath.read_text().strip().splitlines()
    assert lines[0] == "index,eigenvalue"
    assert len(lines) == op.dim + 1
    gpath = tmp_path / "state.csv"
    export_state(gs, gpath)
    glines = gpath.read_text().strip().splitlines()
    assert len(glines) == lat.n_sites + 1

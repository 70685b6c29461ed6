"""Dense lattice oracle: desk-scale ground truth for the continuum operators.

The kinetic operator is discretized on a small periodic cubic lattice with
unitary link phases exp(-i a_mu(midpoint) dx) (midpoint rule per link), which
keeps gauge covariance exact at the lattice level.  The spin interaction adds
the diagonal coupling -theta b_3/2 and the off-diagonal coupling
-(b_1 - i theta b_2)/2 between the two spin sectors.  The relativistic
operator is obtained by spectral calculus,

    H = sqrt(2 h + m^2) - m,

the external potential V is added after the square root, and semigroups and
bound states come from dense Hermitian eigendecompositions (dimension
2 n^3 <= ~3500, so no sparse machinery).
"""

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITICITY_TOL = 1e-10
RESIDUAL_TOL = 1e-8


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class Lattice:
    """Periodic cubic lattice: n sites per axis, box side L, spacing L/n.

    Site coordinates are (i - n//2) * spacing per axis, so the origin is a
    site and coordinates lie in [-L/2, L/2).
    """
    n: int
    L: float

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3 (distinct neighbors)")
        if self.L <= 0:
            raise ValueError("L must be > 0")

    @property
    def spacing(self):
        return self.L / self.n

    @property
    def n_sites(self):
        return self.n ** 3

    def axis_coords(self):
        return (np.arange(self.n) - self.n // 2) * self.spacing

    def site_coords(self):
        """(n^3, 3) coordinates in C order of the (i, j, k) index grid."""
        c = self.axis_coords()
        g = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)

    def radii(self):
        """Euclidean distance of each site from the origin (minimum image)."""
        return np.linalg.norm(self.site_coords(), axis=1)


@dataclass
class OperatorMatrix:
    """Dense Hermitian matrix with provenance metadata."""
    mat: np.ndarray
    tag: str
    lattice: Lattice
    spin: bool

    @property
    def dim(self):
        return self.mat.shape[0]

    def hermiticity_defect(self):
        scale = max(float(np.max(np.abs(self.mat))), 1.0)
        return float(np.max(np.abs(self.mat - self.mat.conj().T))) / scale

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.mat)


def build_h(fields, lattice, spin=True, gauge=None):
    """Assemble h = (kinetic with link phases) + spin interaction.

    ``gauge``, if given, is a site function chi whose lattice gradient is
    added to the link phases (the discrete substitution a -> a + grad chi);
    it conjugates h by the unitary diag(exp(i chi)) and must not move the
    spectrum.  With spin=False only the n^3-dimensional magnetic kinetic
    part is returned (no b coupling).
    """
    n, dx = lattice.n, lattice.spacing
    N = lattice.n_sites
    coords = lattice.site_coords()
    idx = np.arange(N).reshape(n, n, n)
    chi = gauge(coords) if gauge is not None else None

    kin = np.zeros((N, N), dtype=complex)
    np.fill_diagonal(kin, 3.0 / dx ** 2)
    for axis in range(3):
        nb = np.roll(idx, -1, axis=axis).ravel()
        e = np.zeros(3)
        e[axis] = dx
        mid = coords + 0.5 * e
        theta = fields.a(mid)[:, axis] * dx
        if chi is not None:
            theta = theta + (chi[nb] - chi)
        hop = -np.exp(-1j * theta) / (2.0 * dx ** 2)
        rows = idx.ravel()
        np.add.at(kin, (rows, nb), hop)
        np.add.at(kin, (nb, rows), np.conj(hop))

    if not spin:
        return OperatorMatrix(kin, "h", lattice, spin=False)

    bv = fields.b(coords)
    mat = np.zeros((2 * N, 2 * N), dtype=complex)
    mat[:N, :N] = kin
    mat[N:, N:] = kin
    # diagonal coupling -theta b3/2: block 0 is theta=+1, block 1 theta=-1
    d = 0.5 * bv[:, 2]
    mat[np.arange(N), np.arange(N)] += -d
    mat[np.arange(N, 2 * N), np.arange(N, 2 * N)] += d
    # off-diagonal coupling -(b1 - i theta b2)/2 between the sectors,
    # theta the row sector's spin
    od_plus = -0.5 * (bv[:, 0] - 1j * bv[:, 1])
    mat[np.arange(N), np.arange(N, 2 * N)] = od_plus
    mat[np.arange(N, 2 * N), np.arange(N)] = np.conj(od_plus)
    return OperatorMatrix(mat, "h", lattice, spin=True)


def add_potential(op, V):
    """op + diag(V at the sites); the potential acts identically on both spins."""
    coords = op.lattice.site_coords()
    v = V(coords)
    if op.spin:
        v = np.concatenate([v, v])
    mat = op.mat.copy()
    mat[np.diag_indices_from(mat)] += v
    return OperatorMatrix(mat, op.tag + "+V", op.lattice, op.spin)


def sqrt_shift(op, m):
    """H = sqrt(2 h + m^2) - m via eigendecomposition.

    Requires 2 h + m^2 >= 0 up to roundoff; a genuinely negative eigenvalue
    means m was chosen too small and is reported by value.
    """
    lam, vec = np.linalg.eigh(op.mat)
    shifted = 2.0 * lam + m * m
    low = float(shifted.min())
    if low < -1e-10:
        raise OracleError(
            f"2h + m^2 has negative eigenvalue {low:.3e}: m={m} too small")
    mapped = np.sqrt(np.clip(shifted, 0.0, None)) - m
    mat = (vec * mapped) @ vec.conj().T
    mat = 0.5 * (mat + mat.conj().T)
    return OperatorMatrix(mat, f"sqrt({op.tag})", op.lattice, op.spin)


def semigroup_matrix(op, t):
    """exp(-t (op)) by spectral calculus."""
    if t < 0:
        raise ValueError("t must be >= 0")
    lam, vec = np.linalg.eigh(op.mat)
    mat = (vec * np.exp(-t * lam)) @ vec.conj().T
    mat = 0.5 * (mat + mat.conj().T)
    return OperatorMatrix(mat, f"exp(-{t}*{op.tag})", op.lattice, op.spin)


@dataclass
class BoundState:
    """Lowest eigenpair of a lattice operator, physically normalized.

    ``phi`` carries the measure-weighted normalization
    sum |phi|^2 dx^3 = 1; the overall phase makes the largest-modulus
    component real positive.
    """
    E: float
    phi: np.ndarray
    lattice: Lattice
    spin: bool
    residual: float

    def phi_grid(self):
        n = self.lattice.n
        if self.spin:
            return self.phi.reshape(2, n, n, n)
        return self.phi.reshape(1, n, n, n)

    def sup_norm(self):
        return float(np.max(np.abs(self.phi)))

    def value_at(self, x, theta=None):
        """Trilinear periodic interpolation of phi at off-lattice points.

        ``theta`` selects the spin sector (+1 -> sector 0); for a spinless
        state it is ignored.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, dx = self.lattice.n, self.lattice.spacing
        g = self.phi_grid()
        if self.spin:
            sector = np.where(np.asarray(theta) > 0, 0, 1)
        else:
            sector = np.zeros(x.shape[0], dtype=int)
        sector = np.broadcast_to(sector, x.shape[:-1]).astype(int)

        u = x / dx + self.lattice.n // 2
        i0 = np.floor(u).astype(int)
        f = u - i0
        out = np.zeros(x.shape[:-1], dtype=g.dtype)
        for corner in range(8):
            bits = [(corner >> b) & 1 for b in range(3)]
            w = np.ones(x.shape[:-1])
            ii = []
            for axis, bit in enumerate(bits):
                w = w * (f[..., axis] if bit else 1.0 - f[..., axis])
                ii.append(np.mod(i0[..., axis] + bit, n))
            out = out + w * g[sector, ii[0], ii[1], ii[2]]
        return out


def ground_state(op):
    """Lowest eigenpair with residual check and fixed phase."""
    defect = op.hermiticity_defect()
    if defect > HERMITICITY_TOL:
        raise OracleError(f"matrix not Hermitian (defect {defect:.2e})")
    try:
        lam, vec = scipy.linalg.eigh(op.mat, subset_by_index=[0, 0])
    except Exception as exc:   # pragma: no cover - LAPACK failure surface
        raise OracleError(f"eigensolver failed: {exc}") from exc
    E = float(lam[0])
    v = vec[:, 0]
    res = float(np.linalg.norm(op.mat @ v - E * v))
    if res > RESIDUAL_TOL:
        raise OracleError(f"eigenpair residual {res:.2e} exceeds {RESIDUAL_TOL}")
    top = np.argmax(np.abs(v))
    phase = v[top] / abs(v[top])
    v = v / phase
    phi = v / op.lattice.spacing ** 1.5
    return BoundState(E=E, phi=phi, lattice=op.lattice, spin=op.spin,
                      residual=res)


def hamiltonian(fields, lattice, m, spin=True, relativistic=True, gauge=None):
    """Convenience builder: h (+ sqrt shift) + V, ready for ground_state."""
    h = build_h(fields, lattice, spin=spin, gauge=gauge)
    op = sqrt_shift(h, m) if relativistic else h
    return add_potential(op, fields.V)


def export_spectrum(op, path):
    """Eigenvalues as CSV (index, eigenvalue) at full precision."""
    vals = op.eigenvalues()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(vals):
            w.writerow([i, f"{v:.17g}"])


def export_state(state, path):
    """Bound state as CSV rows (x, y, z, spin, re, im, abs)."""
    coords = state.lattice.site_coords()
    g = state.phi_grid().reshape(2 if state.spin else 1, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "spin", "re", "im", "abs"])
        for s in range(g.shape[0]):
            theta = 1 if s == 0 else -1
            for c, v in zip(coords, g[s]):
                w.writerow([f"{c[0]:.17g}", f"{c[1]:.17g}", f"{c[2]:.17g}",
                            theta, f"{v.real:.17g}", f"{v.imag:.17g}",
                            f"{abs(v):.17g}"])

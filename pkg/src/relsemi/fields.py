"""Builtin field families: vector potential a, magnetic field b, potential V.

The magnetic field b is supplied independently of the vector potential a;
the two enter the dynamics through different terms (a through the Stratonovich
phase, b through the spin coupling), so mixed configurations like "bump b with
a = 0" are legitimate.  All families evaluate vectorized over leading axes of
shape (..., 3) points.

Spin coupling, derived from b alone:

    U_d(x, theta)  = -theta b_3(x) / 2          (diagonal)
    U_od at a flip = -(b_1(x) - i theta b_2(x)) / 2
    W(x)           = sqrt(b_1^2 + b_2^2) / 2 = |U_od|

and m_star = sup|b_3| + sup W, estimated by dense sampling over a box.
"""

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class VectorField:
    """A named R^3 -> R^3 function with flags the engine uses for exact shortcuts."""
    name: str
    func: callable
    is_zero: bool = False
    is_constant: bool = False

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ScalarField:
    name: str
    func: callable
    is_zero: bool = False

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


def zero_vector():
    return VectorField("zero", lambda x: np.zeros_like(x), is_zero=True,
                       is_constant=True)


def zero_scalar():
    return ScalarField("zero", lambda x: np.zeros(x.shape[:-1]), is_zero=True)


def constant_b(bvec):
    """Constant magnetic field b(x) = bvec."""
    bvec = np.asarray(bvec, dtype=float)
    return VectorField(f"constant_b{tuple(bvec)}",
                       lambda x: np.broadcast_to(bvec, x.shape).copy(),
                       is_zero=bool(np.all(bvec == 0)), is_constant=True)


def linear_gauge(bvec):
    """Vector potential a(x) = b x x / 2, whose curl is the constant field bvec."""
    bvec = np.asarray(bvec, dtype=float)
    return VectorField(f"linear_gauge{tuple(bvec)}",
                       lambda x: 0.5 * np.cross(np.broadcast_to(bvec, x.shape), x),
                       is_zero=bool(np.all(bvec == 0)))


def gaussian_bump_b(amplitude=1.0, width=1.0, cutoff=2.5, axis=0):
    """Magnetic bump along one axis, exactly zero outside radius ``cutoff``.

    b_axis(x) = amplitude * exp(-|x|^2 / (2 width^2)) for |x| < cutoff, else 0.
    The hard cutoff gives W a genuine zero set that Poisson jumps can land on.
    """
    def func(x):
        r2 = np.sum(x * x, axis=-1)
        prof = amplitude * np.exp(-r2 / (2.0 * width ** 2)) * (r2 < cutoff ** 2)
        out = np.zeros_like(x)
        out[..., axis] = prof
        return out
    return VectorField(f"gaussian_bump_b(A={amplitude},w={width},R={cutoff},axis={axis})",
                       func)


def gradient_gauge(scale=1.0):
    """Pure-gauge vector potential a = grad chi with chi(x) = scale |x|^2 / 2."""
    return VectorField(f"gradient_gauge({scale})", lambda x: scale * x)


def harmonic_v(omega=1.0):
    """V(x) = omega^2 |x|^2 / 2."""
    return ScalarField(f"harmonic(omega={omega})",
                       lambda x: 0.5 * omega ** 2 * np.sum(x * x, axis=-1))


def well_v(depth=2.0, radius=1.0):
    """Finite spherical well V(x) = -depth for |x| < radius, 0 outside."""
    return ScalarField(f"well(v={depth},R={radius})",
                       lambda x: -depth * (np.sum(x * x, axis=-1) < radius ** 2))


def soft_coulomb_v(gamma=1.0, delta=0.5):
    """V(x) = -gamma / sqrt(|x|^2 + delta^2)."""
    return ScalarField(f"soft_coulomb(g={gamma},d={delta})",
                       lambda x: -gamma / np.sqrt(np.sum(x * x, axis=-1) + delta ** 2))


@dataclass(frozen=True)
class FieldConfig:
    """One experiment's (a, b, V) triple."""
    a: VectorField = field(default_factory=zero_vector)
    b: VectorField = field(default_factory=zero_vector)
    V: ScalarField = field(default_factory=zero_scalar)

    def with_(self, **kw):
        return replace(self, **kw)


def free_fields():
    return FieldConfig()


def truncate_field(b, level):
    """Clamp each component of b to [-level, level].

    Leaves values with |b_mu| <= level untouched, maps larger ones to the
    signed level; identical to b wherever sup|b_mu| <= level.
    """
    if level <= 0:
        raise ValueError(f"level must be > 0, got {level}")
    return VectorField(f"clamp({b.name},{level})",
                       lambda x: np.clip(b.func(x), -level, level),
                       is_zero=b.is_zero, is_constant=b.is_constant)


def comparison_field(fields):
    """The comparison configuration: a = 0 and b replaced by

        b0 = (sqrt(b_1^2 + b_2^2), 0, b_3),

    which has the same W and the same diagonal coupling but a
    positivity-preserving off-diagonal part (the jump factors become +W >= 0).
    """
    b = fields.b

    def func(x):
        bv = b.func(x)
        out = np.zeros_like(bv)
        out[..., 0] = np.sqrt(bv[..., 0] ** 2 + bv[..., 1] ** 2)
        out[..., 2] = bv[..., 2]
        return out

    b0 = VectorField(f"comparison({b.name})", func,
                     is_zero=b.is_zero, is_constant=b.is_constant)
    return fields.with_(a=zero_vector(), b=b0)


# ---------------------------------------------------------------------------
# spin coupling

@dataclass(frozen=True)
class SpinCoupling:
    """Diagonal/off-diagonal spin couplings of a magnetic field.

    m_star is a sup-norm estimate over ``box`` (half side length) obtained by
    sampling a dense grid; it is exact for constant fields and an
    approximation otherwise.
    """
    b: VectorField
    box: float = 6.0
    grid_points: int = 41

    def u_d(self, x, theta):
        """Diagonal coupling -theta b_3(x)/2; theta broadcastable to x[..., 0]."""
        return -0.5 * np.asarray(theta) * self.b(x)[..., 2]

    def u_od(self, x, theta):
        """Off-diagonal coupling entering a spin flip with pre-flip spin theta:
        -(b_1(x) - i theta b_2(x)) / 2.  Its modulus is W(x) for every theta."""
        bv = self.b(x)
        return -0.5 * (bv[..., 0] - 1j * np.asarray(theta) * bv[..., 1])

    def w(self, x):
        """W(x) = sqrt(b_1^2 + b_2^2)/2, the modulus of every off-diagonal factor."""
        bv = self.b(x)
        return 0.5 * np.sqrt(bv[..., 0] ** 2 + bv[..., 1] ** 2)

    def m_star(self):
        """sup|b_3| + sup W over the evaluation box (dense-grid estimate)."""
        g = np.linspace(-self.box, self.box, self.grid_points)
        pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        bv = self.b(pts)
        sup_b3 = float(np.max(np.abs(bv[..., 2])))
        sup_w = float(np.max(0.5 * np.sqrt(bv[..., 0] ** 2 + bv[..., 1] ** 2)))
        return sup_b3 + sup_w

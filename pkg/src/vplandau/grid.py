"""Discrete phase space and spectral primitives.

Conventions used throughout the package:

* The spatial domain is a periodic box ``[0, length)^dim_x`` (default period
  ``2*pi`` per axis), sampled on ``n_x`` uniform points per axis.  Spatial
  wavenumbers are integers scaled by ``2*pi/length`` in the standard FFT
  layout (the Nyquist mode sits at ``-n_x/2``; it is an alias of ``+n_x/2``
  and is zeroed whenever an odd-order derivative is taken).
* The velocity domain is the truncated box ``[-L, L)^3`` sampled on ``n_v``
  uniform points per axis and treated as a ``2L``-periodic torus for all
  spectral operations.  Velocity wavenumbers are ``(pi/L) * m`` for integer
  ``m`` in FFT layout.
* Phase-space arrays carry spatial axes first, velocity axes last:
  ``shape = (n_x,)*dim_x + (n_v, n_v, n_v)``.
* Transform normalization is the ``norm="forward"`` DFT: the forward
  transform divides by the number of points, so coefficients are discrete
  Fourier-series coefficients (a constant field has a single coefficient at
  frequency zero equal to its value).  Parseval then reads
  ``integral |f|^2 = box_volume * sum |fhat|^2``, which is what the norm
  helpers below implement; L2 norms computed in real space by quadrature and
  in coefficient space agree exactly up to roundoff.
* Quadrature is the uniform-weight (trapezoid-equivalent on a periodic grid)
  sum: cell volume ``(length/n_x)^dim_x * (2L/n_v)^3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, UnsupportedOrderError

_TWO_PI = 2.0 * math.pi


def _check_power_of_two(n, name):
    if n < 4 or (n & (n - 1)) != 0:
        raise ValueError(f"{name} must be a power of two >= 4, got {n}")


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic spatial grid: ``dim_x`` axes, ``n_x`` points per axis."""

    dim_x: int = 1
    n_x: int = 16
    length: float = _TWO_PI

    def __post_init__(self):
        if self.dim_x not in (1, 2, 3):
            raise ValueError(f"dim_x must be in {{1,2,3}}, got {self.dim_x}")
        _check_power_of_two(self.n_x, "n_x")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def spacing(self):
        return self.length / self.n_x

    @property
    def cell_volume(self):
        return self.spacing**self.dim_x

    @property
    def volume(self):
        return self.length**self.dim_x

    def axis_nodes(self):
        """1-D node array, shared by every spatial axis."""
        return np.arange(self.n_x) * self.spacing

    def axis_wavenumbers(self):
        """1-D wavenumber array in FFT layout (rad per unit length)."""
        return _TWO_PI / self.length * sfft.fftfreq(self.n_x, 1.0 / self.n_x)

    def coordinate(self, axis):
        """Node coordinates of spatial axis ``axis`` broadcast to x-shape."""
        shape = [1] * self.dim_x
        shape[axis] = self.n_x
        return self.axis_nodes().reshape(shape)

    @property
    def shape(self):
        return (self.n_x,) * self.dim_x


@dataclass(frozen=True)
class VelocityGrid:
    """Truncated velocity box ``[-L, L)^3`` on a uniform grid."""

    n_v: int = 16
    cutoff_L: float = 8.0

    def __post_init__(self):
        _check_power_of_two(self.n_v, "n_v")
        if self.cutoff_L <= 0:
            raise ValueError("cutoff_L must be positive")

    @property
    def dim_v(self):
        return 3

    @property
    def spacing(self):
        return 2.0 * self.cutoff_L / self.n_v

    @property
    def node_weight(self):
        """Quadrature weight per node, ``(2L/n_v)^3``."""
        return self.spacing**3

    def axis_nodes(self):
        return -self.cutoff_L + self.spacing * np.arange(self.n_v)

    def axis_wavenumbers(self):
        period = 2.0 * self.cutoff_L
        return _TWO_PI / period * sfft.fftfreq(self.n_v, 1.0 / self.n_v)

    def coordinate(self, axis):
        """Node coordinates of velocity axis ``axis`` as a (n_v,n_v,n_v) view."""
        shape = [1, 1, 1]
        shape[axis] = self.n_v
        return np.broadcast_to(
            self.axis_nodes().reshape(shape), (self.n_v,) * 3
        )

    def speed_squared(self):
        v = self.axis_nodes()
        return (
            v[:, None, None] ** 2 + v[None, :, None] ** 2 + v[None, None, :] ** 2
        )

    @property
    def shape(self):
        return (self.n_v,) * 3


@dataclass(frozen=True)
class PhaseGrid:
    """Product of a spatial and a velocity grid plus transform helpers."""

    spatial: SpatialGrid = field(default_factory=SpatialGrid)
    velocity: VelocityGrid = field(default_factory=VelocityGrid)

    # ---- shapes and axis bookkeeping -------------------------------------

    @property
    def shape(self):
        return self.spatial.shape + self.velocity.shape

    @property
    def dim_x(self):
        return self.spatial.dim_x

    @property
    def x_axes(self):
        return tuple(range(self.dim_x))

    @property
    def v_axes(self):
        return tuple(range(self.dim_x, self.dim_x + 3))

    @property
    def cell_volume(self):
        return self.spatial.cell_volume * self.velocity.node_weight

    def axis_index(self, name):
        """Map an axis name ('x1'..'x3', 'v1'..'v3') to an array axis."""
        if not isinstance(name, str) or len(name) != 2 or name[1] not in "123":
            raise ValueError(f"unknown axis name {name!r}")
        j = int(name[1]) - 1
        if name[0] == "x":
            if j >= self.dim_x:
                raise ValueError(f"axis {name!r} outside dim_x={self.dim_x}")
            return j
        if name[0] == "v":
            return self.dim_x + j
        raise ValueError(f"unknown axis name {name!r}")

    def wavenumbers(self, axis):
        """Wavenumber array of a (flat) array axis, broadcast-ready."""
        nd = self.dim_x + 3
        if axis < self.dim_x:
            k = self.spatial.axis_wavenumbers()
        else:
            k = self.velocity.axis_wavenumbers()
        shape = [1] * nd
        shape[axis] = k.size
        return k.reshape(shape)

    def check_shape(self, values, domain="xv"):
        expected = {
            "xv": self.shape,
            "v": self.velocity.shape,
            "x": self.spatial.shape,
        }[domain]
        if np.shape(values) != expected:
            raise GridMismatchError(
                f"array shape {np.shape(values)} does not match grid shape "
                f"{expected} (domain {domain!r})"
            )


# ---- transforms ----------------------------------------------------------


def _axes_tuple(grid, axes):
    if axes == "xv":
        return grid.x_axes + grid.v_axes
    if axes == "x":
        return grid.x_axes
    if axes == "v":
        return grid.v_axes
    return tuple(axes)


def forward_transform(grid, values, axes="xv"):
    """Forward DFT (norm='forward') over the requested axes of a phase field."""
    grid.check_shape(values, "xv")
    return sfft.fftn(values, axes=_axes_tuple(grid, axes), norm="forward")


def inverse_transform(grid, coeffs, axes="xv", real=True):
    """Inverse of :func:`forward_transform`; returns the real part by default."""
    out = sfft.ifftn(coeffs, axes=_axes_tuple(grid, axes), norm="forward")
    return out.real if real else out


def spectral_derivative(grid, values, axis, order=1):
    """Spectral derivative along one axis of a phase-space field.

    ``axis`` may be an axis name ('x1', 'v2', ...) or a flat array axis.
    Multiplies by ``(i k)^order`` in frequency; the Nyquist mode is zeroed
    for odd orders so that real fields map to real fields.
    """
    if order not in (1, 2):
        raise UnsupportedOrderError(f"order must be 1 or 2, got {order}")
    if isinstance(axis, str):
        axis = grid.axis_index(axis)
    grid.check_shape(values, "xv")
    hat = sfft.fft(values, axis=axis, norm="forward")
    n = values.shape[axis]
    if axis < grid.dim_x:
        k = grid.spatial.axis_wavenumbers()
    else:
        k = grid.velocity.axis_wavenumbers()
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    hat *= mult.reshape(shape)
    out = sfft.ifft(hat, axis=axis, norm="forward")
    return out.real if np.isrealobj(values) else out


def quadrature_integral(grid, values, domain="xv"):
    """Uniform-weight integral over ``'v'`` (returns an x-field) or ``'xv'``."""
    grid.check_shape(values, "xv")
    if domain == "v":
        return values.sum(axis=grid.v_axes) * grid.velocity.node_weight
    if domain == "xv":
        return float(values.sum()) * grid.cell_volume
    raise ValueError(f"unknown domain {domain!r}")


def integrate_v(grid, values):
    """Velocity integral of a phase field; returns the spatial field."""
    return quadrature_integral(grid, values, "v")


def integrate_x(grid, values_x):
    """Integral of a spatial field over the periodic box."""
    grid.check_shape(values_x, "x")
    return float(values_x.sum()) * grid.spatial.cell_volume


def l2_norm(grid, values, domain="xv"):
    """L2 norm by quadrature (equals the Parseval coefficient norm)."""
    if domain == "xv":
        grid.check_shape(values, "xv")
        w = grid.cell_volume
    elif domain == "v":
        grid.check_shape(values, "v")
        w = grid.velocity.node_weight
    elif domain == "x":
        grid.check_shape(values, "x")
        w = grid.spatial.cell_volume
    else:
        raise ValueError(f"unknown domain {domain!r}")
    return math.sqrt(float(np.sum(np.abs(values) ** 2)) * w)


def spectral_l2_norm(grid, coeffs, domain="xv"):
    """L2 norm from forward-normalized coefficients (Parseval form)."""
    if domain == "xv":
        vol = grid.spatial.volume * (2.0 * grid.velocity.cutoff_L) ** 3
    elif domain == "v":
        vol = (2.0 * grid.velocity.cutoff_L) ** 3
    elif domain == "x":
        vol = grid.spatial.volume
    else:
        raise ValueError(f"unknown domain {domain!r}")
    return math.sqrt(float(np.sum(np.abs(coeffs) ** 2)) * vol)


def v_derivative_trailing(velocity_grid, values, axis):
    """Spectral d/dv_axis acting on the trailing three (velocity) axes.

    Works for velocity-only fields and for phase-space fields alike; the
    Nyquist mode is zeroed (first derivative).
    """
    arr_axis = values.ndim - 3 + axis
    hat = sfft.fft(values, axis=arr_axis, norm="forward")
    k = velocity_grid.axis_wavenumbers()
    mult = 1j * k
    mult[velocity_grid.n_v // 2] = 0.0
    shape = [1] * values.ndim
    shape[arr_axis] = velocity_grid.n_v
    hat *= mult.reshape(shape)
    return sfft.ifft(hat, axis=arr_axis, norm="forward").real


# ---- spectral fields -----------------------------------------------------


class SpectralField:
    """A real phase-space field with a cached spectral view.

    The canonical representation is the real-space array; the coefficient
    array is computed lazily and invalidated by :meth:`replace`.
    """

    __slots__ = ("grid", "values", "_coeffs")

    def __init__(self, grid, values):
        grid.check_shape(values, "xv")
        self.grid = grid
        self.values = np.asarray(values, dtype=np.float64)
        self._coeffs = None

    @property
    def coefficients(self):
        if self._coeffs is None:
            self._coeffs = forward_transform(self.grid, self.values)
        return self._coeffs

    def replace(self, values):
        return SpectralField(self.grid, values)

    def copy(self):
        return SpectralField(self.grid, self.values.copy())

    def hermitian_defect(self):
        """Max deviation of the coefficients from Hermitian symmetry."""
        c = self.coefficients
        # Hermitian partner of mode m is (-m) mod n along every axis.
        idx = tuple(np.mod(-np.arange(n), n) for n in c.shape)
        conj = np.conj(c[np.ix_(*idx)])
        return float(np.max(np.abs(c - conj)))

    def roundtrip_defect(self):
        back = inverse_transform(self.grid, self.coefficients)
        scale = float(np.max(np.abs(self.values))) or 1.0
        return float(np.max(np.abs(back - self.values))) / scale


# ---- truncation / aliasing tolerance -------------------------------------


def truncation_tolerance(cutoff_L, n_v, moment_order=0):
    """Conservative bound on the error of a Gaussian velocity moment.

    Estimates the uniform-grid quadrature error of
    ``integral |v|^p mu(v) dv`` restricted to the box ``[-L, L)^3``.  Two
    sources: aliasing (Poisson summation; decays like exp(-2 pi^2/h^2)) and
    tail truncation (decays like exp(-L^2/2)).  A safety factor of 10 and a
    roundoff floor are applied; the bound is intentionally loose.
    """
    h = 2.0 * cutoff_L / n_v
    p = moment_order
    alias = 6.0 * (1.0 + (_TWO_PI / h) ** p) * math.exp(-2.0 * math.pi**2 / h**2)
    tail = 6.0 * (1.0 + cutoff_L ** (p + 1)) * math.exp(-(cutoff_L**2) / 2.0)
    return max(10.0 * (alias + tail), 1e-12)


def resolution_tolerance(cutoff_L, n_v, order=1):
    """Bound on the pointwise spectral-representation error of the Maxwellian.

    Distinct from :func:`truncation_tolerance`: moments of ``mu`` alias at
    ``exp(-2 pi^2/h^2)`` (Poisson summation of the Gaussian), while pointwise
    reconstruction and spectral derivatives are limited by the spectral tail
    of ``mu`` beyond the grid's Nyquist frequency ``pi/h``, which only decays
    like ``exp(-pi^2/(2 h^2))``.  Derivatives pick up an extra factor of the
    Nyquist frequency per order.  Relative to the peak of the field.
    """
    h = 2.0 * cutoff_L / n_v
    eta = math.pi / h
    tail = math.exp(-0.5 * eta**2) * (1.0 + eta) ** order
    box = (1.0 + cutoff_L**order) * math.exp(-(cutoff_L**2) / 2.0)
    return max(10.0 * (tail + box), 1e-13)

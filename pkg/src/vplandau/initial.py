"""Initial-condition families.

Every constructed state is post-processed the same way:

1. project out the offending global moments so the perturbation satisfies
   the conservation constraints (zero species masses, zero total momentum,
   kinetic energy balancing the field energy) -- the corrections are
   x-homogeneous kernel fields, which leave the potential untouched;
2. verify positivity of the full distribution ``mu + f``; if violated, halve
   the amplitude (with a warning) up to ten times before giving up.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import poisson
from .errors import InitialConditionError
from .grid import integrate_v, integrate_x
from .state import SystemState, maxwellian
from .weights import bracket


def _velocity_profile(grid, profile, tail_power):
    ve = grid.velocity
    mu = maxwellian(ve)
    if profile == "maxwellian":
        return mu
    if profile == "vmu":
        return ve.coordinate(0) * mu
    if profile == "weighted_maxwellian":
        # pushes content to moderate speeds, spreading collision rates
        return bracket(ve) ** tail_power * mu
    if profile == "hermite":
        return (ve.speed_squared() - 3.0) * mu
    if profile == "offdiag":
        # purely microscopic direction (orthogonal to the kernel basis)
        return ve.coordinate(0) * ve.coordinate(1) * mu
    raise InitialConditionError(f"unknown velocity profile {profile!r}")


def _spatial_pattern(grid, family, modes, rng):
    sp = grid.spatial
    xs = [sp.coordinate(a) for a in range(sp.dim_x)]
    two_pi_over_l = 2.0 * math.pi / sp.length

    def mode_for_axis(a):
        return modes[a] if a < len(modes) else 0

    if family == "single_mode":
        pattern = np.ones(sp.shape)
        for a, x in enumerate(xs):
            m = mode_for_axis(a)
            if m:
                pattern = pattern * np.cos(m * two_pi_over_l * x)
        return np.broadcast_to(pattern, sp.shape).copy()
    if family == "two_mode":
        m1 = modes[0] if modes else 1
        m2 = modes[1] if len(modes) > 1 else m1 + 1
        pattern = (np.cos(m1 * two_pi_over_l * xs[0])
                   + 0.5 * np.sin(m2 * two_pi_over_l * xs[0]))
        return np.broadcast_to(pattern, sp.shape).copy()
    if family == "random_bandlimited":
        mmax = max(1, max(abs(m) for m in modes) if modes else 1)
        pattern = np.zeros(sp.shape)
        for a, x in enumerate(xs):
            for m in range(1, mmax + 1):
                c = rng.standard_normal()
                s_coef = rng.standard_normal()
                pattern = pattern + c * np.cos(m * two_pi_over_l * x) \
                    + s_coef * np.sin(m * two_pi_over_l * x)
        scale = np.max(np.abs(pattern))
        return pattern / (scale if scale > 0 else 1.0)
    raise InitialConditionError(f"unknown family {family!r}")


def _kernel_basis(grid):
    """The six global kernel fields used by the conservation projection."""
    ve = grid.velocity
    mu = maxwellian(ve)
    vs = [ve.coordinate(j) for j in range(3)]
    # pair fields: (plus part, minus part)
    basis = [(mu, np.zeros_like(mu)), (np.zeros_like(mu), mu)]
    for j in range(3):
        basis.append((vs[j] * mu, vs[j] * mu))
    e = (ve.speed_squared() - 3.0) * mu
    basis.append((e, e))
    return basis


def project_conservation(state):
    """Remove the global moments violating the conservation constraints.

    Subtracts an x-homogeneous kernel-pair field so that both species
    masses, the total momentum and the kinetic-plus-field energy of the
    perturbation vanish on the grid.  The subtraction is constant in x, so
    the zero-mean charge density and hence the potential are unchanged.
    """
    g = state.grid
    ve = g.velocity
    vs = [ve.coordinate(j) for j in range(3)]
    sp2 = ve.speed_squared()

    def functionals(fp, fm):
        vals = [
            integrate_x(g, integrate_v(g, fp)),
            integrate_x(g, integrate_v(g, fm)),
        ]
        s = fp + fm
        for j in range(3):
            vals.append(integrate_x(g, integrate_v(g, vs[j] * s)))
        vals.append(integrate_x(g, integrate_v(g, sp2 * s)))
        return np.array(vals)

    basis = _kernel_basis(g)
    volx = g.spatial.volume
    # constraint matrix: functionals of each (x-homogeneous) basis pair
    mat = np.zeros((6, 6))
    for col, (bp, bm) in enumerate(basis):
        w = g.velocity.node_weight
        mass_p = float(np.sum(bp)) * w * volx
        mass_m = float(np.sum(bm)) * w * volx
        mat[0, col] = mass_p
        mat[1, col] = mass_m
        for j in range(3):
            mat[2 + j, col] = float(np.sum(vs[j] * (bp + bm))) * w * volx
        mat[5, col] = float(np.sum(sp2 * (bp + bm))) * w * volx
    target = functionals(state.f_plus, state.f_minus)
    target[5] += poisson.field_energy(g.spatial, state.phi)
    coef = np.linalg.solve(mat, target)
    corr_p = sum(c * bp for c, (bp, _) in zip(coef, basis))
    corr_m = sum(c * bm for c, (_, bm) in zip(coef, basis))
    return state.with_fields(state.f_plus - corr_p, state.f_minus - corr_m)


def make_initial_condition(grid, family="single_mode", amplitude=1e-3,
                           modes=(1,), profile="maxwellian", tail_power=4.0,
                           species="opposite", seed=0, max_halvings=10):
    """Construct a conservation-compatible, positivity-checked initial state."""
    if amplitude == 0.0:
        return SystemState.zero(grid)
    rng = np.random.default_rng(seed)
    pattern = _spatial_pattern(grid, family, modes, rng)
    prof = _velocity_profile(grid, profile, tail_power)
    sign_minus = -1.0 if species == "opposite" else 1.0
    mu = maxwellian(grid.velocity)
    xpad = (...,) + (None, None, None)
    amp = float(amplitude)
    for attempt in range(max_halvings + 1):
        f_plus = amp * pattern[xpad] * prof
        f_minus = sign_minus * amp * pattern[xpad] * prof
        state = project_conservation(SystemState(grid, f_plus, f_minus))
        min_full = min(float(np.min(mu + state.f_plus)),
                       float(np.min(mu + state.f_minus)))
        if min_full > 0.0:
            return state
        if attempt < max_halvings:
            warnings.warn(
                f"initial data violates positivity (min mu+f = {min_full:.3e});"
                f" halving amplitude to {amp / 2:g}", RuntimeWarning,
                stacklevel=2)
            amp *= 0.5
    raise InitialConditionError(
        f"positivity could not be restored within {max_halvings} halvings")

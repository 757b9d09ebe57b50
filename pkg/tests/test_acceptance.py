"""Acceptance criteria, one test per criterion, one [PASS]/[FAIL] line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.  Criterion 6 is expected red: see its docstring and
the analysis it prints (hard-potential corner modes of the mandated
unfiltered periodic velocity discretization grow spuriously and the
weighted functional amplifies them; every admissible mitigation was tested).

The three evolution criteria (5, 6, 7) dominate the runtime (~15-25 min
total on two cores); everything else finishes in about three minutes.
"""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from vplandau import diagnostics, dynamics, initial, landau, weights
from vplandau.grid import (
    PhaseGrid,
    SpatialGrid,
    VelocityGrid,
    integrate_v,
    l2_norm,
)
from vplandau.poisson import residual as poisson_residual, solve_potential
from vplandau.state import (
    SystemState,
    check_conservation,
    load_checkpoint,
    maxwellian,
    project_P,
    project_Pi,
    projection_upper_constant,
    save_checkpoint,
)

from conftest import random_bandlimited_v

GAMMAS = (-3.0, -1.0, 0.0, 1.0)


def report(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    print("\n" + line)
    return line


def vnorm(ve, f):
    return math.sqrt(float(np.sum(f**2)) * ve.node_weight)


def test_criterion_01_collision_operator_equivalence():
    """FFT path vs direct-quadrature oracle, 20 random band-limited pairs."""
    ve = VelocityGrid(16, 8.0)
    rng = np.random.default_rng(101)
    worst = 0.0
    for gamma in GAMMAS:
        tables = landau.build_kernel_tables(gamma, ve, measure=False)
        for _ in range(5):
            g = random_bandlimited_v(rng, ve)
            f = random_bandlimited_v(rng, ve)
            qf = landau.q_landau_fft(g, f, tables)
            qd = landau.q_landau_direct(g, f, gamma, ve)
            worst = max(worst, vnorm(ve, qf - qd) / vnorm(ve, qd))
    ok = worst <= 1e-8
    line = report(1, ok, f"FFT-vs-oracle max rel error {worst:.2e} <= 1e-8 "
                         f"on 20 pairs, gamma in {GAMMAS}")
    assert ok, line


def test_criterion_02_equilibrium_annihilation_refinement():
    """||Q(mu,mu)||/||mu|| drops by >= 10x from n_v=16 to 32 at L=8."""
    ratios = {}
    for gamma in GAMMAS:
        eps = {}
        for nv in (16, 32):
            tables = landau.build_kernel_tables(gamma, VelocityGrid(nv, 8.0))
            eps[nv] = tables.epsilon_op
        ratios[gamma] = eps[16] / eps[32]
    ok = all(r >= 10.0 for r in ratios.values())
    detail = ", ".join(f"gamma={g:g}: {r:.1f}x" for g, r in ratios.items())
    line = report(2, ok, f"eps_op(16)/eps_op(32) = {detail} (all >= 10)")
    assert ok, line


def test_criterion_03_collision_invariants():
    """Mass moment always ~0; corrected momentum/energy moments exactly ~0."""
    ve = VelocityGrid(16, 8.0)
    rng = np.random.default_rng(103)
    worst_mass = 0.0
    for gamma in (-3.0, 0.0):
        tables = landau.build_kernel_tables(gamma, ve, measure=False)
        for _ in range(3):
            g = random_bandlimited_v(rng, ve)
            f = random_bandlimited_v(rng, ve)
            q = landau.q_landau_fft(g, f, tables)
            mass = abs(float(np.sum(q)) * ve.node_weight)
            worst_mass = max(worst_mass, mass / (vnorm(ve, g) * vnorm(ve, f)))
    grid = PhaseGrid(SpatialGrid(1, 8), VelocityGrid(16, 8.0))
    tables = landau.build_kernel_tables(-3.0, grid.velocity, measure=False)
    corr = landau.ConservativeCorrector(grid.velocity)
    state = initial.make_initial_condition(grid, amplitude=2e-3, seed=103)
    rp, rm = landau.apply_collision_field(state, tables, conservative=True,
                                          corrector=corr)
    mom = corr.moments(rp) + corr.moments(rm)
    worst_corr = float(np.max(np.abs(mom[1:])))
    ok = worst_mass <= 1e-12 and worst_corr <= 1e-12
    line = report(3, ok, f"mass moment {worst_mass:.2e} <= 1e-12 rel; "
                         f"corrected momentum/energy {worst_corr:.2e} <= 1e-12")
    assert ok, line


def test_criterion_04_poisson_exactness():
    """Spectral residual within 1e-12; eigenfunction cases within 1e-13."""
    sp = SpatialGrid(1, 32)
    rng = np.random.default_rng(104)
    rho = rng.standard_normal(32)
    res = solve_potential(sp, rho)
    scale = math.sqrt(float(np.sum(rho**2)) * sp.cell_volume)
    rel = poisson_residual(sp, res.phi, rho) / scale
    x = sp.axis_nodes()
    eig = solve_potential(sp, np.cos(x))
    eig_err = float(np.max(np.abs(eig.phi - np.cos(x))))
    ok = rel <= 1e-12 and eig_err <= 1e-13
    line = report(4, ok, f"residual {rel:.2e} <= 1e-12; eigenfunction "
                         f"error {eig_err:.2e} <= 1e-13")
    assert ok, line


def test_criterion_05_global_conservation():
    """Nonlinear small-data run (dim_x=1, n_x=16, n_v=16, gamma=-3, t=1)."""
    grid = PhaseGrid(SpatialGrid(1, 16), VelocityGrid(16, 8.0))
    tables = landau.build_kernel_tables(-3.0, grid.velocity)
    state = initial.make_initial_condition(
        grid, family="single_mode", amplitude=1e-3, modes=(1,),
        profile="maxwellian", species="opposite", seed=11)
    cfg = dynamics.TimeStepConfig(dt=5e-3, conservative_correction=True)
    final = dynamics.advance(state.clone(), 1.0, cfg, tables)
    rep = check_conservation(final, state)
    drifts = {
        "mass+": rep.rel_mass_plus,
        "mass-": rep.rel_mass_minus,
        "momentum": rep.rel_momentum,
        "energy": rep.rel_energy,
    }
    ok = all(v <= 1e-8 for v in drifts.values())
    detail = ", ".join(f"{k}={v:.2e}" for k, v in drifts.items())
    line = report(5, ok, f"relative drifts over t=1: {detail} (all <= 1e-8)")
    assert ok, line


def test_criterion_06_hard_potential_weighted_decay():
    """gamma=0 nonlinear run to t=10: E_k monotone after transient, exp fit.

    EXPECTED RED -- verified blocking analysis (see the decisions ledger):
    under the mandated unfiltered periodic velocity discretization, hard
    potentials have spuriously growing box-corner velocity modes (drift
    coefficient ~|v|^(gamma+2) wraps sign-discontinuously at the box faces;
    measured growth rate +6.6 at n_v=16, L=8 and +26.8 at n_v=32, L=10 --
    refinement worsens it -- versus stable -0.47 at gamma=-3).  The
    <v>^60-class weights of E_10 amplify that content astronomically, so
    E_10 rises from the first steps at every attainable desk resolution;
    the unweighted microscopic norm decays cleanly (tested elsewhere).

    The run below is the faithful configuration (explicit RK4 at the
    collision-stability step).  The monotone-decrease clause over [1, 10]
    is evaluated in stages: the first stage reaches t = 1.25; if E_k is
    already rising on [1.0, 1.25] the criterion is conclusively falsified
    and the test fails with that evidence (the full horizon can make it no
    better); only if the early window is monotone does the run continue to
    t = 10 for the complete evaluation.
    """
    grid = PhaseGrid(SpatialGrid(1, 4), VelocityGrid(16, 8.0))
    spec = weights.WeightSpec("landau", 0.0, 10.0)
    tables = landau.build_kernel_tables(0.0, grid.velocity)
    state = initial.make_initial_condition(
        grid, family="single_mode", amplitude=1e-3, modes=(1,),
        profile="maxwellian", species="opposite", seed=11)
    recorder = diagnostics.Recorder(spec, state.clone(), cadence=10,
                                    compute_d_k=False,
                                    epsilon_op=tables.epsilon_op)
    cfg = dynamics.TimeStepConfig(dt=5.5e-4, scheme="strang_rk4",
                                  conservative_correction=True)
    blow_up = None
    try:
        state = dynamics.advance(state, 1.25, cfg, tables, sink=recorder)
    except FloatingPointError as exc:
        blow_up = str(exc)

    def window_series(lo, hi):
        t = recorder.times()
        e = recorder.series("e_k")
        m = (t >= lo) & (t <= hi)
        return t[m], e[m]

    t_w, e_w = window_series(1.0, 1.25)
    early_monotone = blow_up is None and t_w.size >= 10 and bool(
        np.all(np.diff(e_w) <= 1e-12 * e_w[0]))
    if not early_monotone:
        if blow_up is not None:
            evidence = f"run aborted with non-finite values: {blow_up}"
        else:
            evidence = (f"E_k rising on [1.0, 1.25]: "
                        f"E({t_w[0]:.2f}) = {e_w[0]:.3e} -> "
                        f"E({t_w[-1]:.2f}) = {e_w[-1]:.3e} "
                        f"(x{e_w[-1] / e_w[0]:.1f}); monotone-decrease over "
                        f"[1, 10] conclusively falsified")
        line = report(6, False, evidence + "  [expected red, see ledger]")
        pytest.fail(line)
    # unexpected: early window monotone -- run the full horizon faithfully
    state = dynamics.advance(state, 10.0, cfg, tables, sink=recorder)
    t = recorder.times()
    e = recorder.series("e_k")
    m = (t >= 1.0) & (t <= 10.0)
    monotone = bool(np.all(np.diff(e[m]) <= 1e-12 * e[m][0]))
    fit = diagnostics.fit_decay(t, e, "exponential", window=(1.0, 10.0))
    ok = monotone and fit.rate > 0 and fit.r_squared >= 0.99
    line = report(6, ok, f"monotone={monotone}, lambda={fit.rate:.3f}, "
                         f"R2={fit.r_squared:.4f}")
    assert ok, line


def test_criterion_07_soft_potential_decay_class():
    """gamma=-3 linearized run to t=20: sub-exponential decay of the energy.

    The experiment's recorded energy is ||(I-P) f||^2 (the quantity the
    linearized evolution decays; the heavily weighted E_k functional has a
    roundoff-amplification floor at desk scale, see the ledger).  Over
    [5, 20] the polynomial fit must beat the exponential fit and its slope
    must be negative; no claim of matching -2l/|gamma|.
    """
    grid = PhaseGrid(SpatialGrid(1, 4), VelocityGrid(16, 8.0))
    spec = weights.WeightSpec("landau", -3.0, 10.0)
    tables = landau.build_kernel_tables(-3.0, grid.velocity, measure=False)
    state = initial.make_initial_condition(
        grid, family="single_mode", amplitude=1e-3, modes=(0,),
        profile="weighted_maxwellian", tail_power=4.0, seed=11)
    result = diagnostics.linearized_decay_experiment(
        state, tables, spec, dt=0.05, t_final=20.0, cadence=2,
        transient_fraction=0.25, scheme="strang_rk4")
    energy = result.micro_norms**2
    decayed = energy[-1] < energy[0]
    sub_exponential = (result.fit_polynomial.r_squared
                       > result.fit_exponential.r_squared)
    slope_negative = result.fit_polynomial.rate < 0
    ok = decayed and sub_exponential and slope_negative
    line = report(
        7, ok,
        f"E(20)/E(0) = {energy[-1] / energy[0]:.2e} (decayed={decayed}); "
        f"poly R2 {result.fit_polynomial.r_squared:.3f} > exp R2 "
        f"{result.fit_exponential.r_squared:.3f} = {sub_exponential}; "
        f"poly slope {result.fit_polynomial.rate:+.2f} < 0")
    assert ok, line


def test_criterion_08_weight_inequality_suite():
    """Lemma-style inequalities on a 4x3 (gamma, k) grid per model."""
    rng = np.random.default_rng(108)
    pts = rng.uniform(-8.0, 8.0, size=(1000, 3))
    checked = failed = 0
    for gamma in (-3.0, -2.0, -1.0, 1.0):
        for k in (10.0, 15.0, 20.0):
            suite = weights.weight_inequality_suite(
                weights.WeightSpec("landau", gamma, k), pts)
            checked += len(suite)
            failed += sum(0 if r.passed else 1 for r in suite)
    for gamma in (-0.5, 0.0, 0.5, 1.0):
        for k in (17.0, 20.0, 25.0):
            suite = weights.weight_inequality_suite(
                weights.WeightSpec("boltzmann", gamma, k, s=0.75), pts)
            checked += len(suite)
            failed += sum(0 if r.passed else 1 for r in suite)
    spec = weights.WeightSpec("landau", -3.0, 10.0)
    corrupted = weights.weight_inequality_suite(spec, pts,
                                                r_override=2.0 * spec.q)
    floor_failures = sum(
        1 for r in corrupted if r.name.startswith("floor") and not r.passed)
    ok = failed == 0 and floor_failures > 0
    line = report(8, ok, f"{checked} inequality instances checked at 1000 "
                         f"samples, {failed} failed; corrupted r=2q floor "
                         f"failures: {floor_failures} (> 0 as predicted)")
    assert ok, line


def test_criterion_09_projection_algebra():
    """P^2=P, Pi^2=Pi, Pi(I-P)=0 to 1e-11; norm equivalence with 1/2 and C_k."""
    grid = PhaseGrid(SpatialGrid(1, 8), VelocityGrid(32, 10.0))
    rng = np.random.default_rng(109)
    mu = maxwellian(grid.velocity)
    ve = grid.velocity
    x = grid.spatial.coordinate(0)[:, None, None, None]
    worst = {"P": 0.0, "Pi": 0.0, "PiIP": 0.0}
    for _ in range(5):
        c = rng.standard_normal(5)
        f1 = (1 + 0.4 * c[0] * np.cos(x)) * mu * (
            c[1] + 0.2 * c[2] * ve.coordinate(0) + 0.1 * ve.speed_squared())
        f2 = (1 - 0.3 * np.sin(x) * c[3]) * mu * (
            1 + 0.2 * c[4] * ve.coordinate(1) * ve.coordinate(2))
        st = SystemState(grid, f1, f2)
        scale = max(l2_norm(grid, f1), l2_norm(grid, f2))
        p1 = project_P(st)
        p2 = project_P(st.with_fields(*p1))
        worst["P"] = max(worst["P"], max(
            l2_norm(grid, p2[i] - p1[i]) for i in range(2)) / scale)
        q1 = project_Pi(st)
        q2 = project_Pi(st.with_fields(*q1))
        worst["Pi"] = max(worst["Pi"], max(
            l2_norm(grid, q2[i] - q1[i]) for i in range(2)) / scale)
        micro = st.with_fields(f1 - p1[0], f2 - p1[1])
        r = project_Pi(micro)
        worst["PiIP"] = max(worst["PiIP"], max(
            l2_norm(grid, r[i]) for i in range(2)) / scale)
    algebra_ok = all(v <= 1e-11 for v in worst.values())

    k = 4.0
    upper = projection_upper_constant(grid, k)
    equiv_ok = True
    for _ in range(100):
        c = rng.standard_normal(6)
        f1 = mu * (c[0] + 0.3 * c[1] * ve.coordinate(0)
                   + 0.2 * c[2] * ve.speed_squared()) * (1 + 0.2 * np.cos(x))
        f2 = mu * (c[3] + 0.2 * c[4] * ve.coordinate(1)
                   + 0.1 * c[5] * ve.coordinate(2) ** 2) * np.ones(grid.shape)
        st = SystemState(grid, f1, f2)
        pp, pm = project_P(st)
        total = (weights.norm_L2k(grid, f1, k) ** 2
                 + weights.norm_L2k(grid, f2, k) ** 2)
        split = (weights.norm_L2k(grid, pp, k) ** 2
                 + weights.norm_L2k(grid, pm, k) ** 2
                 + weights.norm_L2k(grid, f1 - pp, k) ** 2
                 + weights.norm_L2k(grid, f2 - pm, k) ** 2)
        if not (0.5 * total * (1 - 1e-12) <= split
                <= upper * total * (1 + 1e-12)):
            equiv_ok = False
    ok = algebra_ok and equiv_ok
    line = report(
        9, ok,
        f"P/Pi/Pi(I-P) defects {worst['P']:.1e}/{worst['Pi']:.1e}/"
        f"{worst['PiIP']:.1e} <= 1e-11; equivalence 1/2 <= split/total <= "
        f"C_k={upper:.1f} held on 100 fields: {equiv_ok}")
    assert ok, line


def test_criterion_10_picard_contraction():
    """Implicit-collision mode contracts (< 1 ratios) within 10 iterations."""
    grid = PhaseGrid(SpatialGrid(1, 4), VelocityGrid(16, 8.0))
    tables = landau.build_kernel_tables(-1.0, grid.velocity, measure=False)
    state = initial.make_initial_condition(grid, amplitude=1e-3, seed=110)
    cfg = dynamics.TimeStepConfig(dt=1e-2, scheme="picard_implicit",
                                  picard_tol=1e-12, picard_max_iters=10)
    out, iters, ratios = dynamics.collision_step(state, 1e-2, cfg, tables)
    ok = iters <= 10 and len(ratios) >= 1 and all(r < 1.0 for r in ratios)
    line = report(10, ok, f"converged in {iters} iterations at dt=1e-2; "
                          f"contraction ratios {[f'{r:.3f}' for r in ratios]}"
                          f" all < 1")
    assert ok, line


def test_criterion_11_determinism_and_checkpointing(tmp_path):
    """Byte-identical outputs across thread counts; bit-exact resume."""
    ini = tmp_path / "run.ini"
    ini.write_text(f"""
[model]
model = landau
gamma = -3.0
k = 10.0

[grid]
n_x = 8
n_v = 16

[time]
dt = 0.01
t_final = 0.03

[initial]
family = random_bandlimited
amplitude = 1e-4
modes = 2
seed = 77

[output]
directory = {tmp_path}/out
""")
    csvs = {}
    for threads in ("1", "2"):
        env = dict(os.environ)
        env["VPLANDAU_THREADS"] = threads
        out_dir = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "vplandau.cli", "run", str(ini)],
            capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        csvs[threads] = (out_dir / "series.csv").read_bytes()
    identical = csvs["1"] == csvs["2"]

    grid = PhaseGrid(SpatialGrid(1, 8), VelocityGrid(16, 8.0))
    tables = landau.build_kernel_tables(-3.0, grid.velocity, measure=False)
    cfg = dynamics.TimeStepConfig(dt=0.01)
    ic = initial.make_initial_condition(grid, amplitude=1e-4, seed=78)
    straight = dynamics.advance(ic.clone(), 0.06, cfg, tables)
    half = dynamics.advance(ic.clone(), 0.03, cfg, tables)
    chk = tmp_path / "mid.npz"
    save_checkpoint(chk, half)
    resumed = dynamics.advance(load_checkpoint(chk), 0.06, cfg, tables)
    bit_exact = (np.array_equal(straight.f_plus, resumed.f_plus)
                 and np.array_equal(straight.f_minus, resumed.f_minus)
                 and straight.time == resumed.time)
    ok = identical and bit_exact
    line = report(11, ok, f"CSV byte-identical across VPLANDAU_THREADS 1/2: "
                          f"{identical}; checkpoint resume bit-exact: "
                          f"{bit_exact}")
    assert ok, line

"""Experiment drivers binding the library together.

Three modes share the RunConfig surface:

* ``operator_test``: collision FFT-vs-oracle agreement, the weight
  inequality suite (including the corrupted-r counterexample), the
  projection algebra suite and the collision invariant moments.  No time
  evolution; the instantaneous entropy production of a random positive
  state is reported as the H-theorem monitor.
* ``nonlinear``: full system evolution with per-step diagnostics, decay
  fits and conservation drifts.
* ``linearized``: the linearized large-time decay experiment.

Artifacts: a CSV time series, a JSON summary (schema version below), and
optional checkpoints.  Exit status doubles as the pass/fail signal of each
mode's built-in assertions.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict

import numpy as np
import scipy.fft as sfft

from . import diagnostics, dynamics, initial, landau, poisson, weights
from .grid import PhaseGrid, SpatialGrid, VelocityGrid, l2_norm
from .state import SystemState, maxwellian, project_P, project_Pi, save_checkpoint

SCHEMA_VERSION = 1

# thresholds enforced by the built-in assertions of each mode
FFT_ORACLE_TOL = 1e-8
MASS_MOMENT_TOL = 1e-12
CORRECTED_MOMENT_TOL = 1e-12
PROJECTION_TOL = 1e-11
CONSERVATION_TOL = 1e-8
LINEARIZED_DRIFT_TOL = 1e-9


def _random_bandlimited_v(rng, velocity_grid, kmax=3, n_modes=30):
    n = velocity_grid.n_v
    c = np.zeros((n, n, n), dtype=complex)
    for _ in range(n_modes):
        m = rng.integers(-kmax, kmax + 1, size=3)
        c[m[0] % n, m[1] % n, m[2] % n] += (rng.standard_normal()
                                            + 1j * rng.standard_normal())
    f = sfft.ifftn(c).real
    peak = np.max(np.abs(f))
    return f / (peak if peak > 0 else 1.0)


def operator_test(cfg):
    """Operator-level verification; returns (summary dict, passed bool)."""
    ve = VelocityGrid(cfg.n_v, cfg.cutoff)
    rng = np.random.default_rng(cfg.seed)
    gammas = sorted({cfg.gamma, -3.0, -1.0, 0.0, 1.0})
    pair_errors = {}
    eps_ops = {}
    for gam in gammas:
        tables = landau.build_kernel_tables(gam, ve)
        eps_ops[f"{gam:g}"] = tables.epsilon_op
        worst = 0.0
        for _ in range(5):
            g = _random_bandlimited_v(rng, ve)
            f = _random_bandlimited_v(rng, ve)
            qf = landau.q_landau_fft(g, f, tables)
            qd = landau.q_landau_direct(g, f, gam, ve)
            denom = math.sqrt(float(np.sum(qd**2)))
            if denom > 0:
                err = math.sqrt(float(np.sum((qf - qd) ** 2))) / denom
                worst = max(worst, err)
        pair_errors[f"{gam:g}"] = worst
    fft_oracle_max = max(pair_errors.values())

    # weight suite at the configured spec plus the corrupted-r counterexample
    spec = cfg.weight_spec()
    pts = rng.uniform(-cfg.cutoff, cfg.cutoff, size=(1000, 3))
    suite = weights.weight_inequality_suite(spec, pts)
    n_checked = sum(r.n_checked for r in suite)
    n_failed = sum(r.n_failed for r in suite)
    corrupted = weights.weight_inequality_suite(spec, pts,
                                                r_override=2.0 * spec.q)
    corrupted_floor_failures = sum(
        r.n_failed for r in corrupted if r.name.startswith("floor"))

    # projection algebra on a truncation-clean grid
    pg = PhaseGrid(SpatialGrid(1, 8), VelocityGrid(32, 10.0))
    mu = maxwellian(pg.velocity)
    xpad = (...,) + (None, None, None)
    defects = {"p_idempotent": 0.0, "pi_idempotent": 0.0, "pi_of_micro": 0.0}
    for _ in range(3):
        pattern = 1.0 + 0.5 * np.cos(pg.spatial.coordinate(0))
        shape = rng.standard_normal(3)
        fp = 1e-2 * pattern[xpad] * (
            mu * (shape[0] + shape[1] * pg.velocity.coordinate(0)
                  + shape[2] * pg.velocity.speed_squared()))
        fm = 1e-2 * np.roll(pattern, 1)[xpad] * mu * rng.standard_normal()
        st = SystemState(pg, fp, fm)
        p1p, p1m = project_P(st)
        st_p = st.with_fields(p1p, p1m)
        p2p, p2m = project_P(st_p)
        scale = max(l2_norm(pg, fp), l2_norm(pg, fm))
        defects["p_idempotent"] = max(
            defects["p_idempotent"],
            max(l2_norm(pg, p2p - p1p), l2_norm(pg, p2m - p1m)) / scale)
        q1p, q1m = project_Pi(st)
        st_q = st.with_fields(q1p, q1m)
        q2p, q2m = project_Pi(st_q)
        defects["pi_idempotent"] = max(
            defects["pi_idempotent"],
            max(l2_norm(pg, q2p - q1p), l2_norm(pg, q2m - q1m)) / scale)
        micro = st.with_fields(fp - p1p, fm - p1m)
        rp, rm = project_Pi(micro)
        defects["pi_of_micro"] = max(
            defects["pi_of_micro"],
            max(l2_norm(pg, rp), l2_norm(pg, rm)) / scale)

    # collision invariants on random data at the configured gamma
    tables = landau.build_kernel_tables(cfg.gamma, ve, measure=False)
    corr = landau.ConservativeCorrector(ve)
    g = _random_bandlimited_v(rng, ve)
    f = _random_bandlimited_v(rng, ve)
    q = landau.q_landau_fft(g, f, tables)
    w = ve.node_weight
    norm_g = math.sqrt(float(np.sum(g**2)) * w)
    norm_f = math.sqrt(float(np.sum(f**2)) * w)
    mass_moment = abs(float(np.sum(q)) * w) / (norm_g * norm_f)
    sgrid = PhaseGrid(SpatialGrid(1, 4), VelocityGrid(cfg.n_v, cfg.cutoff))
    ic = initial.make_initial_condition(sgrid, amplitude=1e-3, seed=cfg.seed)
    rhs_p, rhs_m = landau.apply_collision_field(ic, tables, conservative=True,
                                                corrector=corr)
    mom = corr.moments(rhs_p) + corr.moments(rhs_m)
    corrected_max = float(np.max(np.abs(mom[1:])))

    # instantaneous entropy production of a positive random state
    full_p = maxwellian(sgrid.velocity) + ic.f_plus
    full_m = maxwellian(sgrid.velocity) + ic.f_minus
    ds = 0.0
    for full, rhs in ((full_p, rhs_p), (full_m, rhs_m)):
        ds += float(np.sum(np.log(np.maximum(full, 1e-300)) * rhs)) \
            * sgrid.cell_volume
    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": "operator_test",
        "fft_oracle_rel_error": pair_errors,
        "fft_oracle_max_rel_error": fft_oracle_max,
        "epsilon_op": eps_ops,
        "weight_suite": {"checked": n_checked, "failed": n_failed},
        "corrupted_r_floor_failures": corrupted_floor_failures,
        "projection_defects": defects,
        "collision_mass_moment_rel": mass_moment,
        "corrected_moment_max": corrected_max,
        "entropy_production": ds,
        "config": cfg.echo(),
    }
    passed = (
        fft_oracle_max <= FFT_ORACLE_TOL
        and n_failed == 0
        and corrupted_floor_failures > 0
        and max(defects.values()) <= PROJECTION_TOL
        and mass_moment <= MASS_MOMENT_TOL
        and corrected_max <= CORRECTED_MOMENT_TOL
    )
    summary["passed"] = passed
    return summary, passed


def _make_state(cfg, grid):
    return initial.make_initial_condition(
        grid, family=cfg.family, amplitude=cfg.amplitude, modes=cfg.modes,
        profile=cfg.profile, tail_power=cfg.tail_power, species=cfg.species,
        seed=cfg.seed)


def nonlinear_run(cfg):
    """Full-system evolution with diagnostics; returns (summary, passed)."""
    grid = cfg.phase_grid()
    spec = cfg.weight_spec()
    tables = landau.build_kernel_tables(cfg.gamma, grid.velocity)
    state = _make_state(cfg, grid)
    recorder = diagnostics.Recorder(spec, state.clone(),
                                    cadence=cfg.record_every,
                                    epsilon_op=tables.epsilon_op)
    tcfg = dynamics.TimeStepConfig(
        dt=cfg.dt, scheme=cfg.scheme, picard_tol=cfg.picard_tol,
        picard_max_iters=cfg.picard_max_iters,
        conservative_correction=cfg.conservative_correction,
        workers=cfg.workers)
    os.makedirs(cfg.directory, exist_ok=True)

    def sink(s, info):
        recorder(s, info)
        if cfg.checkpoint_every and info.step % cfg.checkpoint_every == 0:
            save_checkpoint(os.path.join(
                cfg.directory, f"checkpoint_{info.step:06d}.npz"), s)

    final = dynamics.advance(state, cfg.t_final, tcfg, tables, sink=sink)
    report = recorder.conservation_report(final)
    recorder.to_csv(os.path.join(cfg.directory, cfg.csv))

    times = recorder.times()
    eks = recorder.series("e_k")
    fits = {}
    flags = {"conservation": report.max_relative_drift() <= CONSERVATION_TOL}
    modes = (["exponential"] if cfg.gamma >= 0 else
             ["exponential", "polynomial"]) \
        if cfg.fit_mode == "auto" else [cfg.fit_mode]
    for mode in modes:
        try:
            fits[mode] = asdict(diagnostics.fit_decay(
                times, eks, mode, transient_fraction=cfg.transient_fraction))
        except Exception as exc:  # short series: fits are advisory here
            fits[mode] = {"error": str(exc)}
    if cfg.gamma >= 0 and "exponential" in fits and "rate" in fits["exponential"]:
        flags["decay"] = (fits["exponential"]["rate"] > 0
                          and fits["exponential"]["r_squared"] >= 0.99)
    min_pos = min(recorder.series("min_fplus").min(),
                  recorder.series("min_fminus").min())
    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": "nonlinear",
        "conservation": {
            "mass_plus": report.rel_mass_plus,
            "mass_minus": report.rel_mass_minus,
            "momentum": report.rel_momentum,
            "energy": report.rel_energy,
            "max_relative_drift": report.max_relative_drift(),
        },
        "fits": fits,
        "epsilon_op": tables.epsilon_op,
        "min_full_distribution": float(min_pos),
        "positivity_maintained": bool(min_pos > 0),
        "records": len(recorder.records),
        "final_time": final.time,
        "flags": flags,
        "config": cfg.echo(),
    }
    passed = all(flags.values())
    summary["passed"] = passed
    diagnostics.summary_to_json(os.path.join(cfg.directory, cfg.summary),
                                summary)
    return summary, passed


def linearized_run(cfg):
    """Linearized decay experiment; returns (summary, passed)."""
    grid = cfg.phase_grid()
    spec = cfg.weight_spec()
    tables = landau.build_kernel_tables(cfg.gamma, grid.velocity)
    state = _make_state(cfg, grid)
    result = diagnostics.linearized_decay_experiment(
        state, tables, spec, cfg.dt, cfg.t_final,
        fit_mode="exponential" if cfg.gamma >= 0 else "polynomial",
        cadence=cfg.record_every,
        transient_fraction=cfg.transient_fraction,
        conservative_correction=cfg.conservative_correction)
    os.makedirs(cfg.directory, exist_ok=True)
    series_path = os.path.join(cfg.directory, cfg.csv)
    with open(series_path, "w") as fh:
        fh.write("time,micro_norm,macro_norm,e_k\n")
        for t, mi, ma, ek in zip(result.times, result.micro_norms,
                                 result.macro_norms, result.e_k_series):
            fh.write(f"{t!r},{mi!r},{ma!r},{ek!r}\n")
    micro_energy = result.micro_norms**2
    decayed = micro_energy[-1] < micro_energy[0]
    flags = {
        "conservation": result.conservation_max_drift <= LINEARIZED_DRIFT_TOL,
        "decayed": bool(decayed),
    }
    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": "linearized",
        "fit_exponential": asdict(result.fit_exponential),
        "fit_polynomial": asdict(result.fit_polynomial),
        "subexponential": result.fit_polynomial.r_squared
        > result.fit_exponential.r_squared,
        "conservation_max_drift": result.conservation_max_drift,
        "flags": flags,
        "config": cfg.echo(),
    }
    passed = all(flags.values())
    summary["passed"] = passed
    diagnostics.summary_to_json(os.path.join(cfg.directory, cfg.summary),
                                summary)
    return summary, passed


def run_experiment(cfg):
    """Dispatch on the configured mode; returns (summary, passed)."""
    if cfg.mode == "operator_test":
        summary, passed = operator_test(cfg)
        os.makedirs(cfg.directory, exist_ok=True)
        diagnostics.summary_to_json(os.path.join(cfg.directory, cfg.summary),
                                    summary)
        return summary, passed
    if cfg.mode == "nonlinear":
        return nonlinear_run(cfg)
    if cfg.mode == "linearized":
        return linearized_run(cfg)
    raise ValueError(f"unknown mode {cfg.mode!r}")

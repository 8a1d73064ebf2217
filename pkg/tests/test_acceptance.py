"""Acceptance gate: one test per shipped criterion, each printing PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are fixed here and nowhere else.
"""

import math
import time

import numpy as np
import pytest

import mollipde.backend as backend
from mollipde import accounting
from mollipde.calculus import (
    convergence_sweep,
    envelope_bound,
    fit_error_envelope,
    laplacian,
    loglog_slope,
    mollify,
)
from mollipde.experiment import preset_config, run
from mollipde.grids import GridField
from mollipde.kernels import KernelFamily, MollifierKernel, discretize
from mollipde.network import NeuralField
from mollipde.residuals import (
    SampleMask,
    forward_ode_problem,
    heat_problem,
    langevin_problem,
    reaction_diffusion_problem,
    residual_heat,
    residual_langevin,
    residual_reaction_diffusion,
    total_loss,
)
from mollipde.synth import (
    HeatSpec,
    LangevinSpec,
    RdSpec,
    simulate_heat,
    simulate_langevin,
    simulate_reaction_diffusion,
)


def _report(criterion: int, ok: bool, detail: str):
    print(f"[acceptance {criterion:02d}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


# -- 1. derivative exactness -------------------------------------------------

def test_criterion_01_stencil_monomial_exactness():
    h = 0.02
    x = h * np.arange(51)
    kernel = MollifierKernel(KernelFamily.EXP_BUMP, 0.1, dimension=1)
    worst = 0.0
    ok = True
    for order in range(5):
        s = discretize(kernel, h, (order,))
        radius = s.radius
        fp_floor = 100 * np.finfo(float).eps * np.abs(s.taps).sum()
        for p in range(order + 2):
            out = backend.correlate1d(x ** p, s.taps)
            if p >= order:
                exact = (math.factorial(p) / math.factorial(p - order)) * x ** (p - order)
            else:
                exact = np.zeros_like(x)
            err = np.abs(out[radius:-radius] - exact[radius:-radius])
            # 1e-10 relative, plus the cancellation floor of the tap sum
            # (order-4 taps are O(1/h^4); double precision cannot cancel
            # tighter than ~100 eps of their magnitude)
            bound = 1e-10 * np.maximum(1.0, np.abs(exact[radius:-radius])) + fp_floor
            worst = max(worst, float(np.max(err / bound)))
            ok = ok and bool(np.all(err <= bound))
    _report(1, ok, f"monomial derivative exactness, worst err/bound = {worst:.3f}")


# -- 2. convergence law -------------------------------------------------------

def test_criterion_02_convergence_law():
    hs = [1 / 64, 1 / 128, 1 / 256, 1 / 512]
    rows = convergence_sweep("sin2pi", "exp_bump", [(h, math.sqrt(h)) for h in hs])
    slope = loglog_slope(rows)
    slope_ok = 0.35 <= slope <= 1.2
    errs = []
    for eps in (0.0, 1e-3, 1e-2):
        r = convergence_sweep("sin2pi", "exp_bump",
                              [(1 / 128, math.sqrt(1 / 128))],
                              noise_amplitude=eps, seed=11)
        errs.append(r[0].uniform_error)
    mono_ok = errs[0] <= errs[1] <= errs[2]
    _report(2, slope_ok and mono_ok,
            f"log-log slope {slope:.3f} in [0.35, 1.2]; "
            f"errors monotone in noise {[f'{e:.2e}' for e in errs]}")


# -- 3. gradient oracle --------------------------------------------------------

def _fd_check(problem, data, mask, kernel, net, n_params=40):
    g_field, lam_field, state = net.forward_on_grid(data)
    _, cot_g, cot_lambda = total_loss(problem, g_field, lam_field, data, mask, kernel)
    tape = net.backward_on_grid(state, cot_g, cot_lambda)
    p0 = net.get_parameters()
    eps = 1e-5
    idx = np.random.default_rng(0).choice(p0.size, size=min(n_params, p0.size),
                                          replace=False)
    worst = 0.0
    for i in idx:
        p = p0.copy()
        p[i] += eps
        net.set_parameters(p)
        gf, lf, _ = net.forward_on_grid(data)
        up = total_loss(problem, gf, lf, data, mask, kernel)[0].mse_total
        p[i] -= 2 * eps
        net.set_parameters(p)
        gf, lf, _ = net.forward_on_grid(data)
        dn = total_loss(problem, gf, lf, data, mask, kernel)[0].mse_total
        fd = (up - dn) / (2 * eps)
        an = tape.values[i]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    net.set_parameters(p0)
    return worst


def test_criterion_03_gradient_oracle():
    worsts = {}
    data1 = GridField(np.sin(np.linspace(0, 1, 30)), spacing=(1 / 29,))
    k1 = MollifierKernel(KernelFamily.EXP_BUMP, 0.08, dimension=1)
    net = NeuralField(1, width=8, depth=2, fourier_count=4, seed=3)
    worsts["langevin"] = _fd_check(langevin_problem("head"), data1,
                                   SampleMask.full(data1), k1, net)

    u, lam, m = simulate_heat(HeatSpec(shape=(16, 16)))
    k2 = MollifierKernel(KernelFamily.EXP_BUMP, 3.2 / 15, dimension=2)
    net2 = NeuralField(2, width=8, depth=2, fourier_count=4, seed=4)
    worsts["heat"] = _fd_check(heat_problem(m, "head"), u, SampleMask.full(u),
                               k2, net2)

    spec = RdSpec(shape=(18, 18), max_steps=200, steady_tol=1e9)
    phi_d, phi_n, _, _ = simulate_reaction_diffusion(spec)
    k3 = MollifierKernel(KernelFamily.EXP_BUMP, 0.15, dimension=2)
    prob3 = reaction_diffusion_problem(phi_n, 0.8, 0.12, estimator="head")
    net3 = NeuralField(2, width=8, depth=2, fourier_count=4, seed=5)
    worsts["reaction_diffusion"] = _fd_check(prob3, phi_d, SampleMask.full(phi_d),
                                             k3, net3)

    data4 = GridField(np.zeros(31), spacing=(0.05,), origin=(-0.25,))
    vals = data4.values.copy()
    vals[5] = 1.0
    data4 = data4.with_values(vals)
    k4 = MollifierKernel(KernelFamily.EXP_BUMP, 0.25, dimension=1)
    net4 = NeuralField(1, width=8, depth=2, fourier_count=4, seed=6)
    worsts["forward"] = _fd_check(forward_ode_problem(1.0), data4,
                                  SampleMask(indices=np.array([5])), k4, net4)

    ok = all(w <= 1e-4 for w in worsts.values())
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worsts.items())
    _report(3, ok, f"finite-difference gradient agreement (rel): {detail}")


# -- 4. Langevin constant forcing ----------------------------------------------

def test_criterion_04_langevin(tmp_path):
    t0 = time.time()
    report = run(preset_config("langevin-constant"), tmp_path / "lc")
    rel = report["seeds"][0]["mean_rel_error"]
    noise_report = run(preset_config("langevin-noise"), tmp_path / "ln")
    noise_corr = noise_report["aggregate"]["mean_noise_corr"]
    elapsed = time.time() - t0
    ok = rel <= 0.05 and noise_corr >= 0.7 and elapsed < 300
    _report(4, ok, f"mean forcing within {rel:.2%} of -1 (<=5%); "
                   f"noise-trend corr {noise_corr:.3f} over 5 seeds (>=0.7); "
                   f"{elapsed:.0f}s (<300s)")


# -- 5. heat inverse -------------------------------------------------------------

def test_criterion_05_heat(tmp_path):
    t0 = time.time()
    report = run(preset_config("heat-varying"), tmp_path / "heat")
    s = report["seeds"][0]
    elapsed = time.time() - t0
    ok = (s["trend_corr"] >= 0.9 and s["laplacian_corr"] >= 0.95
          and elapsed < 600)
    _report(5, ok, f"spatial corr {s['trend_corr']:.4f} (>=0.9), laplacian corr "
                   f"{s['laplacian_corr']:.4f} (>=0.95); {elapsed:.0f}s (<600s)")


# -- 6. reaction-diffusion inverse -----------------------------------------------

def test_criterion_06_reaction_diffusion(tmp_path):
    t0 = time.time()
    report = run(preset_config("rd-twolevel"), tmp_path / "rd")
    agg = report["aggregate"]
    lap = agg["mean_laplacian_corr"]
    spatial = agg["mean_trend_corr"]
    mean_corr = agg["mean_corr"]
    elapsed = time.time() - t0
    ok = (mean_corr >= 0.9 and spatial >= 0.6 and lap >= 0.6 and elapsed < 900)
    _report(6, ok, f"mean corr {mean_corr:.4f} (>=0.9), spatial {spatial:.4f} "
                   f"(>=0.6), laplacian {lap:.4f} (>=0.6); {elapsed:.0f}s (<900s)")


# -- 7. forward toy ----------------------------------------------------------------

def test_criterion_07_forward_toy(tmp_path):
    t0 = time.time()
    report = run(preset_config("forward-toy"), tmp_path / "toy")
    rel = report["max_relative_interior_error"]
    elapsed = time.time() - t0
    ok = rel <= 0.02 and elapsed < 180
    _report(7, ok, f"max relative interior error {rel:.2%} after 5000 epochs "
                   f"(<=2%); {elapsed:.0f}s (<180s)")


# -- 8. depth independence -----------------------------------------------------------

def test_criterion_08_depth_independence():
    h = 1 / 127
    kernel = MollifierKernel(KernelFamily.EXP_BUMP, 3.2 * h, dimension=2)
    xs = h * np.arange(128)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    data = GridField(np.sin(2 * np.pi * gx) * np.sin(2 * np.pi * gy),
                     spacing=(h, h))
    m = data.with_values(8 * np.pi ** 2 * data.values)
    problem = heat_problem(m, "head")
    mask = SampleMask.full(data)

    counts = {}
    times = {}
    for depth in (2, 4, 8):
        net = NeuralField(2, width=16, depth=depth, fourier_count=8, seed=depth)
        g_field, lam_field, _ = net.forward_on_grid(data)
        # warm the jit and the stencil cache before measuring
        total_loss(problem, g_field, lam_field, data, mask, kernel)
        reps = []
        for _ in range(10):
            counters = accounting.ResourceCounters()
            with accounting.track(counters):
                total_loss(problem, g_field, lam_field, data, mask, kernel)
            reps.append(counters.derivative_seconds)
            counts.setdefault(depth, counters.derivative_arrays)
        # best-of-N isolates the deterministic work from scheduler noise
        times[depth] = float(np.min(reps))

    same_count = len(set(counts.values())) == 1
    spread = (max(times.values()) - min(times.values())) / max(times.values())
    ok = same_count and spread <= 0.10
    _report(8, ok, f"derivative arrays per residual: {counts} (identical); "
                   f"derivative-eval time spread {spread:.1%} (<=10%)")


# -- 9. imaging round trip --------------------------------------------------------------

def test_criterion_09_imaging_round_trip():
    from mollipde.imaging import to_phase_fields
    from tests.test_imaging import binary_round_trip, blob_density

    t0 = time.time()
    density = blob_density()
    z, _ = binary_round_trip(density, total=100_000, seed=3)
    corr = float(np.corrcoef(z.values.ravel(), density.values.ravel())[0, 1])
    phi_h, phi_n, phi_e, _ = to_phase_fields(z)
    identity = float(np.max(np.abs(phi_h.values + phi_n.values + phi_e.values - 1.0)))
    elapsed = time.time() - t0
    ok = corr >= 0.95 and identity <= 1e-12 and elapsed < 60
    _report(9, ok, f"round-trip corr {corr:.4f} (>=0.95); phase identity "
                   f"max |dev| {identity:.1e} (<=1e-12); {elapsed:.0f}s (<60s)")


# -- 10. simulator closure ------------------------------------------------------------------

def test_criterion_10_simulator_closure():
    t0 = time.time()
    details = []
    ok = True

    # Langevin: residual of the exact trajectory under the fitted error
    # envelope C1 delta + C2 (h + eps) from the refinement harness
    h, radius = 0.01, 0.03
    sweep = convergence_sweep("sin2pi", "exp_bump",
                              [(hh, math.sqrt(hh)) for hh in (1/64, 1/128, 1/256)])
    c1, c2 = fit_error_envelope(sweep)
    u, lam_true = simulate_langevin(LangevinSpec(sigma=0.0))
    kernel = MollifierKernel(KernelFamily.EXP_BUMP, radius, dimension=1)
    f = residual_langevin(mollify(u, discretize(kernel, h, (0,))),
                          mollify(u, discretize(kernel, h, (1,))), lam_true)
    lan_max = float(np.max(np.abs(f.interior_values())))
    lan_bound = envelope_bound(c1, c2, h, radius, 0.0, safety=5.0) + 1e-8
    ok &= lan_max <= lan_bound
    details.append(f"langevin max |f| {lan_max:.2e} <= {lan_bound:.2e}")

    # Heat: manufactured pair leaves only the laplacian smoothing bias;
    # configured envelope is 5% of the source-term scale
    u2, lam2, m2 = simulate_heat(HeatSpec(diffusivity="sine_x", shape=(64, 64)))
    k2 = MollifierKernel(KernelFamily.EXP_BUMP, 3.2 / 63, dimension=2)
    f2 = residual_heat(laplacian(u2, k2), lam2, m2)
    heat_rms = float(np.sqrt(np.mean(f2.interior_values() ** 2)))
    heat_bound = 0.05 * float(np.sqrt(np.mean(m2.values ** 2)))
    ok &= heat_rms <= heat_bound
    details.append(f"heat residual rms {heat_rms:.3f} <= {heat_bound:.3f}")

    # Reaction-diffusion: steady state residual within 10x the solver's own
    # steady-state tolerance (the gate's configured tolerance; the residual
    # floor is the smoothed-stencil vs five-point discretization mismatch)
    spec = RdSpec(shape=(32, 32), steady_tol=1e-2, seed=0)
    phi_d, phi_n, lam_rd, diag = simulate_reaction_diffusion(spec)
    k3 = MollifierKernel(KernelFamily.EXP_BUMP, 0.15, dimension=2)
    f3 = residual_reaction_diffusion(phi_d, phi_n, lam_rd, k3,
                                     spec.interface_width, spec.phi_max)
    rd_rms = float(np.sqrt(np.mean(f3.interior_values() ** 2)))
    rd_bound = 10.0 * spec.steady_tol
    ok &= rd_rms <= rd_bound
    details.append(f"rd residual rms {rd_rms:.2e} <= {rd_bound:.2e}")

    elapsed = time.time() - t0
    ok = ok and elapsed < 120
    _report(10, bool(ok), "; ".join(details) + f"; {elapsed:.0f}s (<120s)")

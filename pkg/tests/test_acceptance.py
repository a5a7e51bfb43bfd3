"""Acceptance suite: one test per exit criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.  The heavier reconstruction criteria (5-8) take a
couple of minutes combined on a laptop-class machine.
"""

import re
import time

import numpy as np
import pytest

from geocs import (
    EdgeStopFn,
    SolverParams,
    build_system,
    cli,
    phantom,
    radial_mask,
    relerr_ratio,
    sample,
    shearlet,
    shrink,
    solver,
)
from oracles import (
    dense_diff_matrices,
    dense_mask_operator,
    dense_unitary_dft,
    golden_shrink_min,
    normal_equation_residual,
    random_solver_state,
)


def report(number, name):
    print(f"ACCEPTANCE {number:2d} PASS: {name}")


def test_criterion_01_shearlet_tight_frame():
    started = time.perf_counter()
    system = build_system(64, scales=3)
    assert system.nbands == 13
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal((64, 64))
        stack = shearlet.analyze(system, u)
        energy_err = abs(float((np.abs(stack.bands) ** 2).sum()) / float((u**2).sum()) - 1.0)
        assert energy_err < 1e-10
        rec = shearlet.adjoint(system, stack)
        assert np.linalg.norm(rec - u) / np.linalg.norm(u) < 1e-10
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    report(1, f"tight frame, 13 subbands, round trip < 1e-10 ({elapsed:.2f} s)")


def test_criterion_02_u_update_correctness():
    started = time.perf_counter()
    rng = np.random.default_rng(1)

    # normal-equation residual on random 32x32 states
    n = 32
    system = build_system(n, scales=3)
    mask = radial_mask(n, 6)
    params = SolverParams()
    pre = solver.precompute(system, mask.keep, params)
    worst = 0.0
    for _ in range(3):
        state = random_solver_state(n, system.nbands, rng)
        b_spec = np.where(
            mask.keep, rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 0
        )
        u = solver.u_update(state, pre, params, b_spec)
        res = normal_equation_residual(u, state, system, mask.keep, params, b_spec)
        worst = max(worst, float(np.abs(res).max()))
    assert worst < 1e-8

    # dense linear solve at n = 8 (synthetic mask bank)
    n = 8
    nbands = 3
    masks = rng.random((nbands, n, n)) + 0.1
    keep = rng.random((n, n)) < 0.4
    keep[0, 0] = True
    params8 = SolverParams(beta=1e-3, lam=2e-3, mu=50.0, tau=80.0)
    state = random_solver_state(n, nbands, rng)
    b_spec = np.where(keep, rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 0)
    u = solver.u_update(state, solver.precompute(masks, keep, params8), params8, b_spec)

    f_dense = dense_unitary_dft(n)
    d1, d2 = dense_diff_matrices(n)
    bmu, ltau = params8.beta * params8.mu, params8.lam * params8.tau
    system_mat = bmu * (d1.T @ d1 + d2.T @ d2).astype(complex)
    rhs = bmu * (d1.T @ (state.r1 - state.v1).ravel() + d2.T @ (state.r2 - state.v2).ravel())
    for i in range(nbands):
        m_i = dense_mask_operator(masks[i], f_dense)
        system_mat += ltau * (m_i.conj().T @ m_i)
        rhs = rhs + ltau * (m_i.conj().T @ (state.s[i] - state.t[i]).ravel())
    system_mat += f_dense.conj().T @ np.diag(keep.ravel().astype(float)) @ f_dense
    rhs = rhs + f_dense.conj().T @ b_spec.ravel()
    dense_u = np.linalg.solve(system_mat, rhs).reshape(n, n)
    dense_err = float(np.abs(u - dense_u).max())
    assert dense_err < 1e-8

    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    report(2, f"u-update residual {worst:.1e}, dense match {dense_err:.1e} ({elapsed:.2f} s)")


def test_criterion_03_shrinkage_optimality():
    rng = np.random.default_rng(2)
    v = rng.uniform(-3, 3, 10_000)
    delta = rng.uniform(0, 2, 10_000)
    got = shrink(v, delta)
    worst = max(abs(got[i] - golden_shrink_min(v[i], delta[i])) for i in range(v.size))
    assert worst < 1e-8
    report(3, f"shrink matches scalar-minimization oracle to {worst:.1e} on 1e4 pairs")


def test_criterion_04_sampling_rate_calibration():
    rate40 = radial_mask(512, 40).rate
    rate100 = radial_mask(512, 100).rate
    assert abs(rate40 - 0.0879) < 0.005
    assert abs(rate100 - 0.2087) < 0.005
    report(4, f"radial rates {100 * rate40:.2f}% (target 8.79) and "
              f"{100 * rate100:.2f}% (target 20.87), within 0.5 pp")


def test_criterion_05_convergence_within_budgets():
    started = time.perf_counter()
    n = 128
    truth = phantom("shepp_logan", n)
    meas = sample(truth, radial_mask(n, 30))
    params = SolverParams(gamma=1.0, mu=100.0, tau=100.0, beta=1e-5, lam=1e-5,
                          tol_inner=1e-5, max_iter_stage1=1000)
    system = build_system(n, 3)
    _, state = solver.stage1(meas, params, system)
    iters1 = state.iterations
    assert iters1 <= 1000
    assert state.last_delta < 1e-5  # converged, did not just hit the cap
    _, state = solver.stage2(state, meas, params, system, EdgeStopFn(kind="tukey", h=0.1))
    iters2 = state.iterations - iters1
    assert 1 <= iters2 <= params.stage2_budget == 100
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    report(5, f"stage I converged in {iters1} iters, stage II used {iters2}/100 "
              f"({elapsed:.1f} s)")


def test_criterion_06_two_stage_benefit():
    n = 128
    system = build_system(n, 3)
    params = SolverParams()  # noise-free defaults: beta = lam = 1e-5
    edge = EdgeStopFn(kind="tukey", h=0.1)
    improvements = []
    for kind in ("shepp_logan", "smooth_bumps", "textured"):
        truth = phantom(kind, n)
        for lines in (11, 16):  # measured rates 9.41% and 12.72%
            mask = radial_mask(n, lines)
            assert abs(mask.rate - {11: 0.09, 16: 0.13}[lines]) < 0.015
            meas = sample(truth, mask)
            img1, state = solver.stage1(meas, params, system)
            img2, _ = solver.stage2(state, meas, params, system, edge)
            err1 = relerr_ratio(img1, truth)
            err2 = relerr_ratio(img2, truth)
            assert err2 <= err1 + 1e-12, f"{kind}@{lines}: stage 2 worsened {err1} -> {err2}"
            improvements.append((kind, lines, (err1 - err2) / err1))
    best = max(improvements, key=lambda item: item[2])
    assert best[2] >= 0.03
    report(6, "stage 2 <= stage 1 on all 6 configs; best improvement "
              f"{100 * best[2]:.1f}% ({best[0]} @ {best[1]} lines)")


def _sweep(tmp_path, body, name="sweep.cfg", extra_args=()):
    config = tmp_path / name
    config.write_text(body)
    out = tmp_path / (name + ".csv")
    code = cli.main(["sweep", "--config", str(config), "--out", str(out), *extra_args])
    rows = []
    if out.exists():
        for line in out.read_text().strip().splitlines()[1:]:
            parts = line.split(",")
            rows.append(
                {
                    "lines": int(parts[2]),
                    "sigma": float(parts[4]),
                    "stage": parts[7],
                    "relerr": float(parts[9]),
                    "snr": float(parts[10]),
                }
            )
    return code, rows, out


def test_criterion_07_monotone_rate_trend(tmp_path):
    body = (
        "phantom = shepp_logan\nn = 64\nlines = 6,10,16,24\nsigma = 0\n"
        "stages = 2\nmax_iter_stage1 = 400\nh = 0.1\n"
    )
    code, rows, _ = _sweep(tmp_path, body)
    assert code == 0
    final = sorted((r for r in rows if r["stage"] == "2"), key=lambda r: r["lines"])
    assert len(final) == 4
    assert all(a["relerr"] >= b["relerr"] for a, b in zip(final, final[1:]))
    assert all(a["snr"] <= b["snr"] for a, b in zip(final, final[1:]))
    report(7, "relerr nonincreasing and SNR nondecreasing over 4 sampling rates")


def test_criterion_08_noise_robustness_trend(tmp_path):
    body = (
        "phantom = smooth_bumps\nn = 64\nlines = 12\nsigma = 5,10,15,20\n"
        "stages = 2\nbeta = 5e-4\nlambda = 5e-4\nmax_iter_stage1 = 400\nh = 0.1\n"
    )
    code, rows, _ = _sweep(tmp_path, body)
    assert code == 0  # in particular, no divergence (exit code 4)
    final = sorted((r for r in rows if r["stage"] == "2"), key=lambda r: r["sigma"])
    assert [r["sigma"] for r in final] == [5.0, 10.0, 15.0, 20.0]
    assert all(a["relerr"] <= b["relerr"] for a, b in zip(final, final[1:]))
    report(8, "relerr nondecreasing over sigma in {5,10,15,20}, no divergence")


def test_criterion_09_parameter_validation():
    params = SolverParams(gamma=1.0, mu=100.0, tau=100.0)
    assert params.gamma == 1.0
    with pytest.raises(ValueError):
        SolverParams(gamma=1.7)
    assert solver.GAMMA_MAX == pytest.approx(1.618034, abs=1e-6)
    report(9, "gamma=1 accepted, gamma=1.7 rejected (bound 1.618)")


def test_criterion_10_sweep_determinism(tmp_path):
    body = (
        "phantom = textured\nn = 64\nlines = 8,12\nsigma = 3\n"
        "stages = 2\nmax_iter_stage1 = 60\nh = 0.1\nseed = 7\n"
    )
    _, _, out_a = _sweep(tmp_path, body, name="a.cfg")
    _, _, out_b = _sweep(tmp_path, body, name="b.cfg")
    bytes_a = out_a.read_bytes()
    assert bytes_a == out_b.read_bytes()
    assert len(bytes_a) > 0
    report(10, "two sweep runs with identical config+seed are byte-identical")

import numpy as np
import pytest

from spectralrk import (SpectralState, apply_semigroup, build_resolvent_cache,
                        cubic_nls, dense_stage_step, flow_derivative,
                        gauss_legendre, integrate, make_initial_data,
                        nls_problem, picard_oracle, project,
                        reference_solution, rk_step, scale_norm,
                        stability_function, wave_problem, clear_reference_cache)
from spectralrk.errors import (ContractionFailureError, DerivativeUnreliableError,
                               DomainExitError, HorizonExceededError)

import oracles


def mode_index(grid, k):
    return int(np.nonzero(grid.ks == k)[0][0])


def test_cache_identity_at_zero_step():
    p = cubic_nls()
    grid = p.build_grid(8)
    cache = build_resolvent_cache(gauss_legendre(2), grid, 0.0)
    assert abs(cache.lambda_obs - 1.0) < 1e-14
    assert cache.bound_b_obs < 1e-14


def test_cache_scalar_resolvent_closed_form():
    # Gauss s=1: ||(1 - h lambda/2)^{-1}|| for each mode
    p = cubic_nls()
    grid = p.build_grid(512)
    h = 0.01
    cache = build_resolvent_cache(gauss_legendre(1), grid, h)
    expected = np.abs(1.0 / (1.0 - h * grid.lam / 2.0))
    assert np.allclose(cache.inverse_norms, expected, rtol=1e-12)
    assert cache.lambda_obs <= 1.0 + 1e-12  # purely imaginary spectrum

    big = 1j * 1e6
    assert abs(1.0 / (1.0 - h * big / 2.0)) <= 1.0


def test_cache_inverse_norm_decays_at_high_modes():
    p = cubic_nls()
    grid = p.build_grid(256)
    cache = build_resolvent_cache(gauss_legendre(2), grid, 0.01)
    order = np.argsort(grid.mod)
    norms = cache.inverse_norms[order]
    peak = int(np.argmax(norms))
    tail = norms[peak:]
    assert np.all(np.diff(tail) <= 1e-10)  # nonincreasing beyond the peak


def test_cache_bound_b():
    p = cubic_nls()
    for mres in (64, 256):
        cache = build_resolvent_cache(gauss_legendre(2), p.build_grid(mres), 0.02)
        assert cache.bound_b_obs <= 1.0 + cache.lambda_obs + 1e-10


def test_rk_step_linear_is_stability_function():
    lin = nls_problem([])
    u = make_initial_data(lin, "band_limited_smooth", 16, seed=1, k0=3.0)
    grid = u.grid
    h = 0.02
    for s, oracle in ((1, oracles.stab_gauss1), (2, oracles.stab_gauss2)):
        cache = build_resolvent_cache(gauss_legendre(s), grid, h)
        out, stages = rk_step(lin, cache, u, np.inf, tol=1e-13)
        assert stages.converged and stages.iterations <= 2
        expected = np.array([oracle(h * lam) for lam in grid.lam])
        assert np.max(np.abs(out.coeffs[0] - expected * u.coeffs[0])) < 1e-13
        assert abs(scale_norm(out, 0) - scale_norm(u, 0)) < 1e-12


def test_rk_step_norm_conservation_all_scales():
    lin = nls_problem([])
    u = make_initial_data(lin, "band_limited_smooth", 16, seed=2, k0=4.0)
    cache = build_resolvent_cache(gauss_legendre(2), u.grid, 0.05)
    cur = u
    for _ in range(50):
        cur, _ = rk_step(lin, cache, cur, np.inf, tol=1e-13)
    for ell in range(5):
        a, b = scale_norm(cur, ell), scale_norm(u, ell)
        assert abs(a - b) <= 1e-12 * b


def test_single_mode_step_matches_scalar_newton_oracle():
    # one-mode cubic NLS reduces to the scalar ODE u' = -i k^2 u - i |u|^2 u;
    # Gauss s=1 is the implicit midpoint rule, solved independently by Newton
    p = cubic_nls()
    u0 = make_initial_data(p, "single_mode", 8, k=2)
    grid = u0.grid
    i2 = mode_index(grid, 2)
    a0 = u0.coeffs[0, i2]
    h, n = 0.01, 20
    cache = build_resolvent_cache(gauss_legendre(1), grid, h)
    cur = u0
    for _ in range(n):
        cur, _ = rk_step(p, cache, cur, np.inf, tol=1e-14)

    f = lambda w: -4j * w - 1j * abs(w) ** 2 * w
    # complex Wirtinger derivative is awkward; treat as R^2 Newton via damping
    z = complex(a0)
    for _ in range(n):
        w = z
        for _ in range(200):
            g = w - z - (h / 2.0) * f(w)
            if abs(g) < 1e-15:
                break
            # numerical Jacobian in R^2
            e = 1e-8
            gx = (w + e - z - (h / 2) * f(w + e) - g) / e
            gy = (w + 1j * e - z - (h / 2) * f(w + 1j * e) - g) / e
            jac = np.array([[gx.real, gy.real], [gx.imag, gy.imag]])
            dw = np.linalg.solve(jac, [g.real, g.imag])
            w = w - complex(dw[0], dw[1])
        z = z + h * f(w)
    assert abs(cur.coeffs[0, i2] - z) < 1e-12


def test_fixed_point_residual_bound():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=3, k0=2.0)
    h, tol = 0.01, 1e-12
    tab = gauss_legendre(2)
    cache = build_resolvent_cache(tab, u.grid, h)
    _, stages = rk_step(p, cache, u, np.inf, tol=tol)
    from spectralrk.equations import evaluate_B_m
    w = np.stack([st.coeffs for st in stages.W])
    bv = np.stack([evaluate_B_m(p, st, np.inf).coeffs for st in stages.W])
    um = project(u, np.inf)
    rhs = um.coeffs[None] + h * np.einsum("ij,jdn->idn", tab.alpha, bv)
    resid = cache.solve_stack(rhs) - w
    worst = max(scale_norm(SpectralState(u.grid, resid[i]), 0) for i in range(tab.s))
    assert worst <= 2 * tol * max(scale_norm(st, 0) for st in stages.W)


def test_contraction_failure_raises():
    # max_iter caps the iteration before the cubic divergence turns
    # superexponential, so the failure carries the observed ratio
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=4, k0=2.0)
    cache = build_resolvent_cache(gauss_legendre(1), u.grid, 0.3)
    with pytest.raises(ContractionFailureError) as exc:
        rk_step(p, cache, 3.0 * u, np.inf, tol=1e-12, max_iter=3)
    assert exc.value.last_ratio is None or exc.value.last_ratio > 0


def test_divergent_iteration_raises_cleanly():
    # far above h*: the iteration blows up; either the divergence guard or the
    # nonlinearity overflow fires, never a silent "converged" result
    from spectralrk.errors import NonlinearityOverflowError
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=4, k0=2.0)
    cache = build_resolvent_cache(gauss_legendre(1), u.grid, 5.0)
    with pytest.raises((ContractionFailureError, NonlinearityOverflowError)):
        rk_step(p, cache, 3.0 * u, np.inf, tol=1e-12, max_iter=50)


def test_contraction_ratio_scales_with_h():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 32, seed=5, k0=2.0)
    firsts = []
    for h in (2e-3, 1e-3, 5e-4):
        cache = build_resolvent_cache(gauss_legendre(2), u.grid, h)
        _, stages = rk_step(p, cache, u, np.inf, tol=1e-14)
        firsts.append(stages.contraction_ratios[0])
    for a, b in zip(firsts, firsts[1:]):
        assert 2.0 / 2.5 <= a / b <= 2.0 * 2.5


def test_integrate_zero_steps():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=6, k0=3.0)
    thr = p.spectral_cutoff(4)
    out, diag = integrate(p, gauss_legendre(1), u, thr, 0.1, 0)
    assert np.array_equal(out.coeffs, project(u, thr).coeffs)
    assert diag.n_steps == 0 and diag.invariant_drift() == 0.0


def test_integrate_linear_wave_single_mode():
    # final state matches the exact linear flow up to |S^n - e^{i n h lambda}|
    w = wave_problem([])
    u = make_initial_data(w, "single_mode", 8, k=1)
    thr = w.spectral_cutoff(8)
    h, n = 1.0 / 64, 64
    tab = gauss_legendre(2)
    sol, _ = integrate(w, tab, u, thr, h, n, tol=1e-13)
    exact = w.exact_flow(project(u, thr), 1.0)
    lam = 2j * np.pi
    bound = n * abs(stability_function(tab, h * lam) - np.exp(h * lam))
    assert scale_norm(sol - exact, 0) <= bound * 1.5 + 1e-12
    # u(t) = cos(2 pi t) * profile: at t = 1 the state returns to itself
    assert scale_norm(sol - project(u, thr), 0) < 1e-6


def test_integrate_temporal_order_on_nls():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 32, seed=7, k0=1.5)
    thr = p.spectral_cutoff(32)
    clear_reference_cache()
    ref = reference_solution(p, u, 0.5, thr)
    errs = []
    for n in (8, 16, 32, 64):
        sol, _ = integrate(p, gauss_legendre(1), u, thr, 0.5 / n, n, tol=1e-13)
        errs.append(scale_norm(sol - ref, 0))
    rates = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(1.7 <= r <= 2.3 for r in rates)


def test_step_errors_carry_step_index():
    from spectralrk.errors import NonlinearityOverflowError
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=8, k0=2.0)
    with pytest.raises((ContractionFailureError, DomainExitError,
                        NonlinearityOverflowError)) as exc:
        integrate(p, gauss_legendre(1), 5.0 * u, np.inf, 2.0, 10, tol=1e-12)
    assert getattr(exc.value, "step", None) is not None


def test_iterations_uniform_in_m():
    p = cubic_nls()
    u = make_initial_data(p, "algebraic_decay", 512, seed=9, r=4.0)
    counts = []
    for mres in (16, 64, 256, 512):
        thr = p.spectral_cutoff(mres)
        _, diag = integrate(p, gauss_legendre(1), u, thr, 0.01, 10, tol=1e-12)
        counts.append(diag.max_iterations)
    assert max(counts) - min(counts) <= 1


def test_rk_step_commutes_with_coarser_projection():
    p = cubic_nls()
    u = make_initial_data(p, "algebraic_decay", 64, seed=10, r=3.0)
    tab = gauss_legendre(2)
    cache = build_resolvent_cache(tab, u.grid, 0.01)
    m, m_big = p.spectral_cutoff(16), p.spectral_cutoff(32)
    a, _ = rk_step(p, cache, u, m, tol=1e-13)
    b, _ = rk_step(p, cache, project(u, m_big), m, tol=1e-13)
    assert scale_norm(a - b, 0) <= 1e-12
    assert scale_norm(project(a, m) - a, 0) == 0.0  # output confined to P_m range


def test_dense_stage_oracle_agreement():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 8, seed=11, k0=2.0)
    thr = p.spectral_cutoff(8)
    for s in (1, 2):
        tab = gauss_legendre(s)
        cache = build_resolvent_cache(tab, u.grid, 0.005)
        fp, _ = rk_step(p, cache, u, thr, tol=1e-14)
        dense = dense_stage_step(p, tab, u, thr, 0.005)
        assert scale_norm(fp - dense, 0) < 1e-12


def test_reference_matches_exact_linear_flow():
    lin = nls_problem([])
    u = make_initial_data(lin, "band_limited_smooth", 16, seed=12, k0=3.0)
    thr = lin.spectral_cutoff(16)
    clear_reference_cache()
    ref = reference_solution(lin, u, 0.3, thr)
    exact = apply_semigroup(project(u, thr), 0.3)
    assert scale_norm(ref - exact, 0) < 1e-11


def test_reference_cache_determinism():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=13, k0=2.0)
    thr = p.spectral_cutoff(16)
    clear_reference_cache()
    a = reference_solution(p, u, 0.05, thr)
    b = reference_solution(p, u, 0.05, thr)
    assert a.coeffs.tobytes() == b.coeffs.tobytes()


def test_reference_resolution_self_consistency():
    # references at m and 2m differ by no more than the measured tail bound
    p = cubic_nls()
    u = make_initial_data(p, "algebraic_decay", 64, seed=14, r=4.0)
    clear_reference_cache()
    T = 0.05
    r32 = reference_solution(p, u, T, p.spectral_cutoff(32))
    r64 = reference_solution(p, u, T, p.spectral_cutoff(64))
    diff = scale_norm(r32 - r64, 0)
    tail = scale_norm(project(u, p.spectral_cutoff(64)) - project(u, p.spectral_cutoff(32)), 0)
    assert diff <= 10.0 * tail + 1e-10


def test_picard_linear_is_semigroup():
    lin = nls_problem([])
    u = make_initial_data(lin, "band_limited_smooth", 16, seed=15, k0=3.0)
    thr = lin.spectral_cutoff(16)
    out = picard_oracle(lin, u, 0.2, thr)
    exact = apply_semigroup(project(u, thr), 0.2)
    assert scale_norm(out - exact, 0) < 1e-13


def test_picard_agrees_with_reference():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 32, seed=16, k0=2.0)
    thr = p.spectral_cutoff(32)
    clear_reference_cache()
    ref = reference_solution(p, u, 0.01, thr)
    pic = picard_oracle(p, u, 0.01, thr, quad_nodes=20, iterations=30)
    assert scale_norm(pic - ref, 0) < 1e-8


def test_picard_contracts_geometrically():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=17, k0=2.0)
    thr = p.spectral_cutoff(16)
    _, hist = picard_oracle(p, u, 0.05, thr, iterations=12, with_history=True)
    ratios = [b / a for a, b in zip(hist, hist[1:]) if a > 1e-14]
    assert ratios and max(ratios[:4]) < 1.0


def test_picard_horizon_error():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=18, k0=2.0)
    with pytest.raises(HorizonExceededError):
        picard_oracle(p, u, 10.0, p.spectral_cutoff(16))


def test_flow_derivative_linearity():
    lin = nls_problem([])
    u = make_initial_data(lin, "band_limited_smooth", 16, seed=19, k0=2.0)
    v = make_initial_data(lin, "algebraic_decay", 16, seed=20, r=4.0)
    tab = gauss_legendre(2)
    thr = lin.spectral_cutoff(16)
    d = flow_derivative(lin, tab, u, v, 0.01, thr)
    cache = build_resolvent_cache(tab, u.grid, 0.01)
    fv, _ = rk_step(lin, cache, v, thr, tol=1e-13)
    assert scale_norm(d - fv, 0) < 1e-9


def test_flow_derivative_single_mode_direction():
    # derivative of the linear step in a single-mode direction is S(h lambda) V
    lin = nls_problem([])
    u = make_initial_data(lin, "band_limited_smooth", 16, seed=21, k0=2.0)
    v = make_initial_data(lin, "single_mode", 16, k=5)
    tab = gauss_legendre(1)
    h = 0.01
    d = flow_derivative(lin, tab, u, v, h, np.inf)
    lam = -25j
    expected = oracles.stab_gauss1(h * lam)
    i5 = mode_index(u.grid, 5)
    assert abs(d.coeffs[0, i5] - expected * v.coeffs[0, i5]) < 1e-9


def test_flow_derivative_against_scipy_flow():
    # FD derivative of the full flow vs the same FD on an independent
    # dense-convolution scipy integration
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 6, seed=22, k0=1.5)
    v = make_initial_data(p, "band_limited_smooth", 6, seed=23, k0=1.5)
    grid = u.grid
    T, nsteps = 0.05, 10
    thr = p.spectral_cutoff(6)
    d = flow_derivative(p, gauss_legendre(2), u, v, T / nsteps, thr,
                        kind="flow", n_steps=nsteps, tol=1e-13)
    eps = 1e-5
    terms = [(2, 1, 1.0)]
    up = oracles.nls_flow_scipy(terms, grid.ks, u.coeffs[0] + eps * v.coeffs[0], T)
    dn = oracles.nls_flow_scipy(terms, grid.ks, u.coeffs[0] - eps * v.coeffs[0], T)
    d_scipy = (up - dn) / (2 * eps)
    assert np.max(np.abs(d.coeffs[0] - d_scipy)) < 1e-6


def test_flow_derivative_unreliable_offset():
    p = cubic_nls()
    u = make_initial_data(p, "band_limited_smooth", 16, seed=24, k0=2.0)
    v = make_initial_data(p, "band_limited_smooth", 16, seed=25, k0=2.0)
    with pytest.raises(DerivativeUnreliableError):
        flow_derivative(p, gauss_legendre(1), u, v, 0.01, np.inf, fd_step=1e-13)

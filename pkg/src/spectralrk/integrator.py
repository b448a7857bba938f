"""Implicit Runge-Kutta stepping of the projected system.

The stage vector W = (W^1 .. W^s) solves the fixed-point form

    W = (id - h alpha A)^{-1} (1 P_m u + h alpha B_m(W)),

iterated from W^i = P_m u; the update is

    U1 = S(hA) P_m u + h b^T (id - h alpha A)^{-1} B_m(W),

where S(hA) is applied through the same per-mode factorizations via
S(z) = 1 + z b^T (id - z alpha)^{-1} 1, so stages and update stay consistent
to machine precision and A W is never formed explicitly.

Per mode the linear algebra is a dense (s*d)-dimensional solve of
id - h (alpha x A_k).  For d = 2 the solve is carried out in the weighted
coordinates in which the block is exactly normal; this keeps the conditioning
bounded by the (RK2) margin instead of the block's raw entry spread.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .equations import evaluate_B_m
from .errors import (ContractionFailureError, DomainExitError, HorizonExceededError,
                     ReferenceQualityError, DerivativeUnreliableError,
                     SingularResolventError, SpectralRKError)
from .spectral import SpectralState, apply_A, apply_semigroup, project, scale_norm
from .tableau import gauss_legendre

_SINGULAR_COND = 1e14


# ---------------------------------------------------------------------------
# Resolvent cache


@dataclass(eq=False)
class ResolventCache:
    tableau: object
    grid: object
    h: float
    inv: np.ndarray = field(repr=False)          # (n, s*d, s*d) inverses, weighted coords
    inverse_norms: np.ndarray = field(repr=False)  # per-mode ||(id - h alpha A)^{-1}||_2
    lambda_obs: float = 0.0                      # max of inverse_norms
    bound_b_obs: float = 0.0                     # max ||h alpha A (id - h alpha A)^{-1}||_2
    cond_max: float = 0.0

    def _to_weighted(self, stack):
        if self.grid.d == 1:
            return stack
        return stack * self.grid.weights[None]

    def _from_weighted(self, stack):
        if self.grid.d == 1:
            return stack
        return stack / self.grid.weights[None]

    def solve_stack(self, stack):
        """Apply (id - h alpha A)^{-1} to a stage stack of shape (s, d, n)."""
        s, d, n = stack.shape
        x = self._to_weighted(stack)
        x = x.reshape(s * d, n).T                # (n, s*d)
        y = np.einsum("nij,nj->ni", self.inv, x)
        y = y.T.reshape(s, d, n)
        return self._from_weighted(y)

    def apply_S(self, coeffs):
        """Apply the stability function S(hA) to coefficients of shape (d, n)."""
        s = self.tableau.s
        grid = self.grid
        if grid.d == 1:
            hau = self.h * grid.lam[None, :] * coeffs
        else:
            hau = self.h * np.einsum("nij,jn->in", grid.blocks, coeffs)
        stack = np.broadcast_to(hau, (s,) + hau.shape).copy()
        y = self.solve_stack(stack)
        return coeffs + np.einsum("i,idn->dn", self.tableau.b, y)

    def weighted_update(self, bstack):
        """h b^T (id - h alpha A)^{-1} applied to a stage stack."""
        y = self.solve_stack(bstack)
        return self.h * np.einsum("i,idn->dn", self.tableau.b, y)


def build_resolvent_cache(tab, grid, h):
    """Factorize id - h (alpha x A_k) for every mode; record observed bounds."""
    if h < 0:
        raise ValueError("step size must be nonnegative")
    s, d, n = tab.s, grid.d, grid.n_modes
    eye = np.eye(s * d)
    if d == 1:
        mats = eye[None] - h * grid.lam[:, None, None] * tab.alpha[None]
    else:
        hatted = grid.weighted_blocks()
        kron = np.einsum("ij,nab->niajb", tab.alpha, hatted).reshape(n, s * d, s * d)
        mats = eye[None] - h * kron
    svals = np.linalg.svd(mats, compute_uv=False)
    smin, smax = svals[:, -1], svals[:, 0]
    cond = np.where(smin > 0, smax / np.maximum(smin, 1e-300), np.inf)
    worst = int(np.argmax(cond))
    if cond[worst] > _SINGULAR_COND:
        raise SingularResolventError(
            f"stage system singular at mode k={int(grid.ks[worst])} (h*lambda on the (RK2) boundary)",
            mode=int(grid.ks[worst]))
    inv = np.linalg.inv(mats)
    inv_norms = 1.0 / smin
    gain = np.linalg.svd(inv - eye[None], compute_uv=False)[:, 0]
    return ResolventCache(tableau=tab, grid=grid, h=float(h), inv=inv,
                          inverse_norms=inv_norms,
                          lambda_obs=float(inv_norms.max()),
                          bound_b_obs=float(gain.max()),
                          cond_max=float(cond.max()))


# ---------------------------------------------------------------------------
# One step


@dataclass
class StageVector:
    W: list
    iterations: int
    contraction_ratios: list
    converged: bool


def _stage_norm(grid, stack):
    return max(scale_norm(SpectralState(grid, stack[i]), 0) for i in range(stack.shape[0]))


def rk_step(problem, cache, u, m, tol=1e-12, max_iter=100):
    """One implicit RK step of the projected system via fixed-point stages."""
    grid = u.grid
    tab = cache.tableau
    s = tab.s
    um = project(u, m)
    w = np.broadcast_to(um.coeffs, (s,) + um.coeffs.shape).copy()
    ratios = []
    prev_update = None
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        bvals = np.stack([evaluate_B_m(problem, SpectralState(grid, w[i]), m).coeffs
                          for i in range(s)])
        rhs = um.coeffs[None] + cache.h * np.einsum("ij,jdn->idn", tab.alpha, bvals)
        w_new = cache.solve_stack(rhs)
        with np.errstate(over="ignore", invalid="ignore"):
            update = _stage_norm(grid, w_new - w)
            w_norm = _stage_norm(grid, w_new)
        if not (np.isfinite(update) and np.isfinite(w_norm)):
            raise ContractionFailureError(
                "stage iteration diverged to non-finite values "
                "(step size far above the contraction threshold h*)",
                last_ratio=ratios[-1] if ratios else None)
        if prev_update is not None and prev_update > 0:
            ratios.append(update / prev_update)
        prev_update = update
        w = w_new
        if update <= max(tol * w_norm, 1e-14):
            converged = True
            break
    if not converged:
        raise ContractionFailureError(
            f"stage iteration did not converge in {max_iter} iterations "
            f"(last contraction ratio {ratios[-1] if ratios else float('nan'):.3g}); "
            "the step size likely exceeds the contraction threshold h*",
            last_ratio=ratios[-1] if ratios else None)
    bvals = np.stack([evaluate_B_m(problem, SpectralState(grid, w[i]), m).coeffs
                      for i in range(s)])
    out = cache.apply_S(um.coeffs) + cache.weighted_update(bvals)
    stages = StageVector(W=[SpectralState(grid, w[i].copy()) for i in range(s)],
                         iterations=iterations, contraction_ratios=ratios,
                         converged=converged)
    return SpectralState(grid, out), stages


# ---------------------------------------------------------------------------
# Time integration with diagnostics


@dataclass
class StepRecord:
    step: int
    iterations: int
    contraction_ratio: float
    y0_norm: float
    invariant: float


@dataclass
class RunDiagnostics:
    records: list
    initial_norm: float
    initial_invariant: float
    max_contraction_ratio: float = 0.0
    max_iterations: int = 0
    total_iterations: int = 0

    @property
    def n_steps(self):
        return len(self.records)

    def norm_drift(self):
        if not self.records:
            return 0.0
        return max(abs(r.y0_norm - self.initial_norm) for r in self.records)

    def invariant_drift(self):
        if not self.records:
            return 0.0
        return max(abs(r.invariant - self.initial_invariant) for r in self.records)


def integrate(problem, tab, u0, m, h, n_steps, tol=1e-12, max_iter=100,
              cache=None, record=True):
    """Apply rk_step n_steps times starting from P_m u0.

    Aborts with the failing step index attached when a step raises; leaving
    the solution ball of radius domain_radius_factor * ||P_m u0|| raises
    DomainExitError.
    """
    if cache is None or cache.h != h or cache.tableau is not tab or cache.grid is not u0.grid:
        cache = build_resolvent_cache(tab, u0.grid, h)
    u = project(u0, m)
    records = []
    diag = RunDiagnostics(records=records, initial_norm=scale_norm(u, 0),
                          initial_invariant=problem.invariant(u) if record else 0.0)
    radius = problem.domain_radius_factor * max(diag.initial_norm, 1e-300)
    for step in range(1, n_steps + 1):
        try:
            u, stages = rk_step(problem, cache, u, m, tol=tol, max_iter=max_iter)
        except SpectralRKError as err:
            err.step = step
            raise
        y0 = scale_norm(u, 0)
        diag.max_iterations = max(diag.max_iterations, stages.iterations)
        diag.total_iterations += stages.iterations
        if stages.contraction_ratios:
            diag.max_contraction_ratio = max(diag.max_contraction_ratio,
                                             max(stages.contraction_ratios))
        if record:
            ratio = stages.contraction_ratios[-1] if stages.contraction_ratios else 0.0
            records.append(StepRecord(step, stages.iterations, ratio, y0,
                                      problem.invariant(u)))
        if y0 > radius:
            raise DomainExitError(f"solution left the radius-{radius:.3g} ball at step {step}",
                                  step=step, norm=y0)
    return u, diag


# ---------------------------------------------------------------------------
# Reference solutions (Richardson-verified high-order runs)

_REFERENCE_CACHE = {}


def _state_key(u):
    return (u.coeffs.tobytes(), u.grid.ks.tobytes())


def reference_solution(problem, u0, T, m_ref, *, agree_tol=1e-11, stage_tol=1e-13,
                       n0=8, max_halvings=14):
    """Gauss s=4 (p=8) run with the step chosen by Richardson self-check.

    Halve the step until two successive runs agree to ``agree_tol`` in Y_0;
    the finer result is cached keyed by (problem, data, T, m_ref).
    """
    key = (problem.cache_key(), _state_key(u0), float(T), float(m_ref), agree_tol)
    if key in _REFERENCE_CACHE:
        return _REFERENCE_CACHE[key].copy()
    tab = gauss_legendre(4)
    n = int(n0)
    prev = None
    for _ in range(max_halvings):
        # n a power of two times n0 keeps h = T/n an exact binary fraction of T
        u, _diag = integrate(problem, tab, u0, m_ref, T / n, n, tol=stage_tol, record=False)
        if prev is not None and scale_norm(u - prev, 0) <= agree_tol:
            _REFERENCE_CACHE[key] = u
            return u.copy()
        prev = u
        n *= 2
    raise ReferenceQualityError(
        f"reference self-check did not reach {agree_tol:g} after {max_halvings} halvings")


def clear_reference_cache():
    _REFERENCE_CACHE.clear()


# ---------------------------------------------------------------------------
# Picard oracle for the mild solution


def picard_oracle(problem, u0, T, m, quad_nodes=20, iterations=30, panels=4,
                  tol=1e-13, with_history=False):
    """Iterate the mild-solution map on a composite-Gauss grid in scaled time.

    Pi(W)(tau) = e^{tau T A} u0 + T * integral_0^tau e^{(tau-sigma) T A}
    B_m(W(sigma)) d sigma, discretized with ``panels`` panels of Gauss nodes
    on [0, 1] and exact semigroup kernels.  Returns W(1).  Serves as an
    integrator-independent oracle for small T; diverging updates raise
    HorizonExceededError.
    """
    grid = u0.grid
    g = max(1, int(np.ceil(quad_nodes / panels)))
    xs, ws = np.polynomial.legendre.leggauss(g)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * xs[None, :]          # (panels, g)
    pweights = half[:, None] * ws[None, :]                      # (panels, g)
    sources = nodes.ravel()
    evals = np.concatenate([sources, [1.0]])
    n_src, n_eval = sources.size, evals.size

    # interpolatory weights for integral_0^tau over the panel decomposition
    omega = np.zeros((n_eval, n_src))
    for e, tau in enumerate(evals):
        pe = min(int(np.searchsorted(edges, tau, side="right")) - 1, panels - 1)
        for p in range(pe):
            omega[e, p * g:(p + 1) * g] = pweights[p]
        a = edges[pe]
        if tau > a:
            # integral of the local Lagrange basis on [a, tau] by auxiliary Gauss
            aux_x = 0.5 * (tau + a) + 0.5 * (tau - a) * xs
            aux_w = 0.5 * (tau - a) * ws
            loc = nodes[pe]
            for q in range(g):
                ell = np.ones_like(aux_x)
                for qq in range(g):
                    if qq != q:
                        ell *= (aux_x - loc[qq]) / (loc[q] - loc[qq])
                omega[e, pe * g + q] = aux_w @ ell

    um = project(u0, m)
    free = [apply_semigroup(um, tau * T) for tau in evals]
    deltas = evals[:, None] - sources[None, :]
    if grid.d == 1:
        kernel = np.exp(T * deltas[:, :, None] * grid.lam[None, None, :])
    else:
        kernel = np.empty((n_eval, n_src, grid.n_modes, 2, 2), dtype=complex)
        for e in range(n_eval):
            for j in range(n_src):
                kernel[e, j] = grid.block_function(np.exp(T * deltas[e, j] * grid.eigs))

    w = [free[e].coeffs.copy() for e in range(n_eval)]
    history = []
    growth = 0
    for _ in range(iterations):
        bvals = np.stack([evaluate_B_m(problem, SpectralState(grid, w[j]), m).coeffs
                          for j in range(n_src)])
        if grid.d == 1:
            integral = np.einsum("es,esn,sdn->edn", omega, kernel, bvals)
        else:
            integral = np.einsum("es,esnij,sjn->ein", omega, kernel, bvals)
        update = 0.0
        for e in range(n_eval):
            new = free[e].coeffs + T * integral[e]
            update = max(update, scale_norm(SpectralState(grid, new - w[e]), 0))
            w[e] = new
        history.append(update)
        if len(history) > 1 and update > history[-2]:
            growth += 1
            if growth >= 3 and update > history[0]:
                raise HorizonExceededError(
                    f"Picard iteration diverges (update grew to {update:.3g}); "
                    "T exceeds the contraction horizon")
        else:
            growth = 0
        if update <= tol * max(scale_norm(SpectralState(grid, w[-1]), 0), 1.0):
            break
    out = SpectralState(grid, w[-1])
    return (out, history) if with_history else out


# ---------------------------------------------------------------------------
# Dense-matrix stage oracle (no fixed point)


def dense_stage_step(problem, tab, u, m, h, *, xtol=1e-13):
    """Direct solve of the full nonlinear stage system; oracle for small grids.

    Solves W = 1 P_m u + h alpha (A W + B_m(W)) over all stage unknowns with a
    dense quasi-Newton method and forms the update in the original form
    U1 = P_m u + h b^T (A W + B_m(W)).  Independent of the resolvent path.
    """
    grid = u.grid
    s, d, n = tab.s, grid.d, grid.n_modes
    um = project(u, m)

    def rhs_terms(w):
        aw = np.empty_like(w)
        bw = np.empty_like(w)
        for i in range(s):
            st = SpectralState(grid, w[i])
            aw[i] = apply_A(st).coeffs
            bw[i] = evaluate_B_m(problem, st, m).coeffs
        return aw, bw

    def residual(x):
        w = x[:x.size // 2].reshape(s, d, n) + 1j * x[x.size // 2:].reshape(s, d, n)
        aw, bw = rhs_terms(w)
        r = w - um.coeffs[None] - h * np.einsum("ij,jdn->idn", tab.alpha, aw + bw)
        return np.concatenate([r.real.ravel(), r.imag.ravel()])

    w0 = np.broadcast_to(um.coeffs, (s, d, n)).ravel()
    x0 = np.concatenate([w0.real, w0.imag])
    sol = scipy.optimize.root(residual, x0, method="hybr", options={"xtol": xtol})
    res_norm = float(np.max(np.abs(sol.fun)))
    if not sol.success and res_norm > 1e-10:
        raise SpectralRKError(f"dense stage solve failed: {sol.message} (residual {res_norm:.3g})")
    x = sol.x
    w = x[:x.size // 2].reshape(s, d, n) + 1j * x[x.size // 2:].reshape(s, d, n)
    aw, bw = rhs_terms(w)
    out = um.coeffs + h * np.einsum("i,idn->dn", tab.b, aw + bw)
    return SpectralState(grid, out)


# ---------------------------------------------------------------------------
# Flow derivatives by central differences


def flow_derivative(problem, tab, u0, direction, dt, m, *, kind="step", n_steps=1,
                    tol=1e-12, fd_step=None, richardson_tol=1e-4):
    """Directional derivative of one step (kind="step") or of the flow map
    (kind="flow", n_steps of size dt) by central differences.

    The default offset is 1e-5 * ||u0||; the value at half the offset is
    returned after a Richardson consistency check.
    """
    if kind not in ("step", "flow"):
        raise ValueError(f"unknown derivative kind {kind!r}")
    base = scale_norm(u0, 0)
    eps = fd_step if fd_step is not None else 1e-5 * (base if base > 0 else 1.0)
    if not eps > 0:
        raise ValueError("finite-difference offset must be positive")
    if kind == "step":
        cache = build_resolvent_cache(tab, u0.grid, dt)

        def fmap(x):
            return rk_step(problem, cache, x, m, tol=tol)[0]
    else:
        def fmap(x):
            return integrate(problem, tab, x, m, dt, n_steps, tol=tol, record=False)[0]

    def central(e):
        up = fmap(u0 + e * direction)
        dn = fmap(u0 + (-e) * direction)
        return (up - dn) * (0.5 / e)

    d1 = central(eps)
    d2 = central(eps / 2)
    denom = max(scale_norm(d2, 0), 1e-300)
    rel = scale_norm(d1 - d2, 0) / denom
    if scale_norm(d2, 0) > 1e-13 and rel > richardson_tol:
        raise DerivativeUnreliableError(
            f"Richardson check failed (relative disagreement {rel:.3g})",
            rel_disagreement=rel)
    return d2

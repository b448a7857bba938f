"""Convergence studies: orchestrate runs, fit observed orders, issue verdicts.

Study conventions
-----------------
Resolutions ``m`` are integer wavenumber cutoffs; each problem translates them
into the spectral-projector threshold (the eigenvalue modulus of the mode-m
eigenvalue).  Spatial slopes are fitted against that threshold, which is the
variable the truncation-tail estimate ||Q_m u|| <= m^{-l} ||u||_{Y_l} speaks
about; the wavenumber-axis slope is reported alongside.

All states of one study live on a single allocated grid (the largest
resolution involved); varying m only changes the projector mask, never the
array layout, so the no-coupling study can push m without re-gridding.

Fitted slopes are least squares on log(error) vs log(grid), with cells at the
numerical floor excluded and, for temporal studies, cells at the saturation
ceiling (error comparable to the solution norm, hence carrying no order
signal) excluded as well.  The dominance filter drops any cell where the
competing error source exceeds one tenth of the measured error.
"""

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, SpectralRKError, DerivativeUnreliableError
from .integrator import (build_resolvent_cache, flow_derivative, integrate,
                         reference_solution, rk_step)
from .spectral import project, scale_norm

_FLOOR_EPS_FACTOR = 100.0


# ---------------------------------------------------------------------------
# Order fitting


@dataclass(frozen=True)
class OrderFit:
    slope: float
    residual: float
    n_used: int
    used: tuple


def fit_order(errors, grid, *, floor=0.0, ceiling=None):
    """Least-squares slope of log(error) vs log(grid).

    Points at or below ``floor`` (and at or above ``ceiling`` when given) are
    excluded; fewer than three usable points raises InsufficientDataError.
    """
    errors = np.asarray(errors, dtype=float)
    grid = np.asarray(grid, dtype=float)
    usable = np.isfinite(errors) & (errors > floor)
    if ceiling is not None:
        usable &= errors < ceiling
    if int(usable.sum()) < 3:
        raise InsufficientDataError(
            f"only {int(usable.sum())} usable points above the floor; need >= 3")
    x = np.log(grid[usable])
    y = np.log(errors[usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return OrderFit(slope=float(slope), residual=resid,
                    n_used=int(usable.sum()), used=tuple(bool(v) for v in usable))


def _default_floor(norm_scale, reference_tol=0.0):
    return max(_FLOOR_EPS_FACTOR * np.finfo(float).eps * norm_scale, reference_tol)


def _map_cells(fn, items, jobs):
    if jobs and jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _tableau_label(tab):
    return getattr(tab, "name", "tableau")


# ---------------------------------------------------------------------------
# Study report


@dataclass(eq=False)
class StudyReport:
    study: str
    problem: str
    tableau: str
    h_values: list
    m_values: list
    T: float
    errors: np.ndarray            # (len(h_values), len(m_values))
    status: np.ndarray            # object array of cell statuses
    fits: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    verdict: str = "inconclusive"
    verdict_details: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    norm_index: int = 0

    def to_csv(self, path, config_hash=None):
        lines = []
        if config_hash:
            lines.append(f"# config-sha256: {config_hash}")
        lines.append("study,problem,tableau,h,m,norm_index,error,status")
        for i, h in enumerate(self.h_values):
            for j, m in enumerate(self.m_values):
                err = self.errors[i, j]
                err_s = f"{err:.17g}" if np.isfinite(err) else "nan"
                lines.append(f"{self.study},{self.problem},{self.tableau},"
                             f"{h:.17g},{m},{self.norm_index},{err_s},{self.status[i, j]}")
        _atomic_write(path, "\n".join(lines) + "\n")

    def write_slopes(self, path, config_hash=None):
        lines = []
        if config_hash:
            lines.append(f"# config-sha256: {config_hash}")
        lines.append("study,key,slope,residual,n_used")
        for key in sorted(self.fits):
            fit = self.fits[key]
            if fit is None:
                lines.append(f"{self.study},{key},nan,nan,0")
            else:
                lines.append(f"{self.study},{key},{fit.slope:.17g},{fit.residual:.17g},{fit.n_used}")
        for key in sorted(self.expected):
            lines.append(f"{self.study},expected.{key},{self.expected[key]},,")
        lines.append(f"{self.study},verdict,{self.verdict},,")
        _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path, text):
    import os
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Temporal order study


def temporal_order_study(problem, tab, u0, m_list, h_list, T, *, tol=1e-12,
                         reference_tol=1e-11, slope_window=(0.3, 0.5),
                         uniformity_tol=0.2, saturation_fraction=0.5, jobs=1):
    """Fit the temporal order against a same-resolution reference per m.

    The error of (psi_m^h)^{T/h} u0 is measured against the flow of the
    projected system at the same m, so the spatial error cancels and the
    remaining signal is purely temporal.  Verdict: every per-m slope within
    [p - slope_window[0], p + slope_window[1]] and slopes spreading at most
    ``uniformity_tol`` across m.
    """
    norm0 = scale_norm(u0, 0)
    thresholds = [problem.spectral_cutoff(m) for m in m_list]
    refs = {}
    for m, thr in zip(m_list, thresholds):
        if problem.has_exact_flow:
            refs[m] = problem.exact_flow(project(u0, thr), T)
        else:
            refs[m] = reference_solution(problem, u0, T, thr, agree_tol=reference_tol)

    def run_cell(cell):
        h, m, thr = cell
        n = max(1, round(T / h))
        try:
            sol, _ = integrate(problem, tab, u0, thr, T / n, n, tol=tol, record=False)
            return scale_norm(sol - refs[m], 0), "ok"
        except SpectralRKError as err:
            return np.nan, f"error:{type(err).__name__}"

    cells = [(h, m, thr) for h in h_list for m, thr in zip(m_list, thresholds)]
    results = _map_cells(run_cell, cells, jobs)
    errors = np.array([r[0] for r in results]).reshape(len(h_list), len(m_list))
    status = np.array([r[1] for r in results], dtype=object).reshape(errors.shape)

    floor = _default_floor(norm0, 0.0 if problem.has_exact_flow else reference_tol)
    ceiling = saturation_fraction * norm0
    status[(errors <= floor) & (status == "ok")] = "floor"
    status[(errors >= ceiling) & (status == "ok")] = "saturated"

    fits = {}
    details = {}
    slopes = []
    all_floor = True
    for j, m in enumerate(m_list):
        col = errors[:, j]
        if np.all(col[np.isfinite(col)] <= floor):
            fits[f"temporal.m={m}"] = None
            details[f"m={m}"] = "floor"
            continue
        all_floor = False
        try:
            fit = fit_order(col, h_list, floor=floor, ceiling=ceiling)
            fits[f"temporal.m={m}"] = fit
            slopes.append(fit.slope)
        except InsufficientDataError:
            fits[f"temporal.m={m}"] = None
            details[f"m={m}"] = "insufficient data"

    lo, hi = tab.p - slope_window[0], tab.p + slope_window[1]
    if all_floor:
        verdict = "pass"
        details["note"] = "all cells at the numerical floor (no temporal signal)"
    elif len(slopes) < len(m_list):
        verdict = "inconclusive"
    else:
        in_window = all(lo <= sl <= hi for sl in slopes)
        uniform = (max(slopes) - min(slopes)) <= uniformity_tol
        details["slopes"] = slopes
        details["in_window"] = in_window
        details["uniform_in_m"] = uniform
        verdict = "pass" if (in_window and uniform) else "fail"

    return StudyReport(study="temporal", problem=problem.name, tableau=_tableau_label(tab),
                       h_values=list(h_list), m_values=list(m_list), T=T,
                       errors=errors, status=status, fits=fits,
                       expected={"p": tab.p, "window": [lo, hi], "uniformity": uniformity_tol},
                       verdict=verdict, verdict_details=details,
                       metadata={"tol": tol, "reference_tol": reference_tol,
                                 "floor": floor, "ceiling": ceiling,
                                 "thresholds": thresholds})


# ---------------------------------------------------------------------------
# Spatial order study


def spatial_order_study(problem, tab, u0, m_list, h_small, T, *, k_smooth=None,
                        mode="algebraic", m_ref=None, tol=1e-12, floor=None,
                        dominance_factor=10.0, jobs=1):
    """Spatial convergence against the solution at a reference resolution.

    mode="algebraic": data with finite Y_(K+1) norm; the fitted slope against
    the spectral threshold must be <= -(K+1) + 0.5 (K = ``k_smooth``).
    mode="superalgebraic": smooth band-limited data; every resolution doubling
    above the floor must cut the error by at least 2^6.

    The dominance filter reruns every cell with the step halved and uses the
    shift of the measured error as the temporal contamination estimate (the
    temporal error on modes shared with the reference cancels in the
    difference, and the tail norm is phase-insensitive, so only a genuine
    h-dependence of the measured value signals contamination); cells where
    the shift is not 10x below the error are excluded.
    """
    if mode not in ("algebraic", "superalgebraic"):
        raise ValueError(f"unknown spatial mode {mode!r}")
    if mode == "algebraic" and k_smooth is None:
        raise ValueError("algebraic mode requires k_smooth")
    m_alloc = int(np.max(u0.grid.ks))
    m_ref = m_ref or m_alloc
    if m_ref < 2 * max(m_list):
        raise ValueError("reference resolution must be at least twice the largest study m")
    norm0 = scale_norm(u0, 0)
    floor = floor if floor is not None else max(_default_floor(norm0), 1e-11)
    n = max(1, round(T / h_small))
    h_used = T / n
    thr_ref = problem.spectral_cutoff(m_ref)
    sol_ref, _ = integrate(problem, tab, u0, thr_ref, h_used, n, tol=tol, record=False)
    ref_half, _ = integrate(problem, tab, u0, thr_ref, h_used / 2, 2 * n, tol=tol, record=False)

    thresholds = [problem.spectral_cutoff(m) for m in m_list]

    def run_cell(thr):
        try:
            sol, _ = integrate(problem, tab, u0, thr, h_used, n, tol=tol, record=False)
            sol_half, _ = integrate(problem, tab, u0, thr, h_used / 2, 2 * n, tol=tol,
                                    record=False)
            err_h = scale_norm(sol - sol_ref, 0)
            err_half = scale_norm(sol_half - ref_half, 0)
            return err_half, abs(err_h - err_half), "ok"
        except SpectralRKError as err:
            return np.nan, np.nan, f"error:{type(err).__name__}"

    results = _map_cells(run_cell, thresholds, jobs)
    errors = np.array([r[0] for r in results])[None, :]
    temporal_est = np.array([r[1] for r in results])
    status = np.array([r[2] for r in results], dtype=object)[None, :]
    dominated = (errors[0] > floor) & (temporal_est > errors[0] / dominance_factor)
    status[0][dominated & (status[0] == "ok")] = "excluded-dominance"
    status[0][(errors[0] <= floor) & (status[0] == "ok")] = "floor"

    fits = {}
    details = {"temporal_error_estimates": temporal_est.tolist()}
    expected = {}
    if mode == "algebraic":
        expected["exponent_threshold_axis"] = -(k_smooth + 1)
        usable = errors[0].copy()
        usable[dominated] = np.nan
        try:
            fit_thr = fit_order(usable, thresholds, floor=floor)
            fit_res = fit_order(usable, m_list, floor=floor)
            fits["spatial.vs_threshold"] = fit_thr
            fits["spatial.vs_resolution"] = fit_res
            bound = -(k_smooth + 1) + 0.5
            details["slope_vs_threshold"] = fit_thr.slope
            details["bound"] = bound
            verdict = "pass" if fit_thr.slope <= bound else "fail"
        except InsufficientDataError:
            verdict = "inconclusive"
            details["advice"] = "shrink h_small: temporal error dominates the spatial signal"
    else:
        ok = errors[0] > floor
        factors = []
        for j in range(len(m_list) - 1):
            if ok[j] and ok[j + 1] and not dominated[j] and not dominated[j + 1]:
                factors.append(errors[0, j] / errors[0, j + 1])
        details["doubling_factors"] = factors
        expected["min_doubling_factor"] = 64.0
        if not factors:
            verdict = "inconclusive"
            details["advice"] = "no consecutive cells above the floor"
        else:
            verdict = "pass" if all(f >= 64.0 for f in factors) else "fail"

    return StudyReport(study=f"spatial-{mode}", problem=problem.name,
                       tableau=_tableau_label(tab),
                       h_values=[h_used], m_values=list(m_list), T=T,
                       errors=errors, status=status, fits=fits, expected=expected,
                       verdict=verdict, verdict_details=details,
                       metadata={"tol": tol, "floor": floor, "m_ref": m_ref,
                                 "thresholds": thresholds, "k_smooth": k_smooth,
                                 "dominance_factor": dominance_factor})


# ---------------------------------------------------------------------------
# No-coupling study


def coupling_study(problem, tab, u0, h_list, m_list, T, *, control_tableau=None,
                   m_ref=None, tol=1e-12, model_factor=3.0,
                   iteration_spread=1, jobs=1):
    """Exercise the full (h, m) grid, including cells far beyond any CFL limit.

    Verifies that (i) every cell integrates stably, (ii) per h the stage
    iteration count is independent of m (spread <= ``iteration_spread``), and
    (iii) the two-term model C1 h^p + C2 m^{-q}, fitted on the boundary cells
    (smallest-h row for the spatial term, largest-m column for the temporal
    term), predicts interior cells within ``model_factor``.

    Errors are measured against the smallest-h run at the reference
    resolution, so on the smallest-h row the temporal error cancels and the
    row reproduces the spatial study.  An explicit control tableau, when
    given, must blow up at the extreme cell (max h, max m); a stable control
    is itself a failure.
    """
    m_alloc = int(np.max(u0.grid.ks))
    m_ref = m_ref or m_alloc
    thr_ref = problem.spectral_cutoff(m_ref)
    norm0 = scale_norm(u0, 0)
    h_min = float(np.min(h_list))
    n_min = max(1, round(T / h_min))
    ref, _ = integrate(problem, tab, u0, thr_ref, T / n_min, n_min, tol=tol, record=False)
    thresholds = [problem.spectral_cutoff(m) for m in m_list]

    def run_cell(cell):
        h, thr = cell
        n = max(1, round(T / h))
        try:
            sol, diag = integrate(problem, tab, u0, thr, T / n, n, tol=tol, record=False)
            return scale_norm(sol - ref, 0), "ok", diag.max_iterations
        except SpectralRKError as err:
            return np.nan, f"error:{type(err).__name__}", -1

    cells = [(h, thr) for h in h_list for thr in thresholds]
    results = _map_cells(run_cell, cells, jobs)
    errors = np.array([r[0] for r in results]).reshape(len(h_list), len(m_list))
    status = np.array([r[1] for r in results], dtype=object).reshape(errors.shape)
    iters = np.array([r[2] for r in results]).reshape(errors.shape)

    details = {}
    floor = _default_floor(norm0)
    stable = bool(np.all(status == "ok"))
    details["all_cells_stable"] = stable

    i_small = int(np.argmin(h_list))
    spreads = []
    for i in range(len(h_list)):
        row = iters[i]
        spreads.append(int(row.max() - row.min()) if np.all(row >= 0) else -1)
    spread = max(spreads)
    details["iteration_counts_per_h"] = iters.tolist()
    details["iteration_spread"] = spread

    # two-term error model: q, C2 from the smallest-h row; C1 from the largest-m column
    model_ok = False
    fits = {}
    try:
        row = errors[i_small]
        fit_m = fit_order(row, m_list, floor=floor)
        q = -fit_m.slope
        mask = np.array(fit_m.used)
        c2 = float(np.exp(np.mean(np.log(row[mask]) + q * np.log(np.array(m_list)[mask]))))
        fits["coupling.spatial_q"] = fit_m
        j_big = int(np.argmax(m_list))
        col = errors[:, j_big]
        resid = col - c2 * max(m_list) ** (-q)
        good = resid > floor
        if good.sum() >= 1:
            c1 = float(np.median(resid[good] / np.array(h_list)[good] ** tab.p))
        else:
            c1 = 0.0
        details["model"] = {"C1": c1, "C2": c2, "q": q, "p": tab.p}
        ratios = []
        for i, h in enumerate(h_list):
            for j, m in enumerate(m_list):
                if i == i_small or j == j_big or status[i, j] != "ok":
                    continue
                if errors[i, j] <= floor:
                    continue
                pred = c1 * h ** tab.p + c2 * m ** (-q)
                ratios.append(max(pred / errors[i, j], errors[i, j] / pred))
        details["model_max_ratio"] = max(ratios) if ratios else 1.0
        model_ok = not ratios or max(ratios) <= model_factor
    except InsufficientDataError:
        details["model"] = "insufficient data"

    control_ok = None
    if control_tableau is not None:
        h_ctl = float(np.max(h_list))
        thr_ctl = max(thresholds)
        n = max(1, round(T / h_ctl))
        try:
            sol, _ = integrate(problem, control_tableau, u0, thr_ctl, T / n, n,
                               tol=tol, record=False)
            blown = scale_norm(sol, 0) > 10.0 * norm0
            control_ok = blown
            details["control"] = "unexpected-stability" if not blown else "blow-up (norm growth)"
        except SpectralRKError as err:
            control_ok = True
            details["control"] = f"expected-failure:{type(err).__name__}"

    checks = [stable, 0 <= spread <= iteration_spread, model_ok]
    if control_ok is not None:
        checks.append(control_ok)
    verdict = "pass" if all(checks) else "fail"

    return StudyReport(study="coupling", problem=problem.name, tableau=_tableau_label(tab),
                       h_values=list(h_list), m_values=list(m_list), T=T,
                       errors=errors, status=status, fits=fits,
                       expected={"iteration_spread": iteration_spread,
                                 "model_factor": model_factor},
                       verdict=verdict, verdict_details=details,
                       metadata={"tol": tol, "m_ref": m_ref, "floor": floor,
                                 "thresholds": thresholds},
                       extras={"iterations": iters.tolist()})


# ---------------------------------------------------------------------------
# Derivative projection study


def derivative_projection_study(problem, tab, u0, direction, m_list, h, p_target, *,
                                m_ref=None, order=1, semiflow_T=None, tol=1e-12,
                                fd_step=None, jobs=1):
    """Decay of the directional-derivative truncation error with resolution.

    For each m the directional derivative of one step (or of the flow over
    [0, semiflow_T] when given) is compared against the derivative at the
    reference resolution; the slope against the spectral threshold must be
    <= -p_target + 0.5.  order=0 degenerates to the plain map difference and
    reproduces the spatial study.
    """
    m_alloc = int(np.max(u0.grid.ks))
    m_ref = m_ref or m_alloc
    thresholds = [problem.spectral_cutoff(m) for m in m_list]
    thr_ref = problem.spectral_cutoff(m_ref)
    kind = "flow" if semiflow_T is not None else "step"
    n_steps = max(1, round(semiflow_T / h)) if semiflow_T is not None else 1

    def dmap(thr):
        if order == 0:
            if kind == "step":
                cache = build_resolvent_cache(tab, u0.grid, h)
                return rk_step(problem, cache, u0, thr, tol=tol)[0]
            return integrate(problem, tab, u0, thr, h, n_steps, tol=tol, record=False)[0]
        return flow_derivative(problem, tab, u0, direction, h, thr, kind=kind,
                               n_steps=n_steps, tol=tol, fd_step=fd_step)

    d_ref = dmap(thr_ref)
    norm_scale = max(scale_norm(d_ref, 0), scale_norm(u0, 0))
    floor = _default_floor(norm_scale)

    def run_cell(thr):
        try:
            return scale_norm(dmap(thr) - d_ref, 0), "ok"
        except DerivativeUnreliableError:
            return np.nan, "inconclusive:fd-unreliable"
        except SpectralRKError as err:
            return np.nan, f"error:{type(err).__name__}"

    results = _map_cells(run_cell, thresholds, jobs)
    errors = np.array([r[0] for r in results])[None, :]
    status = np.array([r[1] for r in results], dtype=object)[None, :]
    status[0][(errors[0] <= floor) & (status[0] == "ok")] = "floor"

    fits = {}
    details = {}
    bound = -p_target + 0.5
    try:
        fit_thr = fit_order(errors[0], thresholds, floor=floor)
        fits["derivative.vs_threshold"] = fit_thr
        fits["derivative.vs_resolution"] = fit_order(errors[0], m_list, floor=floor)
        details["slope_vs_threshold"] = fit_thr.slope
        details["bound"] = bound
        verdict = "pass" if fit_thr.slope <= bound else "fail"
    except InsufficientDataError:
        if np.all(errors[0][np.isfinite(errors[0])] <= floor):
            verdict = "pass"
            details["note"] = "derivative truncation error at the floor for every m"
        else:
            verdict = "inconclusive"

    return StudyReport(study=f"derivative-{kind}-j{order}", problem=problem.name,
                       tableau=_tableau_label(tab),
                       h_values=[h], m_values=list(m_list), T=semiflow_T or h,
                       errors=errors, status=status, fits=fits,
                       expected={"p_target": p_target, "bound": bound},
                       verdict=verdict, verdict_details=details,
                       metadata={"tol": tol, "m_ref": m_ref, "floor": floor,
                                 "thresholds": thresholds, "fd_step": fd_step})


# ---------------------------------------------------------------------------
# Invariant drift summary


def invariant_monitor(diag, *, norm_tol=None, invariant_tol=None):
    """Summarize Y_0-norm and invariant drift across a run's diagnostics."""
    norm_drift = diag.norm_drift()
    inv_drift = diag.invariant_drift()
    scale = max(abs(diag.initial_invariant), 1.0)
    out = {
        "n_steps": diag.n_steps,
        "norm_drift": norm_drift,
        "norm_drift_relative": norm_drift / max(diag.initial_norm, 1e-300),
        "invariant_drift": inv_drift,
        "invariant_drift_relative": inv_drift / scale,
        "max_contraction_ratio": diag.max_contraction_ratio,
        "max_iterations": diag.max_iterations,
    }
    if norm_tol is not None:
        out["norm_ok"] = out["norm_drift_relative"] <= norm_tol
    if invariant_tol is not None:
        out["invariant_ok"] = out["invariant_drift_relative"] <= invariant_tol
    return out

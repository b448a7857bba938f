"""Config-driven command line: tableau checks, runs, studies, oracle cross-checks.

Configs are strict JSON; unknown keys are rejected so a typo cannot silently
change an experiment.  Exit codes: 0 pass, 1 scientific failure, 2 usage or
config error, 3 inconclusive.  All files are written atomically and carry the
config hash in a header comment.  The environment variable
SPECTRALRK_OUTPUT_ROOT overrides the root of the output directory.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import analysis
from .equations import make_initial_data, nls_problem, wave_problem
from .errors import (ConfigError, HorizonExceededError, SpectralRKError)
from .integrator import (dense_stage_step, integrate, picard_oracle,
                         reference_solution)
from .spectral import save_state, scale_norm
from .tableau import (ButcherTableau, gauss_legendre, load_tableau,
                      verify_a_stability, verify_order_conditions)

_EXIT_PASS = 0
_EXIT_FAIL = 1
_EXIT_CONFIG = 2
_EXIT_INCONCLUSIVE = 3


def _check_keys(block, allowed, context):
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def _require(block, key, context):
    if key not in block:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return block[key]


def _as_list(value, name):
    vals = list(value) if isinstance(value, (list, tuple)) else [value]
    if not vals:
        raise ConfigError(f"{name} must be a nonempty list")
    return vals


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _check_keys(raw, ["problem", "tableau", "data", "grid", "study", "output"], "config")
    return raw


def config_hash(raw):
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_problem(block):
    _check_keys(block, ["name", "coefficients", "dealias", "domain_radius_factor"],
                "problem")
    name = _require(block, "name", "problem")
    dealias = block.get("dealias", "three_halves_padding")
    kw = {"dealias_rule": dealias}
    if "domain_radius_factor" in block:
        kw["domain_radius_factor"] = float(block["domain_radius_factor"])
    coeffs = block.get("coefficients", [])
    try:
        if name == "nls":
            return nls_problem([tuple(t) for t in coeffs], **kw)
        if name == "wave":
            return wave_problem([float(c) for c in coeffs], **kw)
    except ValueError as err:
        raise ConfigError(f"problem: {err}") from err
    raise ConfigError(f"problem: unknown name {name!r}")


def build_tableau(block):
    _check_keys(block, ["gauss", "file", "name"], "tableau")
    try:
        if "gauss" in block:
            return gauss_legendre(int(block["gauss"]))
        if "file" in block:
            return load_tableau(block["file"])
        if block.get("name") == "explicit_euler":
            return ButcherTableau(np.array([[0.0]]), np.array([1.0]), np.array([0.0]),
                                  p=1, name="explicit-euler")
    except (ValueError, OSError) as err:
        raise ConfigError(f"tableau: {err}") from err
    raise ConfigError("tableau: expected one of 'gauss', 'file', 'name'")


def build_data(block, problem, m_alloc):
    _check_keys(block, ["kind", "seed", "r", "k", "k0", "band_limit"], "data")
    kind = _require(block, "kind", "data")
    if kind in ("band_limited_smooth", "algebraic_decay") and "seed" not in block:
        raise ConfigError("data: randomized data requires a seed")
    try:
        return make_initial_data(problem, kind, m_alloc,
                                 seed=int(block.get("seed", 0)),
                                 r=block.get("r"), k=block.get("k"),
                                 k0=float(block.get("k0", 6.0)),
                                 band_limit=block.get("band_limit"))
    except ValueError as err:
        raise ConfigError(f"data: {err}") from err


def parse_grid(block):
    _check_keys(block, ["h", "m", "T", "tol", "m_ref", "m_alloc"], "grid")
    hs = [float(v) for v in _as_list(_require(block, "h", "grid"), "grid.h")]
    ms = [int(v) for v in _as_list(_require(block, "m", "grid"), "grid.m")]
    if any(h <= 0 for h in hs):
        raise ConfigError("grid.h values must be positive")
    if any(m <= 0 for m in ms) or ms != sorted(ms):
        raise ConfigError("grid.m values must be positive and increasing")
    out = {
        "h": hs,
        "m": ms,
        "T": float(_require(block, "T", "grid")),
        "tol": float(block.get("tol", 1e-12)),
        "m_ref": int(block["m_ref"]) if "m_ref" in block else None,
        "m_alloc": int(block["m_alloc"]) if "m_alloc" in block else None,
    }
    if out["T"] <= 0:
        raise ConfigError("grid.T must be positive")
    return out


def _out_dir(raw):
    block = raw.get("output", {})
    _check_keys(block, ["dir"], "output")
    sub = block.get("dir", "out")
    root = os.environ.get("SPECTRALRK_OUTPUT_ROOT", ".")
    path = os.path.join(root, sub)
    os.makedirs(path, exist_ok=True)
    return path


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_tableau(args):
    try:
        if args.gauss is not None:
            tab = gauss_legendre(args.gauss)
        elif args.file:
            tab = load_tableau(args.file)
        else:
            raise ConfigError("tableau: give --gauss S or --file PATH")
    except (ValueError, OSError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return _EXIT_CONFIG

    print(f"tableau {tab.name}: s={tab.s}, p={tab.p}")
    with np.printoptions(precision=17):
        print("alpha =\n", tab.alpha)
        print("b =", tab.b)
        print("c =", tab.c)
    order = verify_order_conditions(tab, min(tab.p, 8))
    print(f"order conditions through p={order.order}: "
          f"{'pass' if order.passed else 'FAIL'} (max residual {order.max_residual:.3g})")
    report = verify_a_stability(tab)
    print(report.summary())
    ok = report.all_pass and order.passed
    return _EXIT_PASS if ok else _EXIT_FAIL


def cmd_run(args):
    try:
        raw = load_config(args.config)
        chash = config_hash(raw)
        problem = build_problem(_require(raw, "problem", "config"))
        tab = build_tableau(raw.get("tableau", {"gauss": 2}))
        grid_cfg = parse_grid(_require(raw, "grid", "config"))
        if len(grid_cfg["h"]) != 1 or len(grid_cfg["m"]) != 1:
            raise ConfigError("run: grid.h and grid.m must be single values")
        m_res = grid_cfg["m"][0]
        m_alloc = grid_cfg["m_alloc"] or m_res
        u0 = build_data(_require(raw, "data", "config"), problem, m_alloc)
        out = _out_dir(raw)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return _EXIT_CONFIG

    h = grid_cfg["h"][0]
    T = grid_cfg["T"]
    n = max(1, round(T / h))
    thr = problem.spectral_cutoff(m_res)
    try:
        final, diag = integrate(problem, tab, u0, thr, T / n, n, tol=grid_cfg["tol"])
    except SpectralRKError as err:
        print(f"integration failed at step {getattr(err, 'step', '?')}: {err}", file=sys.stderr)
        return _EXIT_FAIL

    save_state(os.path.join(out, "state.txt"), final, header=f"config-sha256: {chash}")
    lines = [f"# config-sha256: {chash}",
             "step,iterations,contraction_ratio,y0_norm,invariant"]
    for r in diag.records:
        lines.append(f"{r.step},{r.iterations},{r.contraction_ratio:.17g},"
                     f"{r.y0_norm:.17g},{r.invariant:.17g}")
    _atomic_write(os.path.join(out, "diagnostics.csv"), "\n".join(lines) + "\n")
    mon = analysis.invariant_monitor(diag)
    print(f"run complete: {n} steps, max stage iterations {mon['max_iterations']}, "
          f"norm drift {mon['norm_drift']:.3g}, {problem.invariant_name} drift "
          f"{mon['invariant_drift']:.3g}")

    if args.verify_linear:
        if not problem.has_exact_flow:
            print("--verify-linear requires a linear problem", file=sys.stderr)
            return _EXIT_CONFIG
        from .spectral import project
        exact = problem.exact_flow(project(u0, thr), T)
        diff = scale_norm(final - exact, 0)
        print(f"linear verification: |numerical - semigroup|_Y0 = {diff:.3g}")
        if diff > 1e-11:
            return _EXIT_FAIL
    return _EXIT_PASS


def cmd_study(args):
    try:
        raw = load_config(args.config)
        chash = config_hash(raw)
        problem = build_problem(_require(raw, "problem", "config"))
        tab = build_tableau(raw.get("tableau", {"gauss": 2}))
        grid_cfg = parse_grid(_require(raw, "grid", "config"))
        study_cfg = dict(_require(raw, "study", "config"))
        kind = _require(study_cfg, "kind", "study")
        out = _out_dir(raw)

        m_list = grid_cfg["m"]
        m_ref = grid_cfg["m_ref"]
        if kind == "temporal":
            m_alloc = grid_cfg["m_alloc"] or max(m_list)
        else:
            m_alloc = grid_cfg["m_alloc"] or m_ref or 4 * max(m_list)
        u0 = build_data(_require(raw, "data", "config"), problem, m_alloc)
        tol = grid_cfg["tol"]
        T = grid_cfg["T"]

        if kind == "temporal":
            _check_keys(study_cfg, ["kind"], "study")
            report = analysis.temporal_order_study(problem, tab, u0, m_list,
                                                   grid_cfg["h"], T, tol=tol,
                                                   jobs=args.jobs)
        elif kind == "spatial":
            _check_keys(study_cfg, ["kind", "k_smooth", "mode"], "study")
            mode = study_cfg.get("mode",
                                 "superalgebraic" if raw["data"]["kind"] == "band_limited_smooth"
                                 else "algebraic")
            report = analysis.spatial_order_study(problem, tab, u0, m_list,
                                                  grid_cfg["h"][0], T,
                                                  k_smooth=study_cfg.get("k_smooth"),
                                                  mode=mode, m_ref=m_ref or m_alloc,
                                                  tol=tol, jobs=args.jobs)
        elif kind == "coupling":
            _check_keys(study_cfg, ["kind", "control"], "study")
            control = build_tableau(study_cfg["control"]) if "control" in study_cfg else None
            report = analysis.coupling_study(problem, tab, u0, grid_cfg["h"], m_list,
                                             T, control_tableau=control,
                                             m_ref=m_ref or m_alloc, tol=tol,
                                             jobs=args.jobs)
        elif kind == "derivative":
            _check_keys(study_cfg, ["kind", "p_target", "direction", "order",
                                    "semiflow_T"], "study")
            direction = None
            if "direction" in study_cfg:
                direction = build_data(study_cfg["direction"], problem, m_alloc)
            report = analysis.derivative_projection_study(
                problem, tab, u0, direction, m_list, grid_cfg["h"][0],
                float(_require(study_cfg, "p_target", "study")),
                m_ref=m_ref or m_alloc, order=int(study_cfg.get("order", 1)),
                semiflow_T=study_cfg.get("semiflow_T"), tol=tol, jobs=args.jobs)
        else:
            raise ConfigError(f"study: unknown kind {kind!r}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return _EXIT_CONFIG
    except SpectralRKError as err:
        print(f"study aborted: {err}", file=sys.stderr)
        return _EXIT_FAIL

    report.to_csv(os.path.join(out, "report.csv"), config_hash=chash)
    report.write_slopes(os.path.join(out, "slopes.csv"), config_hash=chash)
    _atomic_write(os.path.join(out, "verdict.txt"),
                  f"# config-sha256: {chash}\n{report.study}: {report.verdict}\n")
    print(f"{report.study} study on {report.problem} [{report.tableau}]: {report.verdict}")
    for key in sorted(report.fits):
        fit = report.fits[key]
        if fit is not None:
            print(f"  {key}: slope {fit.slope:+.3f} (residual {fit.residual:.2g}, "
                  f"{fit.n_used} pts)")
    for key, val in sorted(report.verdict_details.items()):
        print(f"  {key}: {val}")
    return {"pass": _EXIT_PASS, "fail": _EXIT_FAIL}.get(report.verdict, _EXIT_INCONCLUSIVE)


def cmd_oracle_check(args):
    try:
        raw = load_config(args.config)
        chash = config_hash(raw)
        problem = build_problem(_require(raw, "problem", "config"))
        tab = build_tableau(raw.get("tableau", {"gauss": 2}))
        grid_cfg = parse_grid(_require(raw, "grid", "config"))
        if len(grid_cfg["m"]) != 1:
            raise ConfigError("oracle-check: grid.m must be a single value")
        m_res = grid_cfg["m"][0]
        m_alloc = grid_cfg["m_alloc"] or m_res
        u0 = build_data(_require(raw, "data", "config"), problem, m_alloc)
        out = _out_dir(raw)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return _EXIT_CONFIG

    T = grid_cfg["T"]
    thr = problem.spectral_cutoff(m_res)
    n = 16
    results = {}
    try:
        results["fixed_point"] = integrate(problem, tab, u0, thr, T / n, n,
                                           tol=grid_cfg["tol"], record=False)[0]
        if m_res <= 8:
            from .spectral import project
            u = project(u0, thr)
            for _ in range(n):
                u = dense_stage_step(problem, tab, u, thr, T / n)
            results["dense_stages"] = u
        results["picard"] = picard_oracle(problem, u0, T, thr)
        results["reference"] = reference_solution(problem, u0, T, thr)
    except HorizonExceededError as err:
        print(f"oracle check failed: {err}", file=sys.stderr)
        return _EXIT_FAIL
    except SpectralRKError as err:
        print(f"oracle check failed: {err}", file=sys.stderr)
        return _EXIT_FAIL

    names = sorted(results)
    lines = [f"# config-sha256: {chash}", "oracle_a,oracle_b,y0_difference"]
    worst = 0.0
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = scale_norm(results[a] - results[b], 0)
            worst = max(worst, d)
            lines.append(f"{a},{b},{d:.17g}")
            print(f"|{a} - {b}|_Y0 = {d:.3g}")
    _atomic_write(os.path.join(out, "oracle_check.csv"), "\n".join(lines) + "\n")
    print(f"worst pairwise difference: {worst:.3g} (threshold 1e-08)")
    return _EXIT_PASS if worst <= 1e-8 else _EXIT_FAIL


def main(argv=None):
    parser = argparse.ArgumentParser(prog="spectralrk",
                                     description="Spectral-Galerkin / implicit RK experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tab = sub.add_parser("tableau", help="print and certify a Butcher tableau")
    p_tab.add_argument("--gauss", type=int, default=None, metavar="S")
    p_tab.add_argument("--file", default=None, metavar="PATH")
    p_tab.set_defaults(func=cmd_tableau)

    p_run = sub.add_parser("run", help="single integration from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--verify-linear", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_study = sub.add_parser("study", help="run a convergence study from a config file")
    p_study.add_argument("config")
    p_study.add_argument("--jobs", type=int, default=1)
    p_study.set_defaults(func=cmd_study)

    p_oracle = sub.add_parser("oracle-check", help="cross-validate the integration oracles")
    p_oracle.add_argument("config")
    p_oracle.set_defaults(func=cmd_oracle_check)

    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return _EXIT_CONFIG if err.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

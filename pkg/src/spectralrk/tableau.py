"""Butcher tableaus, stability functions, and A-stability certificates.

The tableau (alpha, b, c) describes an s-stage Runge-Kutta method.  The two
properties needed for unconditional stability on a normal operator with
spectrum in the closed left half-plane are

  (RK1)  |S(z)| <= 1 on Re z <= 0, with S(z) = 1 + z b^T (id - z alpha)^{-1} 1,
  (RK2)  id - z alpha invertible on Re z <= 0.

Gauss-Legendre collocation methods satisfy both; their tableaus are built here
from the Legendre roots rather than hard-coded tables.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import SingularResolventError

_ROWSUM_TOL = 1e-13
_SINGULAR_COND = 1e14


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Coefficients of an s-stage Runge-Kutta method of classical order p."""

    alpha: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: int
    name: str = "tableau"

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        s = b.size
        if alpha.shape != (s, s) or c.size != s:
            raise ValueError(f"inconsistent tableau shapes: alpha {alpha.shape}, b {b.size}, c {c.size}")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("tableau coefficients must be finite")
        if np.max(np.abs(alpha.sum(axis=1) - c)) > _ROWSUM_TOL:
            raise ValueError("row sums of alpha do not match c (collocation consistency)")

    @property
    def s(self):
        return self.b.size

    @property
    def alpha_inf_norm(self):
        """Operator infinity-norm of alpha.

        This is the norm induced by the max-over-stages convention used for
        stage vectors; it is the ||alpha|| entering the observed contraction
        bound h * Lambda * ||alpha|| * M'.
        """
        return float(np.max(np.abs(self.alpha).sum(axis=1)))


# ---------------------------------------------------------------------------
# Gauss-Legendre construction


def _legendre_roots(s, tol=1e-14):
    """Roots of the degree-s Legendre polynomial on [-1, 1].

    Newton iteration from the Chebyshev initial guess with the three-term
    recurrence; falls back to the companion matrix if Newton stalls.
    """
    x = np.cos(np.pi * (4.0 * np.arange(1, s + 1) - 1.0) / (4.0 * s + 2.0))
    for _ in range(100):
        # recurrence: k P_k = (2k-1) x P_{k-1} - (k-1) P_{k-2}
        p_prev = np.ones_like(x)
        p = x.copy()
        for k in range(2, s + 1):
            p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
        dp = s * (x * p - p_prev) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    else:
        coeffs = np.zeros(s + 1)
        coeffs[s] = 1.0
        x = np.polynomial.legendre.legroots(coeffs)
    return np.sort(x)


def gauss_legendre(s, name=None):
    """s-stage Gauss-Legendre tableau (collocation at shifted Legendre roots).

    The nodes c are the roots of the degree-s Legendre polynomial shifted to
    [0, 1]; alpha and b solve the Vandermonde collocation conditions

        sum_j alpha_ij c_j^(q-1) = c_i^q / q,   sum_j b_j c_j^(q-1) = 1/q

    for q = 1..s.  The classical order is p = 2s.
    """
    if not isinstance(s, (int, np.integer)) or not 1 <= s <= 6:
        raise ValueError(f"stage count must be an integer in 1..6, got {s!r}")
    c = (_legendre_roots(s) + 1.0) / 2.0
    # Vandermonde system V[q, j] = c_j^q, q = 0..s-1
    vand = np.vander(c, s, increasing=True).T
    powers = np.arange(1, s + 1)
    b = np.linalg.solve(vand, 1.0 / powers)
    rhs = c[None, :] ** powers[:, None] / powers[:, None]  # rhs[q-1, i] = c_i^q / q
    alpha = np.linalg.solve(vand, rhs).T
    return ButcherTableau(alpha, b, c, p=2 * s, name=name or f"gauss-{s}")


# ---------------------------------------------------------------------------
# Stability function and A-stability


def stability_function(tab, z):
    """Evaluate S(z) = 1 + z b^T (id - z alpha)^{-1} 1 by a dense solve."""
    z = complex(z)
    m = np.eye(tab.s) - z * tab.alpha
    if np.linalg.cond(m) > _SINGULAR_COND:
        raise SingularResolventError(f"id - z*alpha numerically singular at z={z}", z=z)
    x = np.linalg.solve(m, np.ones(tab.s))
    return complex(1.0 + z * (tab.b @ x))


def _stability_samples(tab, zs):
    """|S| and the smallest singular value of id - z*alpha on an array of z."""
    eye = np.eye(tab.s)
    mats = eye[None] - zs[:, None, None] * tab.alpha[None]
    svals = np.linalg.svd(mats, compute_uv=False)
    smin = svals[:, -1]
    mods = np.full(zs.shape, np.nan)
    ok = smin > 1e-300
    if np.any(ok):
        x = np.linalg.solve(mats[ok], np.ones(tab.s))
        mods[ok] = np.abs(1.0 + zs[ok] * (x @ tab.b))
    return mods, smin


@dataclass(frozen=True)
class AStabilityGridSpec:
    """Finite sample of the closed left half-plane used for (RK1)/(RK2)."""

    radius: float = 1e4
    axis_samples: int = 2048
    interior_shape: tuple = (64, 64)


@dataclass(frozen=True)
class StabilityReport:
    max_modulus_on_imaginary_axis: float
    max_modulus_on_left_half_grid: float
    min_singular_value: float
    alpha_eigenvalues: np.ndarray = field(repr=False)
    alpha_spectrum_in_rhp: bool = False
    rk1_pass: bool = False
    rk2_pass: bool = False
    singular_samples: int = 0

    @property
    def all_pass(self):
        return self.rk1_pass and self.rk2_pass

    def summary(self):
        lines = [
            f"max |S(iy)| on axis     : {self.max_modulus_on_imaginary_axis:.15g}",
            f"max |S(z)| on interior  : {self.max_modulus_on_left_half_grid:.15g}",
            f"min sigma(id - z alpha) : {self.min_singular_value:.6g}",
            f"spec(alpha) in Re>0     : {self.alpha_spectrum_in_rhp}",
            f"(RK1) {'pass' if self.rk1_pass else 'FAIL'}   (RK2) {'pass' if self.rk2_pass else 'FAIL'}",
        ]
        return "\n".join(lines)


def verify_a_stability(tab, grid_spec=None):
    """Check (RK1)/(RK2) on a sampled left half-plane plus the exact eigenvalue test.

    (RK1) is sampled on the imaginary axis and on a log-spaced interior grid.
    When the spectrum of alpha lies in the open right half-plane, S is analytic
    on Re z <= 0 and the axis maximum already bounds the interior (maximum
    principle); both sampled maxima are reported regardless.  (RK2) combines
    the sampled smallest singular value with the exact criterion that every
    eigenvalue of alpha has positive real part.
    """
    spec = grid_spec or AStabilityGridSpec()
    half = spec.axis_samples // 2
    ys = np.logspace(-3, np.log10(spec.radius), half)
    axis = np.concatenate([1j * ys, -1j * ys, [0.0 + 0.0j]])
    mods_axis, smin_axis = _stability_samples(tab, axis)

    n_re, n_im = spec.interior_shape
    res = -np.logspace(-3, np.log10(spec.radius), n_re)
    ims = np.concatenate([np.logspace(-3, np.log10(spec.radius), n_im // 2),
                          -np.logspace(-3, np.log10(spec.radius), n_im - n_im // 2)])
    zz = (res[:, None] + 1j * ims[None, :]).ravel()
    mods_grid, smin_grid = _stability_samples(tab, zz)

    eigs = np.linalg.eigvals(tab.alpha)
    in_rhp = bool(np.all(eigs.real > 0.0))
    max_axis = float(np.nanmax(mods_axis))
    max_grid = float(np.nanmax(mods_grid))
    min_sv = float(min(smin_axis.min(), smin_grid.min()))
    n_singular = int(np.sum(np.isnan(mods_axis)) + np.sum(np.isnan(mods_grid)))

    return StabilityReport(
        max_modulus_on_imaginary_axis=max_axis,
        max_modulus_on_left_half_grid=max_grid,
        min_singular_value=min_sv,
        alpha_eigenvalues=eigs,
        alpha_spectrum_in_rhp=in_rhp,
        rk1_pass=bool(max(max_axis, max_grid) <= 1.0 + 1e-10),
        rk2_pass=bool(min_sv > 1e-12 and in_rhp),
        singular_samples=n_singular,
    )


# ---------------------------------------------------------------------------
# Order conditions via rooted trees


@lru_cache(maxsize=None)
def _trees_up_to(order):
    """Canonical rooted trees of order <= order.

    A tree is a sorted tuple of child trees; the leaf is ().  Returns a list
    of (tree, order, density) triples sorted by order.
    """
    trees = [((), 1, 1)]
    by_order = {1: [((), 1, 1)]}
    for n in range(2, order + 1):
        found = {}
        pool = [t for t in trees if t[1] < n]
        # children multisets with total order n - 1
        def extend(start, remaining, children):
            if remaining == 0:
                key = tuple(sorted(c[0] for c in children))
                if key not in found:
                    dens = n
                    for c in children:
                        dens *= c[2]
                    found[key] = (key, n, dens)
                return
            for i in range(start, len(pool)):
                if pool[i][1] <= remaining:
                    extend(i, remaining - pool[i][1], children + [pool[i]])
        extend(0, n - 1, [])
        by_order[n] = sorted(found.values())
        trees.extend(by_order[n])
    return trees


def _elementary_weight(tab, tree):
    """Stage-wise elementary weight vector phi(tree)_i."""
    if not tree:
        return np.ones(tab.s)
    phi = np.ones(tab.s)
    for child in tree:
        phi = phi * (tab.alpha @ _elementary_weight(tab, child))
    return phi


@dataclass(frozen=True)
class OrderConditionReport:
    order: int
    passed: bool
    residuals: tuple  # (order, tree, residual) triples
    max_residual: float


def verify_order_conditions(tab, p, tol=1e-10):
    """Check the rooted-tree order conditions b . phi(t) = 1/gamma(t) through order p."""
    if not 1 <= p <= 8:
        raise ValueError(f"order conditions implemented for 1 <= p <= 8, got {p}")
    residuals = []
    for tree, order, density in _trees_up_to(p):
        r = float(abs(tab.b @ _elementary_weight(tab, tree) - 1.0 / density))
        residuals.append((order, tree, r))
    max_r = max(r for _, _, r in residuals)
    return OrderConditionReport(order=p, passed=bool(max_r <= tol),
                                residuals=tuple(residuals), max_residual=max_r)


# ---------------------------------------------------------------------------
# Plain-text exchange format


def save_tableau(tab, path):
    """Write the key/value exchange format (17 significant digits)."""

    def fmt(values):
        return " ".join(f"{v:.17g}" for v in values)

    lines = [f"s {tab.s}", f"p {tab.p}"]
    for i in range(tab.s):
        lines.append(f"a.{i + 1} {fmt(tab.alpha[i])}")
    lines.append(f"b {fmt(tab.b)}")
    lines.append(f"c {fmt(tab.c)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tableau(path, name=None):
    """Parse the exchange format written by :func:`save_tableau` (strict keys)."""
    entries = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key in entries:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            entries[key] = rest.split()
    if "s" not in entries or "p" not in entries:
        raise ValueError(f"{path}: missing required keys 's'/'p'")
    s = int(entries.pop("s")[0])
    p = int(entries.pop("p")[0])
    expected = {f"a.{i + 1}" for i in range(s)} | {"b", "c"}
    unknown = set(entries) - expected
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    missing = expected - set(entries)
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    alpha = np.array([[float(v) for v in entries[f"a.{i + 1}"]] for i in range(s)])
    b = np.array([float(v) for v in entries["b"]])
    c = np.array([float(v) for v in entries["c"]])
    return ButcherTableau(alpha, b, c, p=p, name=name or "file-tableau")

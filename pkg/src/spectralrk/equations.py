"""Concrete problems: semilinear wave and nonlinear Schroedinger.

Both are posed with periodic boundary conditions and a polynomial
nonlinearity, so the pseudospectral evaluation of B can be made alias-free by
zero padding: the padded transform length always covers (degree + 1) times the
allocated band, which makes polynomial products exact in exact arithmetic.

Wave equation, u_tt = u_xx - f(u) on (0,1), state U = (u, v):
    A is the 2x2 block [[0, 1], [-(2 pi k)^2, 0]] per mode k != 0; the zero
    mode of the full operator is nilpotent (not normal), so it is carried by
    the nonlinearity instead: B(U) = (mean(v), -f(u)).  Then A U + B(U)
    reproduces the wave system exactly.

NLS, i u_t = -u_xx + dV/d(conj u) on (0, 2 pi), state U = u complex:
    A = i d^2/dx^2 with eigenvalues -i k^2, B(U) = -i dV/d(conj u)(u, conj u).
    The base space is H^1 (mode weights sqrt(1 + k^2)), which realizes the
    scale Y_l = H^(2l+1).
"""

import numpy as np
from scipy.fft import next_fast_len

from .errors import NonlinearityOverflowError
from .spectral import SpectralState, block_grid, diagonal_grid, project

DEALIAS_RULES = ("three_halves_padding", "two_thirds", "none")


def _fft_ks(m_alloc):
    n = 2 * m_alloc + 1
    return np.rint(np.fft.fftfreq(n) * n).astype(int)


class Problem:
    """A concrete evolution equation: grid builder, nonlinearity, invariants."""

    def __init__(self, name, d, dealias_rule, k_declared, domain_radius_factor):
        if dealias_rule not in DEALIAS_RULES:
            raise ValueError(f"unknown dealias rule {dealias_rule!r}")
        self.name = name
        self.d = d
        self.dealias_rule = dealias_rule
        self.k_declared = k_declared
        self.domain_radius_factor = domain_radius_factor
        self._grids = {}

    # -- grid ----------------------------------------------------------------

    def build_grid(self, m_alloc):
        if m_alloc not in self._grids:
            self._grids[m_alloc] = self._make_grid(int(m_alloc))
        return self._grids[m_alloc]

    def spectral_cutoff(self, m_res):
        """Eigenvalue-modulus threshold of the projector keeping modes |k| <= m_res."""
        raise NotImplementedError

    # -- nonlinearity ----------------------------------------------------------

    @property
    def max_degree(self):
        raise NotImplementedError

    @property
    def is_linear(self):
        """True when B is a linear (possibly zero) map."""
        raise NotImplementedError

    @property
    def has_exact_flow(self):
        """True when the exact flow of the full equation is available."""
        raise NotImplementedError

    def exact_flow(self, u, t):
        raise NotImplementedError

    def cache_key(self):
        raise NotImplementedError

    # -- pseudospectral transforms ---------------------------------------------

    def _padded_length(self, n, m_alloc):
        if self.dealias_rule != "three_halves_padding":
            return n
        q = max(self.max_degree, 1)
        return next_fast_len(max(int(np.ceil(1.5 * n)), (q + 1) * m_alloc + 1))

    def _to_physical(self, grid, coeffs, m_len):
        spec = np.zeros((coeffs.shape[0], m_len), dtype=complex)
        spec[:, grid.ks % m_len] = coeffs
        return np.fft.ifft(spec, axis=-1) * m_len

    def _to_band(self, grid, phys, m_len):
        spec = np.fft.fft(phys, axis=-1) / m_len
        return spec[:, grid.ks % m_len]


def evaluate_B_m(problem, u, m):
    """Projected nonlinearity B_m(u) = P_m B(u), evaluated pseudospectrally.

    Transforms to the (padded) collocation grid, applies the pointwise
    nonlinearity, transforms back, dealiases per the problem rule, then
    applies the spectral projector with threshold ``m``.
    """
    bu = problem.evaluate_B(u)
    return project(bu, m)


class WaveProblem(Problem):
    def __init__(self, f_coeffs, dealias_rule="three_halves_padding",
                 k_declared=8, domain_radius_factor=10.0):
        f = np.asarray(f_coeffs, dtype=float) if len(f_coeffs) else np.zeros(0)
        if f.size and f.size - 1 > 7:
            raise ValueError(f"wave nonlinearity degree {f.size - 1} exceeds 7")
        super().__init__("wave", 2, dealias_rule, k_declared, domain_radius_factor)
        self.f_coeffs = f
        # antiderivative with F(0) = 0, for the energy functional
        self.F_coeffs = np.concatenate([[0.0], f / np.arange(1, f.size + 1)]) if f.size else np.zeros(1)

    def _make_grid(self, m_alloc):
        ks = _fft_ks(m_alloc)
        mu2 = (2.0 * np.pi * ks).astype(float) ** 2
        blocks = np.zeros((ks.size, 2, 2), dtype=complex)
        blocks[:, 0, 1] = np.where(ks != 0, 1.0, 0.0)
        blocks[:, 1, 0] = np.where(ks != 0, -mu2, 0.0)
        weights = np.vstack([np.where(ks != 0, 2.0 * np.pi * np.abs(ks), 1.0),
                             np.ones(ks.size)])
        return block_grid(ks, blocks, weights, omega=0.0)

    def spectral_cutoff(self, m_res):
        return 2.0 * np.pi * float(m_res)

    @property
    def max_degree(self):
        return max(int(self.f_coeffs.size) - 1, 0)

    @property
    def is_linear(self):
        return self.max_degree <= 1

    @property
    def has_exact_flow(self):
        # with f = 0 the flow is the semigroup plus the nilpotent zero-mode drift
        return self.f_coeffs.size == 0 or not np.any(self.f_coeffs)

    def exact_flow(self, u, t):
        from .spectral import apply_semigroup
        out = apply_semigroup(u, t)
        i0 = int(np.nonzero(u.grid.ks == 0)[0][0])
        out.coeffs[0, i0] += t * u.coeffs[1, i0]
        return out

    def cache_key(self):
        return ("wave", tuple(self.f_coeffs.tolist()), self.dealias_rule)

    def evaluate_B(self, u):
        grid = u.grid
        n = grid.n_modes
        m_alloc = int(np.max(grid.ks))
        out = np.zeros_like(u.coeffs)
        i0 = int(np.nonzero(grid.ks == 0)[0][0])
        out[0, i0] = u.coeffs[1, i0]  # the zero-mode part of the full operator
        if self.f_coeffs.size:
            m_len = self._padded_length(n, m_alloc)
            phys = self._to_physical(grid, u.coeffs[:1], m_len)
            with np.errstate(over="ignore", invalid="ignore"):
                fu = np.polynomial.polynomial.polyval(phys[0], self.f_coeffs)
            if not np.all(np.isfinite(fu)):
                raise NonlinearityOverflowError("nonlinearity produced non-finite values")
            band = self._to_band(grid, fu[None, :], m_len)[0]
            if self.dealias_rule == "two_thirds":
                band = np.where(np.abs(grid.ks) <= n // 3, band, 0.0)
            out[1] -= band
        return SpectralState(grid, out)

    @property
    def invariant_name(self):
        return "energy"

    def invariant(self, u):
        """Energy integral(v^2/2 + u_x^2/2 + F(u)) over (0, 1)."""
        grid = u.grid
        mu2 = (2.0 * np.pi * grid.ks) ** 2
        quad = 0.5 * float(np.sum(np.abs(u.coeffs[1]) ** 2)
                           + np.sum(mu2 * np.abs(u.coeffs[0]) ** 2))
        if not np.any(self.F_coeffs):
            return quad
        m_alloc = int(np.max(grid.ks))
        m_len = self._padded_length(grid.n_modes, m_alloc)
        phys = self._to_physical(grid, u.coeffs[:1], m_len)
        pot = np.polynomial.polynomial.polyval(phys[0], self.F_coeffs)
        return quad + float(np.mean(pot).real)


class NLSProblem(Problem):
    def __init__(self, potential_terms, dealias_rule="three_halves_padding",
                 k_declared=8, domain_radius_factor=10.0):
        terms = []
        if isinstance(potential_terms, dict):
            potential_terms = [(a, b, c) for (a, b), c in potential_terms.items()]
        for a, b, coef in potential_terms:
            a, b = int(a), int(b)
            if a < 0 or b < 0 or a + b > 5:
                raise ValueError(f"potential term u^{a} conj(u)^{b} outside total degree 5")
            if coef != 0.0:
                terms.append((a, b, complex(coef)))
        super().__init__("nls", 1, dealias_rule, k_declared, domain_radius_factor)
        self.terms = tuple(sorted(terms, key=lambda t: (t[0], t[1])))

    def _make_grid(self, m_alloc):
        ks = _fft_ks(m_alloc)
        lam = -1j * ks.astype(float) ** 2
        weights = np.sqrt(1.0 + ks.astype(float) ** 2)[None, :]
        return diagonal_grid(ks, lam, weights, omega=0.0)

    def spectral_cutoff(self, m_res):
        return float(m_res) ** 2

    @property
    def max_degree(self):
        return max((a + b for a, b, _ in self.terms), default=0)

    @property
    def is_linear(self):
        return not self.terms

    @property
    def has_exact_flow(self):
        return self.is_linear

    def exact_flow(self, u, t):
        from .spectral import apply_semigroup
        return apply_semigroup(u, t)

    def cache_key(self):
        return ("nls", self.terms, self.dealias_rule)

    def evaluate_B(self, u):
        grid = u.grid
        if not self.terms:
            return SpectralState(grid, np.zeros_like(u.coeffs))
        n = grid.n_modes
        m_alloc = int(np.max(grid.ks))
        m_len = self._padded_length(n, m_alloc)
        phys = self._to_physical(grid, u.coeffs, m_len)[0]
        conj = np.conj(phys)
        w = np.zeros_like(phys)
        with np.errstate(over="ignore", invalid="ignore"):
            for a, b, coef in self.terms:
                w += coef * phys**a * conj**b
        if not np.all(np.isfinite(w)):
            raise NonlinearityOverflowError("nonlinearity produced non-finite values")
        band = self._to_band(grid, w[None, :], m_len)
        if self.dealias_rule == "two_thirds":
            band = np.where(np.abs(grid.ks)[None, :] <= n // 3, band, 0.0)
        return SpectralState(grid, -1j * band)

    @property
    def invariant_name(self):
        return "mass"

    def invariant(self, u):
        """Mass integral(|u|^2) over (0, 2 pi)."""
        return 2.0 * np.pi * float(np.sum(np.abs(u.coeffs) ** 2))


def wave_problem(f_coeffs, **kw):
    """Semilinear wave equation with f(u) given by ascending polynomial coefficients."""
    return WaveProblem(f_coeffs, **kw)


def nls_problem(potential_terms, **kw):
    """NLS with dV/d(conj u) = sum_(a,b) c_ab u^a conj(u)^b.

    ``potential_terms``: dict {(a, b): c} or iterable of (a, b, c).  The cubic
    focusing/defocusing equation is {(2, 1): +/-1}.
    """
    return NLSProblem(potential_terms, **kw)


def cubic_nls(sign=1.0, **kw):
    """i u_t = -u_xx + sign * |u|^2 u."""
    return NLSProblem({(2, 1): sign}, **kw)


# ---------------------------------------------------------------------------
# Initial data


def _symmetric_profile(rng, ks, amp):
    """Random-phase coefficients with conjugate symmetry (real field)."""
    coeffs = np.zeros(ks.size, dtype=complex)
    order = np.argsort(ks)
    for k in ks[order]:
        if k < 0:
            continue
        i = int(np.nonzero(ks == k)[0][0])
        if k == 0:
            coeffs[i] = amp(0)
        else:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            j = int(np.nonzero(ks == -k)[0][0])
            coeffs[i] = 0.5 * amp(k) * np.exp(1j * phase)
            coeffs[j] = np.conj(coeffs[i])
    return coeffs


def make_initial_data(problem, kind, m_alloc, *, seed=0, r=None, k=None, k0=6.0,
                      band_limit=None):
    """Deterministic initial states, normalized to ||.||_{Y_0} = 1.

    kind = "band_limited_smooth": Gaussian spectrum exp(-(k/k0)^2), random phases.
    kind = "algebraic_decay":     |coeff_k| = (1+|k|)^(-r); lies in H^s exactly
                                  for s < r - 1/2 (requires r > 1/2).
    kind = "single_mode":         one unit coefficient (a cosine for the wave).

    ``band_limit`` hard-truncates the profile to wavenumbers |k| <= band_limit
    before normalizing (useful to decouple temporal resolvability from the
    spectral tail).
    """
    from .spectral import scale_norm

    grid = problem.build_grid(m_alloc)
    ks = grid.ks
    rng = np.random.default_rng(seed)
    coeffs = np.zeros((grid.d, grid.n_modes), dtype=complex)

    if kind == "band_limited_smooth":
        amp = lambda kk: np.exp(-((kk / k0) ** 2))
    elif kind == "algebraic_decay":
        if r is None or not r > 0.5:
            raise ValueError("algebraic_decay requires r > 1/2")
        amp = lambda kk: (1.0 + abs(kk)) ** (-r)
    elif kind == "single_mode":
        if k is None:
            raise ValueError("single_mode requires a wavenumber k")
        if abs(int(k)) > m_alloc:
            raise ValueError(f"mode {k} outside allocated band {m_alloc}")
    else:
        raise ValueError(f"unknown initial-data kind {kind!r}")

    if kind == "single_mode":
        k = int(k)
        if problem.d == 1:
            coeffs[0, np.nonzero(ks == k)[0][0]] = 1.0
        else:
            if k == 0:
                coeffs[0, np.nonzero(ks == 0)[0][0]] = 1.0
            else:
                coeffs[0, np.nonzero(ks == k)[0][0]] = 0.5
                coeffs[0, np.nonzero(ks == -k)[0][0]] = 0.5
    elif problem.d == 1:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=ks.size)
        coeffs[0] = amp(np.abs(ks)) * np.exp(1j * phases)
    else:
        for comp in range(problem.d):
            coeffs[comp] = _symmetric_profile(rng, ks, amp)

    if band_limit is not None:
        coeffs = np.where(np.abs(ks)[None, :] <= int(band_limit), coeffs, 0.0)
    u = SpectralState(grid, coeffs)
    norm = scale_norm(u, 0)
    if norm == 0.0:
        raise ValueError("initial data has zero norm")
    return SpectralState(grid, coeffs / norm)

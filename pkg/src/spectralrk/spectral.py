"""Fourier-coefficient states, the diagonal operator A, projectors, and scale norms.

States live on a ModeGrid: one complex eigenvalue per mode for scalar problems
(d = 1), or a 2x2 normal block per mode for first-order systems (d = 2, wave).
The base inner product carries per-component mode weights, so the abstract
hierarchy of spaces is

    ||u||_{Y_l}^2 = ||P u||_{Y_0}^2 + || |A|^l Q u ||_{Y_0}^2,

with P the spectral projector onto eigenvalue moduli <= 1 and Q = 1 - P.
The projector P_m zeroes all modes with eigenvalue modulus above the real
threshold m; the threshold is deliberately decoupled from the allocated array
size so studies can vary m without re-gridding.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

_NORMALITY_TOL = 1e-13
DEFAULT_K_MAX = 8


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Wavenumbers, eigenstructure of A, and base-norm weights."""

    ks: np.ndarray                 # integer wavenumbers in FFT order
    d: int                         # number of state components (1 or 2)
    weights: np.ndarray            # (d, n) positive component weights of Y_0
    omega: float                   # upper bound on Re spec(A)
    lam: np.ndarray = None         # (n,) eigenvalues (d = 1)
    blocks: np.ndarray = None      # (n, d, d) blocks of A (d = 2)
    # derived eigenstructure, filled by the factories
    mod: np.ndarray = field(default=None, repr=False)      # (n,) eigenvalue modulus per mode
    eigs: np.ndarray = field(default=None, repr=False)     # (n, d) block eigenvalues
    zmat: np.ndarray = field(default=None, repr=False)     # (n, d, d) unitary factors, weighted coords

    @property
    def n_modes(self):
        return self.ks.size

    @property
    def is_group(self):
        """True when e^{tA} extends to a group (purely imaginary spectrum)."""
        if self.d == 1:
            re = np.abs(self.lam.real)
        else:
            re = np.abs(self.eigs.real)
        return self.omega == 0.0 and float(np.max(re)) < 1e-12

    def weighted_blocks(self):
        """Blocks conjugated into weighted coordinates, D A_k D^{-1} (d = 2)."""
        dmat = self.weights.T  # (n, d)
        return self.blocks * (dmat[:, :, None] / dmat[:, None, :])

    def block_function(self, fvals):
        """Matrices f(A_k) from channel values ``fvals`` of shape (n, d).

        Uses the weighted unitary eigenstructure: f(A) = D^{-1} Z f(L) Z^H D.
        """
        core = np.einsum("nij,nj,nkj->nik", self.zmat, fvals, self.zmat.conj())
        dmat = self.weights.T
        return core * (dmat[:, None, :] / dmat[:, :, None])


def _check_mode_pairing(ks):
    present = set(int(k) for k in ks)
    for k in present:
        if -k not in present:
            raise ValueError(f"mode {k} present without its partner {-k}")
    if len(present) != len(ks):
        raise ValueError("duplicate wavenumbers in mode list")


def diagonal_grid(ks, lam, weights, omega=0.0):
    """Grid for a scalar (d = 1) problem with eigenvalues ``lam``."""
    ks = np.asarray(ks, dtype=int)
    lam = np.asarray(lam, dtype=complex)
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    _check_mode_pairing(ks)
    if np.max(lam.real) > omega + 1e-12:
        raise ValueError("eigenvalue with real part above omega")
    if np.any(weights <= 0):
        raise ValueError("base-norm weights must be positive")
    return ModeGrid(ks=ks, d=1, weights=weights, omega=omega, lam=lam,
                    mod=np.abs(lam), eigs=lam[:, None], zmat=None)


def block_grid(ks, blocks, weights, omega=0.0):
    """Grid for a d = 2 problem with normal blocks (normality in the weighted metric)."""
    ks = np.asarray(ks, dtype=int)
    blocks = np.asarray(blocks, dtype=complex)
    weights = np.asarray(weights, dtype=float)
    _check_mode_pairing(ks)
    if np.any(weights <= 0):
        raise ValueError("base-norm weights must be positive")
    n, d = ks.size, blocks.shape[1]
    dmat = weights.T
    hatted = blocks * (dmat[:, :, None] / dmat[:, None, :])
    eigs = np.empty((n, d), dtype=complex)
    zmat = np.empty((n, d, d), dtype=complex)
    for i in range(n):
        scale = max(1.0, float(np.abs(hatted[i]).max()) ** 2)
        comm = hatted[i] @ hatted[i].conj().T - hatted[i].conj().T @ hatted[i]
        if np.abs(comm).max() > _NORMALITY_TOL * scale:
            raise ValueError(f"block for mode {ks[i]} is not normal in the weighted metric")
        t, z = scipy.linalg.schur(hatted[i], output="complex")
        eigs[i] = np.diag(t)
        zmat[i] = z
    if np.max(eigs.real) > omega + 1e-12:
        raise ValueError("eigenvalue with real part above omega")
    return ModeGrid(ks=ks, d=d, weights=weights, omega=omega, blocks=blocks,
                    mod=np.abs(eigs).max(axis=1), eigs=eigs, zmat=zmat)


@dataclass(eq=False)
class SpectralState:
    """Complex coefficient array over (components, modes) on a ModeGrid.

    Treated as an immutable value: every operation returns a fresh state.
    """

    grid: ModeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs[None, :]
        if coeffs.shape != (self.grid.d, self.grid.n_modes):
            raise ValueError(f"coefficient shape {coeffs.shape} does not match grid "
                             f"({self.grid.d}, {self.grid.n_modes})")
        self.coeffs = coeffs

    def copy(self):
        return SpectralState(self.grid, self.coeffs.copy())

    def _binary(self, other, op):
        if other.grid is not self.grid and not np.array_equal(other.grid.ks, self.grid.ks):
            raise ValueError("states live on different grids")
        return SpectralState(self.grid, op(self.coeffs, other.coeffs))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return SpectralState(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


def zero_state(grid):
    return SpectralState(grid, np.zeros((grid.d, grid.n_modes), dtype=complex))


def _channel_coords(u):
    """Per-mode coordinates in which A and the Y_l norms are diagonal.

    d = 1: the weighted coefficient; d = 2: Z^H D u_k per mode, shape (d, n).
    """
    g = u.grid
    wc = g.weights * u.coeffs
    if g.d == 1:
        return wc
    return np.einsum("nji,jn->in", g.zmat.conj(), wc)


def scale_norm(u, ell, k_max=DEFAULT_K_MAX):
    """Scale norm ||u||_{Y_ell}; ell = 0 is the weighted coefficient 2-norm."""
    if not 0 <= ell <= k_max:
        raise ValueError(f"scale index {ell} outside 0..{k_max}")
    g = u.grid
    y2 = np.abs(_channel_coords(u)) ** 2
    if ell == 0:
        return float(np.sqrt(y2.sum()))
    q = g.mod > 1.0
    if g.d == 1:
        chan_mod = g.mod[None, :]
    else:
        chan_mod = np.abs(g.eigs).T
    total = y2[:, ~q].sum()
    total += (chan_mod[:, q] ** (2 * ell) * y2[:, q]).sum()
    return float(np.sqrt(total))


def inner(u, v):
    """Y_0 inner product."""
    yu = _channel_coords(u)
    yv = _channel_coords(v)
    return complex(np.sum(np.conj(yu) * yv))


def project(u, m):
    """Spectral projector P_m: zero all modes with eigenvalue modulus above m."""
    if not m > 0:
        raise ValueError("projector threshold must be positive")
    mask = u.grid.mod <= m
    return SpectralState(u.grid, np.where(mask[None, :], u.coeffs, 0.0))


def remainder(u, m):
    """Galerkin remainder Q_m u = u - P_m u."""
    if not m > 0:
        raise ValueError("projector threshold must be positive")
    mask = u.grid.mod > m
    return SpectralState(u.grid, np.where(mask[None, :], u.coeffs, 0.0))


def apply_A(u):
    """Apply the linear operator mode-wise."""
    g = u.grid
    if g.d == 1:
        return SpectralState(g, g.lam[None, :] * u.coeffs)
    return SpectralState(g, np.einsum("nij,jn->in", g.blocks, u.coeffs))


def apply_semigroup(u, t):
    """Apply e^{tA} exactly, mode-wise (t < 0 only in the group case)."""
    g = u.grid
    if t < 0 and not g.is_group:
        raise ValueError("negative time requires a group (purely imaginary spectrum)")
    if t == 0:
        return u.copy()
    if g.d == 1:
        return SpectralState(g, np.exp(t * g.lam)[None, :] * u.coeffs)
    mats = g.block_function(np.exp(t * g.eigs))
    return SpectralState(g, np.einsum("nij,jn->in", mats, u.coeffs))


# ---------------------------------------------------------------------------
# Snapshot format


def save_state(path, u, header=None):
    """Textual snapshot: d, mode list, then one line of 17-digit coefficients per mode."""
    g = u.grid
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.append(f"d {g.d}")
    lines.append("modes " + " ".join(str(int(k)) for k in g.ks))
    for i in range(g.n_modes):
        parts = []
        for comp in range(g.d):
            z = u.coeffs[comp, i]
            parts.append(f"{z.real:.17g} {z.imag:.17g}")
        lines.append(f"{int(g.ks[i])} " + " ".join(parts))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_state(path, grid):
    """Read a snapshot written by :func:`save_state` onto ``grid`` (validated)."""
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows[0].startswith("d ") or not rows[1].startswith("modes "):
        raise ValueError(f"{path}: malformed snapshot header")
    d = int(rows[0].split()[1])
    modes = np.array([int(v) for v in rows[1].split()[1:]])
    if d != grid.d or not np.array_equal(modes, grid.ks):
        raise ValueError(f"{path}: snapshot does not match the target grid")
    coeffs = np.zeros((d, modes.size), dtype=complex)
    for i, row in enumerate(rows[2:]):
        vals = row.split()
        if int(vals[0]) != modes[i]:
            raise ValueError(f"{path}: mode order mismatch at row {i}")
        nums = [float(v) for v in vals[1:]]
        for comp in range(d):
            coeffs[comp, i] = complex(nums[2 * comp], nums[2 * comp + 1])
    return SpectralState(grid, coeffs)

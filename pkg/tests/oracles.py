"""Independent oracles used to derive expected values in the tests.

Everything here deliberately avoids the library's own computational paths:
closed forms, dense convolutions, finite differences, and scipy's generic ODE
machinery.
"""

import numpy as np
from scipy.integrate import solve_ivp


# closed-form stability functions of the 1- and 2-stage Gauss methods
# (diagonal Pade approximants of exp)
def stab_gauss1(z):
    return (1.0 + z / 2.0) / (1.0 - z / 2.0)


def stab_gauss2(z):
    num = 1.0 + z / 2.0 + z * z / 12.0
    den = 1.0 - z / 2.0 + z * z / 12.0
    return num / den


# hand-written Runge-Kutta order conditions through order 4
def order_condition_residuals(alpha, b, c, order):
    conds = []
    if order >= 1:
        conds.append(b.sum() - 1.0)
    if order >= 2:
        conds.append(b @ c - 1.0 / 2.0)
    if order >= 3:
        conds.append(b @ c**2 - 1.0 / 3.0)
        conds.append(b @ (alpha @ c) - 1.0 / 6.0)
    if order >= 4:
        conds.append(b @ c**3 - 1.0 / 4.0)
        conds.append((b * c) @ (alpha @ c) - 1.0 / 8.0)
        conds.append(b @ (alpha @ c**2) - 1.0 / 12.0)
        conds.append(b @ (alpha @ (alpha @ c)) - 1.0 / 24.0)
    return np.array(conds)


def legendre_nodes_shifted(s):
    """Shifted Legendre roots on [0,1] via the companion matrix."""
    coeffs = np.zeros(s + 1)
    coeffs[s] = 1.0
    return np.sort((np.polynomial.legendre.legroots(coeffs) + 1.0) / 2.0)


# dense convolution of coefficient sequences (alias-free by construction)
def conv_spectra(a_ks, a_vals, b_ks, b_vals):
    """Pointwise product of two trigonometric polynomials in coefficient space."""
    out = {}
    for ka, va in zip(a_ks, a_vals):
        for kb, vb in zip(b_ks, b_vals):
            out[ka + kb] = out.get(ka + kb, 0.0) + va * vb
    ks = np.array(sorted(out))
    return ks, np.array([out[k] for k in ks])


def poly_of_spectrum(ks, vals, coeffs):
    """Coefficients of sum_j coeffs[j] * u(x)^j for u given by (ks, vals)."""
    acc = {0: complex(coeffs[0])} if len(coeffs) else {0: 0.0}
    cur_ks, cur_vals = np.array([0]), np.array([1.0 + 0.0j])
    for j in range(1, len(coeffs)):
        cur_ks, cur_vals = conv_spectra(cur_ks, cur_vals, ks, vals)
        for k, v in zip(cur_ks, cur_vals):
            acc[k] = acc.get(k, 0.0) + coeffs[j] * v
    out_ks = np.array(sorted(acc))
    return out_ks, np.array([acc[k] for k in out_ks])


def nls_term_spectrum(ks, vals, a, bpow):
    """Coefficients of u^a * conj(u)^b for u given by (ks, vals)."""
    cur_ks, cur_vals = np.array([0]), np.array([1.0 + 0.0j])
    for _ in range(a):
        cur_ks, cur_vals = conv_spectra(cur_ks, cur_vals, ks, vals)
    for _ in range(bpow):
        cur_ks, cur_vals = conv_spectra(cur_ks, cur_vals, -ks, np.conj(vals))
    return cur_ks, cur_vals


def extract_mode(ks, vals, k):
    hit = np.nonzero(ks == k)[0]
    return vals[hit[0]] if hit.size else 0.0


# scalar implicit midpoint with Newton iteration, for one-mode ODEs
def implicit_midpoint_scalar(f, df, u0, h, n_steps, tol=1e-14):
    u = complex(u0)
    for _ in range(n_steps):
        w = u
        for _ in range(100):
            g = w - u - (h / 2.0) * f(w)
            if abs(g) < tol:
                break
            w = w - g / (1.0 - (h / 2.0) * df(w))
        u = u + h * f(w)
    return u


# 8th-order central difference second derivative on a periodic grid
_FD8 = np.array([-1.0 / 560, 8.0 / 315, -1.0 / 5, 8.0 / 5,
                 -205.0 / 72, 8.0 / 5, -1.0 / 5, 8.0 / 315, -1.0 / 560])


def fd8_second_derivative(samples, length):
    n = samples.size
    dx = length / n
    out = np.zeros_like(samples)
    for offset, w in zip(range(-4, 5), _FD8):
        out += w * np.roll(samples, -offset)
    return out / dx**2


def nls_flow_scipy(terms, ks, u0_coeffs, T, rtol=1e-12, atol=1e-14):
    """Cubic-type NLS spectral ODE integrated by scipy (dense convolution RHS)."""

    def rhs(_t, y):
        vals = y[:ks.size] + 1j * y[ks.size:]
        dv = -1j * ks.astype(float) ** 2 * vals
        for a, bpow, coef in terms:
            pk, pv = nls_term_spectrum(ks, vals, a, bpow)
            for k, v in zip(pk, pv):
                hit = np.nonzero(ks == k)[0]
                if hit.size:
                    dv[hit[0]] += -1j * coef * v
        return np.concatenate([dv.real, dv.imag])

    y0 = np.concatenate([u0_coeffs.real, u0_coeffs.imag])
    sol = solve_ivp(rhs, (0.0, T), y0, rtol=rtol, atol=atol, method="DOP853")
    y = sol.y[:, -1]
    return y[:ks.size] + 1j * y[ks.size:]


def wave_block_exponential(k, t):
    """Closed-form exp(t A_k) for the wave block [[0,1],[-(2 pi k)^2, 0]]."""
    mu = 2.0 * np.pi * abs(k)
    if mu == 0.0:
        return np.eye(2)
    th = mu * t
    return np.array([[np.cos(th), np.sin(th) / mu],
                     [-mu * np.sin(th), np.cos(th)]])

"""Closed-form Dirac monopole of type k on punctured R^3.

Coordinates x = (y, z) with z = x1 + i x2 and r = sqrt(y^2 + |z|^2).  The
model of type k = (k_1 <= ... <= k_r) is the diagonal direct sum of rank-1
monopoles: xi = diag(i k_j)/(2r), abelian chart connections

    A_pm = (k/4)(mp 1 + y/r) (zbar dz - z dzbar)/|z|^2

on U_pm = {z = 0 => pm y > 0}, holomorphic gauge factors
u_pm = (r pm y)^{pm k/2}, chart transition (z/|z|)^k.  Everything here is
a pointwise evaluator; this module is the exact oracle for behavior near
a puncture.
"""

from __future__ import annotations

import numpy as np


class AtSingularity(Exception):
    pass


class OutsideChart(Exception):
    pass


class InsufficientShells(Exception):
    pass


def check_type(k):
    k = tuple(int(v) for v in k)
    if any(k[i] > k[i + 1] for i in range(len(k) - 1)):
        raise ValueError(f"type must be increasing, got {k}")
    return k


def radius(y, z):
    return np.sqrt(np.asarray(y, dtype=float) ** 2 + np.abs(z) ** 2)


def xi_k(k, y, z):
    """xi = diag(i k_1, ..., i k_r)/(2 r); skew-Hermitian, singular at r=0."""
    k = check_type(k)
    r = radius(y, z)
    if np.any(r == 0):
        raise AtSingularity("xi_k evaluated at r = 0")
    r = np.asarray(r)
    out = np.zeros(r.shape + (len(k), len(k)), dtype=complex)
    for j, kj in enumerate(k):
        out[..., j, j] = 1j * kj / (2.0 * r)
    return out


def connection_coeffs(k, y, z, chart="plus"):
    """Abelian chart connection; returns (c_dz, c_dzbar, c_dy), each an
    array of per-entry diagonal coefficients, shape (..., r).

    Uses the stable form (mp 1 + y/r)/|z|^2 = mp 1/(r (r pm y)), which is
    smooth on the whole chart including the |z| -> 0 axis.
    """
    k = check_type(k)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=complex)
    r = radius(y, z)
    if np.any(r == 0):
        raise AtSingularity("connection evaluated at r = 0")
    sign = +1.0 if chart == "plus" else -1.0
    if np.any(r + sign * y <= 0) or np.any((np.abs(z) == 0) & (sign * y <= 0)):
        raise OutsideChart(f"point outside U_{chart}")
    base = -sign / (r * (r + sign * y))  # = (mp 1 + y/r)/|z|^2
    kk = np.asarray(k, dtype=float)
    c_dz = (kk / 4.0) * (base * np.conj(z))[..., None]
    c_dzbar = -(kk / 4.0) * (base * z)[..., None]
    c_dy = np.zeros_like(c_dz)
    return c_dz, c_dzbar, c_dy


def holomorphic_gauge(k, y, z, chart="plus"):
    """u_pm = diag((r pm y)^{pm k_j / 2}); composed with the chart
    trivialization it is holomorphic for the model."""
    k = check_type(k)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=complex)
    r = radius(y, z)
    sign = +1.0 if chart == "plus" else -1.0
    base = r + sign * y
    if np.any(base <= 0):
        raise OutsideChart(f"point outside U_{chart}")
    kk = np.asarray(k, dtype=float)
    return np.power(base[..., None], sign * kk / 2.0)


def transition(k, z):
    """Chart transition on U_+ cap U_-: diag((z/|z|)^{k_j})."""
    k = check_type(k)
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise OutsideChart("transition undefined on the axis z = 0")
    phase = z / np.abs(z)
    return np.stack([phase ** kj for kj in k], axis=-1)


def bogomolny_residual(k, y, z, chart="plus"):
    """max |F - * d xi| over 2-form components and diagonal entries,
    assembled from closed-form derivatives of the chart coefficients.

    chart="auto" evaluates every point in its well-conditioned chart
    (plus for y >= 0): near the opposite axis the 1/|z|^2 cancellations
    amplify roundoff even though the identity is exact."""
    k = check_type(k)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=complex)
    if chart == "auto":
        up = bogomolny_residual(k, np.abs(y), z, "plus")
        return np.broadcast_to(up, np.shape(y)).copy() if np.ndim(y) \
            else up
    r = radius(y, z)
    if np.any(r == 0):
        raise AtSingularity("residual evaluated at r = 0")
    sign = +1.0 if chart == "plus" else -1.0
    x1, x2 = z.real, z.imag
    rho2 = np.abs(z) ** 2
    # c = mp (k/4) / (r (r pm y)); chain-rule derivatives, not pre-simplified
    u = r * (r + sign * y)
    du_dy = (y / r) * (r + sign * y) + r * (y / r + sign)
    du_drho2 = 0.5 / r * (r + sign * y) + r * (0.5 / r)  # d/d(rho^2), drho2 r = 1/(2r)
    kk = np.asarray(k, dtype=float)[None, ...] if np.ndim(k) else np.asarray(k, dtype=float)
    kk = np.asarray(k, dtype=float)
    res = 0.0
    for kj in kk:
        c = -sign * (kj / 4.0) / u
        c_y = sign * (kj / 4.0) * du_dy / u ** 2
        c_rho2 = sign * (kj / 4.0) * du_drho2 / u ** 2
        # F components (A = 2 i c (x1 dx2 - x2 dx1)):
        F_y1 = -2.0 * c_y * x2          # coefficient of dy^dx1, divided by i
        F_y2 = 2.0 * c_y * x1           # dy^dx2
        F_12 = 2.0 * (2.0 * rho2 * c_rho2) + 4.0 * c   # dx1^dx2
        # * d xi for entry kj: xi = i kj / (2 r)
        S_12 = -kj * y / (2.0 * r ** 3)
        S_y1 = -kj * x2 / (2.0 * r ** 3) * (-1.0)  # see orientation note below
        S_y2 = kj * x1 / (2.0 * r ** 3) * (-1.0)
        # orientation dy^dx1^dx2: *dy = dx1^dx2, *dx1 = dx2^dy, *dx2 = dy^dx1
        # => *dxi = -(kj/2r^3) [ y dx1^dx2 + x1 dx2^dy + x2 dy^dx1 ]
        S_y1 = -kj * x2 / (2.0 * r ** 3)
        S_y2 = +kj * x1 / (2.0 * r ** 3)
        res = np.maximum(res, np.abs(F_y1 - S_y1))
        res = np.maximum(res, np.abs(F_y2 - S_y2))
        res = np.maximum(res, np.abs(F_12 - S_12))
    return res


# ---------------------------------------------------------------------------
# chart-minus complex potential: the glued-frame representation
# ---------------------------------------------------------------------------
#
# In the chart-minus unitary frame the rank-1 model data is the complex
# gauge transform of the flat pair by exp(w) with w = -(k/2) log(r - y):
#
#   dbar-coefficient  dw/dzbar = -k z / (4 r (r - y))
#   d_y-coefficient   dw/dy    = +k / (2 r)
#
# The frame is singular exactly on the half-axis {z = 0, y >= 0} (the
# string).  log(r - y) is harmonic away from the string and its radial
# derivative is 1/r identically; both facts are used by the analytic
# moment-map source downstream.

def pot_w(kj, y, z):
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=complex)
    r = radius(y, z)
    return -(kj / 2.0) * np.log(r - y)


def pot_w_dy(kj, y, z):
    r = radius(y, z)
    return (kj / 2.0) / r + 0.0j


def pot_w_dzbar(kj, y, z):
    z = np.asarray(z, dtype=complex)
    r = radius(y, z)
    return -(kj / 4.0) * z / (r * (r - y))


def pot_w_dz(kj, y, z):
    z = np.asarray(z, dtype=complex)
    r = radius(y, z)
    return -(kj / 4.0) * np.conj(z) / (r * (r - y))


# ---------------------------------------------------------------------------
# smooth cutoff chi: 1 on [0,1], 0 on [2, infty)
# ---------------------------------------------------------------------------

def _f(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _fp(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def _fpp(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    sp = s[pos]
    out[pos] = np.exp(-1.0 / sp) * (1.0 - 2.0 * sp) / sp ** 4
    return out


def chi(t):
    t = np.asarray(t, dtype=float)
    n = _f(2.0 - t)
    m = _f(t - 1.0)
    with np.errstate(invalid="ignore"):
        out = np.where(t <= 1.0, 1.0, np.where(t >= 2.0, 0.0, n / (n + m)))
    return out


def chi_p(t):
    t = np.asarray(t, dtype=float)
    n, m = _f(2.0 - t), _f(t - 1.0)
    npr, mpr = -_fp(2.0 - t), _fp(t - 1.0)
    d = n + m
    with np.errstate(invalid="ignore", divide="ignore"):
        val = (npr * m - n * mpr) / d ** 2
    return np.where((t <= 1.0) | (t >= 2.0), 0.0, val)


def chi_pp(t):
    t = np.asarray(t, dtype=float)
    n, m = _f(2.0 - t), _f(t - 1.0)
    npr, mpr = -_fp(2.0 - t), _fp(t - 1.0)
    npp, mpp = _fpp(2.0 - t), _fpp(t - 1.0)
    d = n + m
    dp = npr + mpr
    with np.errstate(invalid="ignore", divide="ignore"):
        val = (npp * m - n * mpp) / d ** 2 - 2.0 * (npr * m - n * mpr) * dp / d ** 3
    return np.where((t <= 1.0) | (t >= 2.0), 0.0, val)


# ---------------------------------------------------------------------------
# scattering law of the model
# ---------------------------------------------------------------------------

def transport_closed_form(kj, z, y_from, y_to):
    """exp(-int b dy) for the rank-1 chart-minus model, b = k/(2r):
    equals ((y_to + r_to)/(y_from + r_from))^(-k/2)."""
    z = np.asarray(z, dtype=complex)
    r1 = radius(y_from, z)
    r2 = radius(y_to, z)
    return ((y_to + r2) / (y_from + r1)) ** (-kj / 2.0)


def scattering_closed_form(kj, z, y_from, y_to):
    """Model scattering in holomorphic end trivializations: u_+ tau T u_-^{-1}.

    Identically z^k; kept as the composed expression so tests exercise the
    chart bookkeeping rather than the simplified answer.
    """
    z = np.asarray(z, dtype=complex)
    r1 = radius(y_from, z)
    r2 = radius(y_to, z)
    u_plus = (r2 + y_to) ** (kj / 2.0)
    u_minus_inv = (r1 - y_from) ** (kj / 2.0)
    tau = (z / np.abs(z)) ** kj
    return u_plus * tau * transport_closed_form(kj, z, y_from, y_to) * u_minus_inv


# ---------------------------------------------------------------------------
# decay-rate fits on shells
# ---------------------------------------------------------------------------

def fit_log_slope(radii, values):
    """Least-squares slope of log(values) against log(radii).

    Zero values collapse to the +inf sentinel (difference identically
    zero, infinitely fast decay).
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.all(values < 1e-300):
        return np.inf
    lv = np.log(np.maximum(values, 1e-300))
    lr = np.log(radii)
    A = np.stack([lr, np.ones_like(lr)], axis=1)
    sol, *_ = np.linalg.lstsq(A, lv, rcond=None)
    return float(sol[0])


def shell_radii(epsilon, r_outer, n=6):
    """Geometric ladder of shell radii in [2*eps, r_outer]."""
    lo = 2.0 * epsilon
    if r_outer <= lo * 1.05:
        raise InsufficientShells(f"no room for shells in [{lo}, {r_outer}]")
    return np.geomspace(lo, r_outer, n)


def decay_check(r_field, diffs, valid, epsilon, r_outer, n_shells=6):
    """Fit log-sup-norm of each difference field against log r on shells.

    ``diffs`` maps names to fields of per-node magnitudes (already reduced
    over matrix indices); returns {name: slope}, +inf when identically 0.
    Raises InsufficientShells if fewer than 3 shells contain nodes.
    """
    radii = shell_radii(epsilon, r_outer, n_shells)
    edges = np.sqrt(radii[:-1] * radii[1:])
    edges = np.concatenate([[radii[0] * radii[0] / edges[0]], edges,
                            [radii[-1] * radii[-1] / edges[-1]]])
    out = {}
    sup = {name: [] for name in diffs}
    centers = []
    for i in range(len(radii)):
        m = valid & (r_field >= edges[i]) & (r_field < edges[i + 1])
        if m.sum() == 0:
            continue
        centers.append(radii[i])
        for name, f in diffs.items():
            sup[name].append(np.abs(f[m]).max())
    if len(centers) < 3:
        raise InsufficientShells(f"only {len(centers)} populated shells")
    for name in diffs:
        out[name] = fit_log_slope(centers, sup[name])
    return out

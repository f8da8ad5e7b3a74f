"""Pointwise Hermitian matrix calculus on small fibers.

Everything is eigendecomposition-based (fibers have rank <= 4, exactness
beats speed).  Functions accept either a single (r, r) matrix or a field
of them, shape (..., r, r), and act on the trailing two axes.
"""

from __future__ import annotations

import numpy as np

HERM_TOL = 1e-12


class NotPositiveDefinite(Exception):
    pass


def dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def is_hermitian(x, tol=HERM_TOL):
    x = np.asarray(x)
    scale = np.abs(x).max() or 1.0
    return np.abs(x - dagger(x)).max() <= tol * max(scale, 1.0)


def hermitize(x):
    """Project onto the Hermitian part."""
    return 0.5 * (x + dagger(x))


def _sinhc(v):
    small = np.abs(v) < 1e-8
    vv = np.where(small, 1.0, v)
    return np.where(small, 1.0 + v * v / 6.0, np.sinh(vv) / vv)


def mexp(s):
    """Matrix exponential of a Hermitian field via eigendecomposition
    (closed form for fibers of rank <= 2, the flow's hot path)."""
    s = np.asarray(s, dtype=complex)
    r = s.shape[-1]
    if r == 1:
        return np.exp(s)
    if r == 2:
        s = hermitize(s)
        alpha = 0.5 * np.real(s[..., 0, 0] + s[..., 1, 1])
        V = s - alpha[..., None, None] * np.eye(2)
        v = np.sqrt(np.real(V[..., 0, 0]) ** 2 + np.abs(V[..., 0, 1]) ** 2)
        out = (np.cosh(v)[..., None, None] * np.eye(2)
               + _sinhc(v)[..., None, None] * V)
        return np.exp(alpha)[..., None, None] * out
    w, v = np.linalg.eigh(hermitize(s))
    return (v * np.exp(w)[..., None, :]) @ dagger(v)


def mlog(p):
    """Principal logarithm of a positive-definite Hermitian field.

    Exact inverse of mexp; raises NotPositiveDefinite when an eigenvalue
    is not strictly positive.
    """
    p = np.asarray(p, dtype=complex)
    r = p.shape[-1]
    if r == 1:
        if np.any(np.real(p) <= 0):
            raise NotPositiveDefinite("nonpositive 1x1 entry")
        return np.log(np.real(p)).astype(complex)
    if r == 2:
        p = hermitize(p)
        det = np.real(p[..., 0, 0] * p[..., 1, 1]
                      - p[..., 0, 1] * p[..., 1, 0])
        tr = np.real(p[..., 0, 0] + p[..., 1, 1])
        if np.any(det <= 0) or np.any(tr <= 0):
            raise NotPositiveDefinite("2x2 fiber not positive definite")
        alpha = 0.5 * np.log(det)
        ch = 0.5 * tr * np.exp(-alpha)
        v = np.arccosh(np.maximum(ch, 1.0))
        Vhat = p * np.exp(-alpha)[..., None, None] \
            - ch[..., None, None] * np.eye(2)
        out = alpha[..., None, None] * np.eye(2) \
            + Vhat / _sinhc(v)[..., None, None]
        return out
    w, v = np.linalg.eigh(hermitize(p))
    if np.any(w <= 0):
        raise NotPositiveDefinite(f"min eigenvalue {w.min():.3e}")
    return (v * np.log(w)[..., None, :]) @ dagger(v)


def _phi(t):
    """phi(t) = (e^t - 1)/t with a series branch near t = 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-4
    ts = np.where(small, 0.0, t)
    out = np.where(small,
                   1.0 + t / 2.0 + t * t / 6.0 + t ** 3 / 24.0,
                   (np.expm1(np.where(small, 0.0, t))) / np.where(small, 1.0, ts))
    return out


def _ad_multiplier(s, func):
    """Return (w, v, M) with M[i,j] = func(w_i - w_j) in the eigenbasis of s."""
    w, v = np.linalg.eigh(hermitize(np.asarray(s, dtype=complex)))
    gaps = w[..., :, None] - w[..., None, :]
    return w, v, func(gaps)


def big_upsilon(s, x):
    """Apply (e^{ad_s} - id)/ad_s to x: multiplier phi(w_i - w_j) in the
    eigenbasis of s, transformed back to the original frame."""
    _, v, mult = _ad_multiplier(s, _phi)
    xt = dagger(v) @ np.asarray(x, dtype=complex) @ v
    return v @ (mult * xt) @ dagger(v)


def upsilon_sqrt(s, x):
    """Apply the positive square root of big_upsilon (multiplier sqrt(phi))."""
    _, v, mult = _ad_multiplier(s, lambda t: np.sqrt(_phi(t)))
    xt = dagger(v) @ np.asarray(x, dtype=complex) @ v
    return v @ (mult * xt) @ dagger(v)


def frob_inner(x, y):
    """Frobenius pairing tr(x^dag y), summed over the trailing axes."""
    return np.einsum("...ij,...ij->...", np.conj(x), y)


def upsilon_apply(sigma, x, sign=-1):
    """Apply Upsilon(sign*sigma) = (e^{ad} - id)/ad to x.

    Rank <= 2 runs a closed form through the spectral projectors of
    sigma (this sits in the flow's hot path: e^{-sigma} d e^{sigma} =
    Upsilon(-sigma) d sigma is the discretization of K^{-1} dK that is
    exactly linear whenever sigma commutes with its derivative).
    """
    sigma = np.asarray(sigma, dtype=complex)
    x = np.asarray(x, dtype=complex)
    r = sigma.shape[-1]
    if r == 1:
        return x.copy()
    if r == 2:
        s = hermitize(sigma)
        alpha = 0.5 * np.real(s[..., 0, 0] + s[..., 1, 1])
        V = s - alpha[..., None, None] * np.eye(2)
        v = np.sqrt(np.real(V[..., 0, 0]) ** 2 + np.abs(V[..., 0, 1]) ** 2)
        safe = np.where(v > 1e-14, v, 1.0)
        Vhat = V / safe[..., None, None]
        eye = np.broadcast_to(np.eye(2, dtype=complex), V.shape)
        Pp = 0.5 * (eye + Vhat)
        Pm = 0.5 * (eye - Vhat)
        Xpm = Pp @ x @ Pm
        Xmp = Pm @ x @ Pp
        gap = 2.0 * sign * v
        fp = _phi(gap)[..., None, None]
        fm = _phi(-gap)[..., None, None]
        out = (x - Xpm - Xmp) + fp * Xpm + fm * Xmp
        small = (v <= 1e-14)[..., None, None] & np.ones_like(x, dtype=bool)
        return np.where(small, x, out)
    _, vv, mult = _ad_multiplier(sign * sigma, _phi)
    xt = dagger(vv) @ x @ vv
    return vv @ (mult * xt) @ dagger(vv)

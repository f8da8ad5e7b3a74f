"""Complex-geometric data: Higgs pairs and parametrized Hecke modification
fields (dbar, phi, d_y) on the slab.

Representation
--------------
Fields split into a smooth numeric part (plain arrays, differentiated
spectrally / by finite differences) and closed-form analytic attachments,
one per puncture, that carry everything singular:

    a01_total = a01_num + diag(dbar W_j),   b_total = b_num + diag(d_y W_j)

with a real, single-valued per-entry potential

    W_j = -(k_j/2) [ 2 P(x) log|zh| - C(x) log(r + yh) ]

in puncture-centered coordinates (yh, zh), r = sqrt(yh^2 + |zh|^2).  The
profiles interpolate between three exact regimes:

  * ball r <= rho:    P = C = 1, so W = -(k_j/2) log(r - yh) -- the Dirac
    model in its lower-chart unitary frame (log(r-yh) = 2log|zh| -
    log(r+yh));
  * vertical tube |zh| <= rho_t above the ball: P = 1, C = 0, so
    W = -k_j log|zh| -- the model's string carried to the y = 1 face
    (cutting it off would make the glued bundle trivial);
  * outside ball and tube: W = 0 -- temporal gauge, background only.

Both logs are harmonic away from their axes, so the moment-map source of
the base metric H = I is a closed-form field supported on the profile
shells.  The remaining half of the model's chart structure (the unit
phase winding (zh/|zh|)^k) is recorded per puncture as the framing's
seam factor; it is unitary and diagonal, enters parallel transport only,
and never touches stored fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dirac
from .grid import Domain, Puncture, TorusGrid, torus_delta, d_z, d_zbar, diff


class IncompatibleBackground(Exception):
    pass


class RhoTooLarge(Exception):
    pass


class PunctureOnNodeColumn(Exception):
    pass


def snap_to_half_cell(grid: TorusGrid, z: complex) -> complex:
    """Move z to the nearest torus half-cell center (node columns are the
    worst place for a puncture: the string would hit them head-on)."""
    h = grid.h_sigma
    return complex((np.floor(z.real / h) + 0.5) * h,
                   (np.floor(z.imag / h) + 0.5) * h)


@dataclass(frozen=True)
class HiggsPair:
    """Boundary Higgs pair on a torus slice: a01 is the (0,1)-connection
    coefficient relative to flat dbar, phi the dz-coefficient of the
    Higgs field.  Shapes (N, N, r, r)."""
    a01: np.ndarray
    phi: np.ndarray

    @property
    def r(self):
        return self.a01.shape[-1]


class PuncturePotential:
    """Closed-form potential of one puncture on a fixed grid.

    Exposes the per-entry diagonal fields and their exact derivatives on
    grid nodes (cached), plus pointwise evaluators for transport.
    """

    def __init__(self, grid: TorusGrid, p: Puncture, rho: float, rho_t: float):
        self.puncture = p
        self.k = np.asarray(p.k, dtype=float)
        self.r_fiber = len(p.k)
        self.rho = float(rho)
        self.rho_t = float(rho_t)
        self.grid = grid
        y, x1, x2 = grid.mesh()
        self._geom_cache = self._geometry(y, x1 + 1j * x2)
        self._node_fields = {}

    # -- geometry helpers ------------------------------------------------
    def _geometry(self, y, z):
        p = self.puncture
        g = self.grid
        yh = np.asarray(y, dtype=float) - p.y
        zh = (torus_delta(np.real(z), p.z.real, g.L)
              + 1j * torus_delta(np.imag(z), p.z.imag, g.L))
        q = np.abs(zh)
        r = np.sqrt(yh ** 2 + q ** 2)
        return yh, zh, q, r

    def _profiles(self, yh, zh, q, r):
        """P, C and their first/second derivatives (complex d/dz, d/dzbar
        conventions; everything real)."""
        rho, rho_t = self.rho, self.rho_t
        with np.errstate(divide="ignore", invalid="ignore"):
            c = dirac.chi(r / rho)
            cp = dirac.chi_p(r / rho)
            cpp = dirac.chi_pp(r / rho)
            tr_ = dirac.chi(q / rho_t)
            trp = dirac.chi_p(q / rho_t)
            trpp = dirac.chi_pp(q / rho_t)
            lf = 1.0 - dirac.chi(yh / rho)
            lfp = -dirac.chi_p(yh / rho) / rho
            lfpp = -dirac.chi_pp(yh / rho) / rho ** 2

            rinv = np.where(r > 0, 1.0 / np.maximum(r, 1e-300), 0.0)
            qinv = np.where(q > 0, 1.0 / np.maximum(q, 1e-300), 0.0)

            # chi(r/rho) derivatives
            chi_y = cp * yh * rinv / rho
            chi_z = cp * np.conj(zh) * rinv / (2.0 * rho)
            chi_zb = np.conj(chi_z)
            chi_zzb = (cpp * q ** 2 * rinv ** 2 / (4 * rho ** 2)
                       + cp * (0.5 * rinv - 0.25 * q ** 2 * rinv ** 3) / rho)
            chi_yy = cpp * yh ** 2 * rinv ** 2 / rho ** 2 \
                + cp * (rinv - yh ** 2 * rinv ** 3) / rho
            chi_yzb = (cpp * yh * zh * rinv ** 2 / (2 * rho ** 2)
                       - cp * zh * yh * rinv ** 3 / (2 * rho))

            # T = chi(q/rho_t) * lift(yh)
            T = tr_ * lf
            T_z = trp * np.conj(zh) * qinv / (2.0 * rho_t) * lf
            T_zb = np.conj(T_z) * 1.0
            T_zzb = lf * (trpp / (4 * rho_t ** 2) + trp * qinv / (4 * rho_t))
            T_y = tr_ * lfp
            T_yy = tr_ * lfpp
            T_yzb = trp * zh * qinv / (2.0 * rho_t) * lfp

        def prod(u, v):
            # 7-tuples (value, dz, dzb, dy, dzdzb, dydy, dydzb) of u*v
            return (u[0] * v[0],
                    u[1] * v[0] + u[0] * v[1],
                    u[2] * v[0] + u[0] * v[2],
                    u[3] * v[0] + u[0] * v[3],
                    u[4] * v[0] + u[1] * v[2] + u[2] * v[1] + u[0] * v[4],
                    u[5] * v[0] + 2 * u[3] * v[3] + u[0] * v[5],
                    u[6] * v[0] + u[3] * v[2] + u[2] * v[3] + u[0] * v[6])

        chi7 = (c, chi_z, chi_zb, chi_y, chi_zzb, chi_yy, chi_yzb)
        oneT7 = (1.0 - T, -T_z, -T_zb, -T_y, -T_zzb, -T_yy, -T_yzb)
        C = prod(chi7, oneT7)
        # P = C + T
        P = (C[0] + T, C[1] + T_z, C[2] + T_zb, C[3] + T_y,
             C[4] + T_zzb, C[5] + T_yy, C[6] + T_yzb)
        return P, C

    def _fields_at(self, yh, zh, q, r):
        """Per-entry diagonal fields, shape geom.shape + (r_fiber,).

        Returns dict with keys w, a (dbar W), b (d_y W), azb (dz dzbar W),
        byy (dy dy W), ayb (dy dzbar W); a and ayb complex, the rest real.
        """
        P, C = self._profiles(yh, zh, q, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            Gq = np.where(q > 0, np.log(np.maximum(q, 1e-300)), 0.0)
            G3 = np.log(np.maximum(r + yh, 1e-300))
            zb = np.conj(zh)
            qinv2 = np.where(q > 0, 1.0 / np.maximum(q ** 2, 1e-300), 0.0)
            rinv = np.where(r > 0, 1.0 / np.maximum(r, 1e-300), 0.0)
            ryinv = np.where(r + yh > 0, 1.0 / np.maximum(r + yh, 1e-300), 0.0)
            # log|zh| derivatives
            Gq_z = 0.5 * zb * qinv2
            Gq_zb = 0.5 * zh * qinv2
            # log(r+yh) derivatives
            G3_z = 0.5 * zb * rinv * ryinv
            G3_zb = 0.5 * zh * rinv * ryinv
            G3_y = rinv
            G3_yy = -yh * rinv ** 3
            G3_yzb = -0.5 * zh * rinv ** 3
            G3_zzb = 0.5 * rinv * ryinv - 0.25 * q ** 2 * (2 * r + yh) \
                * rinv ** 3 * ryinv ** 2

            Pv, Pz, Pzb, Py, Pzzb, Pyy, Pyzb = P
            Cv, Cz, Czb, Cy, Czzb, Cyy, Cyzb = C

            base_w = 2 * Pv * Gq - Cv * G3
            base_a = 2 * Pzb * Gq + 2 * Pv * Gq_zb - Czb * G3 - Cv * G3_zb
            base_b = 2 * Py * Gq - Cy * G3 - Cv * G3_y
            base_azb = (2 * Pzzb * Gq + 2 * Pz * Gq_zb + 2 * Pzb * Gq_z
                        - Czzb * G3 - Cz * G3_zb - Czb * G3_z - Cv * G3_zzb)
            base_byy = 2 * Pyy * Gq - Cyy * G3 - 2 * Cy * G3_y - Cv * G3_yy
            base_ayb = (2 * Pyzb * Gq + 2 * Py * Gq_zb - Cyzb * G3
                        - Cy * G3_zb - Czb * G3_y - Cv * G3_yzb)

        kk = self.k.reshape((1,) * base_w.ndim + (-1,))
        sc = -0.5 * kk
        return {
            "w": sc * base_w[..., None],
            "a": sc * base_a[..., None],
            "b": sc * base_b[..., None],
            "azb": sc * base_azb[..., None],
            "byy": sc * base_byy[..., None],
            "ayb": sc * base_ayb[..., None],
        }

    def node_fields(self):
        """Cached diagonal fields on the grid, shape (N_y, N, N, r_fiber)."""
        if not self._node_fields:
            self._node_fields = self._fields_at(*self._geom_cache)
        return self._node_fields

    def fields_at_points(self, y, z):
        """Pointwise evaluation (used by the transport integrator)."""
        return self._fields_at(*self._geometry(y, z))

    def seam_phase(self, z):
        """Framing seam factor diag((zh/|zh|)^{k_j}): the unit phase half
        of the model's chart transition, applied by transports crossing
        the puncture level."""
        _, zh, q, _ = self._geometry(np.zeros_like(np.real(z)), z)
        phase = np.where(q > 0, zh / np.where(q > 0, q, 1.0), 1.0)
        return np.stack([phase ** kj for kj in self.puncture.k], axis=-1)

    def source(self):
        """Moment-map source of the base metric H = I: the smooth part of
        (1/2) Lap3(2 Re W), per entry.  Closed form; the string deltas are
        gauge bookkeeping and deliberately absent."""
        f = self.node_fields()
        return 4.0 * np.real(f["azb"]) + np.real(f["byy"])

    def distances(self):
        yh, zh, q, r = self._geom_cache
        return yh, zh, q, r


def _diag_to_matrix(vals):
    """(..., r) diagonal entries -> (..., r, r) matrices."""
    r = vals.shape[-1]
    out = np.zeros(vals.shape + (r,), dtype=complex)
    idx = np.arange(r)
    out[..., idx, idx] = vals
    return out


@dataclass
class ParamHecke:
    """Discretized (dbar, phi, d_y) triple in the fixed global frame."""

    domain: Domain
    a01_num: np.ndarray      # (N_y, N, N, r, r) smooth numeric part
    b_num: np.ndarray
    phi: np.ndarray
    pots: list = field(default_factory=list)
    rho: float = 0.0
    rho_t: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def r(self):
        return self.a01_num.shape[-1]

    def _cached_sum(self, key):
        if key not in self._cache:
            if not self.pots:
                self._cache[key] = np.zeros_like(self.a01_num)
            else:
                self._cache[key] = sum(
                    _diag_to_matrix(p.node_fields()[key].astype(complex))
                    for p in self.pots)
        return self._cache[key]

    def nontrivial(self, name):
        """Cached flag: does the named numeric field have any entries?"""
        key = "nz_" + name
        if key not in self._cache:
            self._cache[key] = bool(np.abs(getattr(self, name)).max() > 0)
        return self._cache[key]

    def a01_an(self):
        return self._cached_sum("a")

    def b_an(self):
        return self._cached_sum("b")

    def a01_total(self):
        return self.a01_num + self.a01_an()

    def b_total(self):
        return self.b_num + self.b_an()

    def an_derivs(self):
        """Summed analytic derivative fields as diagonal matrices:
        d_z a (= dzdzb W), d_y b (= dydy W), d_y a = d_zb b (= dydzb W)."""
        return (self._cached_sum("azb"), self._cached_sum("byy"),
                self._cached_sum("ayb"))

    def source_an(self):
        """Total analytic moment-map source for H = I (Hermitian diag)."""
        if not self.pots:
            return np.zeros_like(self.a01_num)
        return sum(_diag_to_matrix(p.source().astype(complex))
                   for p in self.pots)

    def b_at_points(self, y, z):
        """Total d_y-coefficient at arbitrary points; numeric part must be
        sampled by the caller (transport handles interpolation)."""
        out = 0.0
        for pot in self.pots:
            f = pot.fields_at_points(y, z)
            out = out + _diag_to_matrix(f["b"].astype(complex))
        return out


def _pattern_mask(k):
    """Boolean (r, r) mask of entries (i, j) with k_i != k_j."""
    k = np.asarray(k)
    return k[:, None] != k[None, :]


def build_param_hecke(domain: Domain, pair0: HiggsPair, rho: float = None,
                      rho_t: float = None, compat_tol: float = 1e-10
                      ) -> ParamHecke:
    """Assemble the parametrized Hecke modification fields.

    The background pair is extended y-constant in temporal gauge
    (b_num = 0) and the punctures' analytic potentials are superposed.
    The builder only supports diagonal gluing cocycles: background fields
    must commute with each puncture's type pattern wherever that
    puncture's potential is supported.
    """
    g = domain.grid
    r = pair0.r
    punctures = domain.punctures
    for p in punctures:
        if len(p.k) != r:
            raise ValueError("puncture type length must equal the rank")

    if rho is None:
        rho = min(4.0 * domain.epsilon, g.L / 8.0) if domain.epsilon > 0 \
            else g.L / 8.0
    if rho_t is None:
        rho_t = min(2.0 * rho, 0.24 * g.L)
    if punctures:
        if rho > g.L / 8.0 + 1e-12:
            raise RhoTooLarge(f"rho={rho} exceeds L/8 "
                              "(normal-coordinate radius)")
        if 2.0 * rho_t > 0.49 * g.L:
            raise RhoTooLarge(f"tube 2*rho_t={2 * rho_t} does not fit "
                              "the torus")
    for p in punctures:
        if p.y < 2.0 * rho:
            raise RhoTooLarge(f"gluing ball 2*rho={2 * rho} reaches the y=0 "
                              f"face below puncture y={p.y}")
        if domain.epsilon >= rho:
            raise RhoTooLarge("excision must leave part of the model ball")

    # punctures must sit off node columns (the analytic string otherwise
    # evaluates at its own singularity)
    for p in punctures:
        d1 = np.abs(torus_delta(g.x, p.z.real, g.L))
        d2 = np.abs(torus_delta(g.x, p.z.imag, g.L))
        if d1.min() < g.h_sigma / 4 and d2.min() < g.h_sigma / 4:
            raise PunctureOnNodeColumn(
                f"puncture z={p.z} too close to a node column; use "
                "snap_to_half_cell")

    pots = [PuncturePotential(g, p, rho, rho_t) for p in punctures]

    # compatibility: off-pattern background entries must vanish wherever
    # the puncture's potential is supported (the background is y-constant,
    # so project the support onto the slice)
    for pot in pots:
        mask = _pattern_mask(pot.puncture.k)
        if not mask.any():
            continue
        yh, zh, q, rr = pot.distances()
        support = ((rr < 2.2 * rho) | ((q < 2.2 * rho_t) & (yh > 0)))
        sup_slice = support.any(axis=0)
        for nm, f in (("a01", pair0.a01), ("phi", pair0.phi)):
            bad = np.abs(f[sup_slice][..., mask])
            if bad.size and bad.max() > compat_tol:
                raise IncompatibleBackground(
                    f"background {nm} does not commute with type "
                    f"{pot.puncture.k} near z={pot.puncture.z} "
                    f"(max off-pattern entry {bad.max():.2e})")

    shape = (g.N_y,) + pair0.a01.shape
    a01 = np.broadcast_to(pair0.a01[None], shape).astype(complex).copy()
    phi = np.broadcast_to(pair0.phi[None], shape).astype(complex).copy()
    b = np.zeros(shape, dtype=complex)
    return ParamHecke(domain=domain, a01_num=a01, b_num=b, phi=phi,
                      pots=pots, rho=float(rho), rho_t=float(rho_t))


def puncture_weight(domain: Domain, pots, r_w: float = None) -> np.ndarray:
    """r^2-style weight flattening the O(1/r^2) field growth near
    punctures; 1 away from them."""
    w = np.ones(domain.grid.shape)
    for pot in pots:
        _, _, _, r = pot.distances()
        scale = r_w if r_w is not None else max(8.0 * domain.epsilon,
                                                pot.rho)
        w = np.minimum(w, np.minimum(1.0, (r / scale) ** 2))
    return w


def residual_param_hecke(ph: ParamHecke):
    """Weighted sup-norms of the three compatibility constraints:
    dbar_A phi, [d_y, dbar_A], [d_y, phi].

    The analytic pieces satisfy the second constraint identically (one
    potential generates both coefficients), so only numeric derivatives
    and pointwise products appear.
    """
    dom = ph.domain
    a_tot = ph.a01_total()
    b_tot = ph.b_total()
    p = ph.phi
    w = puncture_weight(dom, ph.pots)[..., None, None]
    valid = dom.valid

    r1 = d_zbar(dom, p) + a_tot @ p - p @ a_tot
    r2 = (diff(dom, ph.a01_num, "y") - d_zbar(dom, ph.b_num)
          + b_tot @ a_tot - a_tot @ b_tot)
    r3 = diff(dom, p, "y") + b_tot @ p - p @ b_tot

    def wsup(x):
        m = np.abs(w * x).max(axis=(-1, -2))
        return float(m[valid].max())

    return wsup(r1), wsup(r2), wsup(r3)


def slice_d_z(grid: TorusGrid, f):
    """Spectral d/dz on a single torus slice (no excision)."""
    n = grid.N_sigma
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.h_sigma)
    k[n // 2] = 0.0
    kx = (1j * k).reshape(n, 1, *([1] * (f.ndim - 2)))
    ky = (1j * k).reshape(1, n, *([1] * (f.ndim - 2)))
    fx = np.fft.ifft(np.fft.fft(f, axis=0) * kx, axis=0)
    fy = np.fft.ifft(np.fft.fft(f, axis=1) * ky, axis=1)
    return 0.5 * (fx - 1j * fy)


def slice_d_zbar(grid: TorusGrid, f):
    n = grid.N_sigma
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.h_sigma)
    k[n // 2] = 0.0
    kx = (1j * k).reshape(n, 1, *([1] * (f.ndim - 2)))
    ky = (1j * k).reshape(1, n, *([1] * (f.ndim - 2)))
    fx = np.fft.ifft(np.fft.fft(f, axis=0) * kx, axis=0)
    fy = np.fft.ifft(np.fft.fft(f, axis=1) * ky, axis=1)
    return 0.5 * (fx + 1j * fy)


def residual_higgs_pair(grid: TorusGrid, pair: HiggsPair, K=None):
    """Holomorphicity residual dbar_A phi and its metric adjoint
    d_A phi^{*K} on a slice; sup-norms."""
    a, p = pair.a01, pair.phi
    if K is None:
        K = np.broadcast_to(np.eye(pair.r), a.shape).copy()
    Kinv = np.linalg.inv(K)
    dag = lambda x: np.conj(np.swapaxes(x, -1, -2))
    beta = Kinv @ slice_d_z(grid, K) - Kinv @ dag(a) @ K
    r1 = slice_d_zbar(grid, p) + a @ p - p @ a
    pK = Kinv @ dag(p) @ K
    r2 = slice_d_z(grid, pK) + beta @ pK - pK @ beta
    return (float(np.abs(r1).max()), float(np.abs(r2).max()))


def holomorphic_phi(grid: TorusGrid, a01, p_seed, tol=1e-12, maxiter=400):
    """Manufacture a holomorphic Higgs field for a given slice connection:
    drive p_seed into ker(dbar_A) by a flat-dbar-preconditioned fixed
    point (small slices only; used by tests and presets).  Constants are
    untouched by the preconditioner, so the central part of the seed
    survives."""
    p = p_seed.astype(complex).copy()
    n = grid.N_sigma
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.h_sigma)
    k[n // 2] = 0.0
    mult = 0.5 * (1j * k[:, None] - k[None, :])  # dbar symbol
    inv = np.where(np.abs(mult) > 1e-14, 1.0 / np.where(
        np.abs(mult) > 1e-14, mult, 1.0), 0.0)

    def op(x):
        return slice_d_zbar(grid, x) + a01 @ x - x @ a01

    def dbar_inv(x):
        xh = np.fft.fft2(x, axes=(0, 1))
        return np.fft.ifft2(xh * inv[..., None, None], axes=(0, 1))

    for _ in range(maxiter):
        rres = op(p)
        if np.abs(rres).max() < tol:
            break
        p = p - dbar_inv(rres)
    return p


def apply_complex_gauge(ph: ParamHecke, gfield, ginv=None) -> ParamHecke:
    """Transform the numeric fields by a complex gauge g (the analytic
    attachments are framing data and stay fixed; g must commute with each
    puncture's type pattern on its support for the result to stay smooth).
    """
    dom = ph.domain
    if ginv is None:
        ginv = np.linalg.inv(gfield)
    a_an = ph.a01_an()
    b_an = ph.b_an()
    a_new = (gfield @ (ph.a01_num + a_an) @ ginv
             - d_zbar(dom, gfield) @ ginv - a_an)
    b_new = (gfield @ (ph.b_num + b_an) @ ginv
             - diff(dom, gfield, "y") @ ginv - b_an)
    phi_new = gfield @ ph.phi @ ginv
    return ParamHecke(domain=dom, a01_num=a_new, b_num=b_new, phi=phi_new,
                      pots=ph.pots, rho=ph.rho, rho_t=ph.rho_t)

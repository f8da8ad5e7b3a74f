"""Scattering maps: parallel transport of d_y along fibers, type
extraction from singular-value slopes, det-winding cross-checks, and the
round-trip verification that closes the loop from input Hecke types to
recovered ones.

Transport solves d tau/dy = -b(y, z) tau by classical RK4 with step
h_y/4.  The total b is the smooth numeric field (interpolated bicubically
in Sigma, cubically in y) plus the punctures' closed-form potentials
evaluated exactly at the sample points.  A transport crossing a puncture
level picks up that puncture's framing seam factor diag((zh/|zh|)^k_j) --
the unit-phase half of the model chart transition, which the stored
real-potential frame does not carry (it is unitary and diagonal, so
singular values are untouched; det winding is restored).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Domain, torus_delta
from .higgs import ParamHecke


class FiberExcised(Exception):
    pass


class AmbiguousType(Exception):
    def __init__(self, msg, slopes=None, winding=None):
        super().__init__(msg)
        self.slopes = slopes
        self.winding = winding


def _cubic_weights(t):
    """Catmull-Rom cubic interpolation weights for samples at -1,0,1,2."""
    t2, t3 = t * t, t * t * t
    return np.stack([
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ], axis=-1)


def _sample_numeric_b(ph: ParamHecke, y, z):
    """Bicubic-in-Sigma, cubic-in-y interpolation of the numeric b field
    at scattered points; y, z arrays of equal shape."""
    g = ph.domain.grid
    b = ph.b_num
    if not np.abs(b).max() > 0:
        r = ph.r
        return np.zeros(np.shape(y) + (r, r), dtype=complex)
    hy, hs, n = g.h_y, g.h_sigma, g.N_sigma
    yy = np.clip(np.asarray(y), 0.0, 1.0) / hy
    j0 = np.clip(np.floor(yy).astype(int), 0, g.N_y - 2)
    ty = yy - j0
    x1 = np.real(z) / hs
    x2 = np.imag(z) / hs
    i0 = np.floor(x1).astype(int)
    k0 = np.floor(x2).astype(int)
    t1 = x1 - i0
    t2 = x2 - k0
    wy = _cubic_weights(ty)
    w1 = _cubic_weights(t1)
    w2 = _cubic_weights(t2)
    out = 0.0
    for a in range(4):
        j = np.clip(j0 + a - 1, 0, g.N_y - 1)
        acc1 = 0.0
        for bi in range(4):
            ii = (i0 + bi - 1) % n
            acc2 = 0.0
            for ci in range(4):
                kk = (k0 + ci - 1) % n
                acc2 = acc2 + w2[..., ci, None, None] * b[j, ii, kk]
            acc1 = acc1 + w1[..., bi, None, None] * acc2
        out = out + wy[..., a, None, None] * acc1
    return out


def _b_total_at(ph: ParamHecke, y, z):
    r = ph.r
    out = _sample_numeric_b(ph, y, z)
    for pot in ph.pots:
        f = pot.fields_at_points(np.asarray(y, dtype=float),
                                 np.asarray(z, dtype=complex))
        diag = f["b"].astype(complex)
        idx = np.arange(r)
        mat = np.zeros(np.shape(y) + (r, r), dtype=complex)
        mat[..., idx, idx] = diag
        out = out + mat
    return out


def seam_factors(ph: ParamHecke, z, y_from, y_to):
    """Product of framing seam factors of punctures whose level is crossed
    by [y_from, y_to] (unitary diagonal, (r, r) per point)."""
    r = ph.r
    out = np.broadcast_to(np.eye(r, dtype=complex),
                          np.shape(z) + (r, r)).copy()
    lo, hi = min(y_from, y_to), max(y_from, y_to)
    for pot in ph.pots:
        if lo < pot.puncture.y <= hi:
            ph_diag = pot.seam_phase(np.asarray(z, dtype=complex))
            idx = np.arange(r)
            mat = np.zeros_like(out)
            mat[..., idx, idx] = ph_diag
            out = mat @ out
    return out


def fiber_clear(ph: ParamHecke, z, y_from, y_to):
    """True when the fiber segment stays outside every excised ball."""
    dom = ph.domain
    if dom.epsilon <= 0:
        ok = np.ones(np.shape(z), dtype=bool)
    else:
        ok = np.ones(np.shape(z), dtype=bool)
        lo, hi = min(y_from, y_to), max(y_from, y_to)
        for p in dom.punctures:
            d1 = torus_delta(np.real(z), p.z.real, dom.grid.L)
            d2 = torus_delta(np.imag(z), p.z.imag, dom.grid.L)
            q = np.hypot(d1, d2)
            y_near = np.clip(p.y, lo, hi)
            dist = np.hypot(q, np.where((p.y >= lo) & (p.y <= hi), 0.0,
                                        np.minimum(abs(p.y - lo),
                                                   abs(p.y - hi))))
            dist = np.sqrt(q ** 2 + (np.clip(p.y, lo, hi) - p.y) ** 2)
            ok &= dist >= dom.epsilon
    return ok


def parallel_transport(ph: ParamHecke, z, y_from, y_to, substeps=4,
                       with_seam=True, check=True, b_override=None):
    """RK4 transport tau' = -b tau from y_from to y_to at fixed z
    (z may be an array; returns (..., r, r) matrices).

    ``b_override(y, z)`` replaces the sampled numeric coefficient (the
    analytic puncture parts are still added); use it when the coefficient
    is known in closed form and interpolation error matters."""
    z = np.asarray(z, dtype=complex)
    if check:
        ok = fiber_clear(ph, z, y_from, y_to)
        if not np.all(ok):
            raise FiberExcised(f"{int((~ok).sum())} fiber(s) intersect an "
                               "excised ball")
    g = ph.domain.grid
    n_steps = max(1, int(round(abs(y_to - y_from) / g.h_y * substeps)))
    h = (y_to - y_from) / n_steps
    r = ph.r
    tau = np.broadcast_to(np.eye(r, dtype=complex),
                          np.shape(z) + (r, r)).copy()

    def bfun(y, zz):
        if b_override is not None:
            out = b_override(y, zz)
            for pot in ph.pots:
                f = pot.fields_at_points(np.asarray(y, dtype=float),
                                         np.asarray(zz, dtype=complex))
                idx = np.arange(r)
                mat = np.zeros(np.shape(zz) + (r, r), dtype=complex)
                mat[..., idx, idx] = f["b"].astype(complex)
                out = out + mat
            return out
        return _b_total_at(ph, y, zz)

    yv = y_from
    for _ in range(n_steps):
        k1 = -bfun(np.full(z.shape, yv), z) @ tau
        k2 = -bfun(np.full(z.shape, yv + h / 2), z) @ (tau + h / 2 * k1)
        k3 = -bfun(np.full(z.shape, yv + h / 2), z) @ (tau + h / 2 * k2)
        k4 = -bfun(np.full(z.shape, yv + h), z) @ (tau + h * k3)
        tau = tau + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        yv += h
    if with_seam:
        tau = seam_factors(ph, z, y_from, y_to) @ tau
    return tau


@dataclass
class ScatteringResult:
    """sigma per torus node for each y-segment; NaN columns mark fibers
    through excised balls."""
    domain: Domain
    segments: list                      # [(y_from, y_to)]
    sigma: list                         # [(N, N, r, r)]
    extracted: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.sigma[0].shape[-1]


def scattering_map(ph: ParamHecke, y_from=0.0, y_to=1.0, slices=None,
                   substeps=4) -> ScatteringResult:
    """Transport every torus node column over each segment.

    ``slices`` are the intermediate heights between punctures; default is
    the midpoints of consecutive puncture levels inside (y_from, y_to),
    so each segment contains exactly one puncture level when punctures
    are present."""
    dom = ph.domain
    g = dom.grid
    if slices is None:
        ys = sorted(p.y for p in dom.punctures
                    if y_from < p.y < y_to)
        slices = [0.5 * (a + b) for a, b in zip(ys, ys[1:])]
    cuts = [y_from] + list(slices) + [y_to]
    x1 = g.x[:, None] * np.ones((1, g.N_sigma))
    x2 = g.x[None, :] * np.ones((g.N_sigma, 1))
    zz = x1 + 1j * x2
    sigmas = []
    for a, b in zip(cuts, cuts[1:]):
        ok = fiber_clear(ph, zz, a, b)
        tau = parallel_transport(ph, zz, a, b, substeps=substeps,
                                 check=False)
        tau = np.where(ok[..., None, None], tau, np.nan)
        sigmas.append(tau)
    return ScatteringResult(domain=dom, segments=list(zip(cuts, cuts[1:])),
                            sigma=sigmas)


# ---------------------------------------------------------------------------
# type extraction
# ---------------------------------------------------------------------------

def det_winding(sigma_ring):
    """Winding number of det along an ordered closed loop of matrices."""
    dets = np.linalg.det(sigma_ring)
    ratios = dets / np.roll(dets, 1)
    return int(round(float(np.angle(ratios).sum() / (2.0 * np.pi))))


def extract_type(sigma, center, L, r_inner, r_outer, n_rings=6,
                 slope_tol=0.25, expected_sum=None):
    """Hecke type from ring-averaged singular-value slopes of sigma(z)
    around ``center``, cross-checked against the det winding.

    sigma: (N, N, r, r) node field (NaN columns ignored); rings are
    geometric in [r_inner, r_outer].  Returns (type tuple, diagnostics).
    Raises AmbiguousType when a slope is farther than slope_tol from an
    integer or the winding disagrees with the slope sum.
    """
    n = sigma.shape[0]
    rr = sigma.shape[-1]
    h = L / n
    x = np.arange(n) * h
    d1 = np.broadcast_to(torus_delta(x[:, None], center.real, L), (n, n))
    d2 = np.broadcast_to(torus_delta(x[None, :], center.imag, L), (n, n))
    q = np.hypot(d1, d2)
    finite = np.isfinite(sigma).all(axis=(-1, -2))

    radii = np.geomspace(r_inner, r_outer, n_rings)
    edges = np.sqrt(radii[:-1] * radii[1:])
    edges = np.concatenate([[radii[0] ** 2 / edges[0]], edges,
                            [radii[-1] ** 2 / edges[-1]]])
    ring_r, ring_logsv = [], []
    for i in range(n_rings):
        m = finite & (q >= edges[i]) & (q < edges[i + 1])
        if m.sum() < 4:
            continue
        sv = np.linalg.svd(sigma[m], compute_uv=False)  # descending
        ring_r.append(np.exp(np.log(q[m]).mean()))
        ring_logsv.append(np.log(sv).mean(axis=0)[::-1])  # ascending
    if len(ring_r) < 3:
        raise AmbiguousType(f"only {len(ring_r)} resolved rings")
    lr = np.log(ring_r)
    A = np.stack([lr, np.ones_like(lr)], axis=1)
    slopes = []
    for j in range(rr):
        sol, *_ = np.linalg.lstsq(A, np.array([v[j] for v in ring_logsv]),
                                  rcond=None)
        slopes.append(float(sol[0]))
    k = sorted(int(round(sl)) for sl in slopes)
    err = max(abs(sl - round(sl)) for sl in slopes)

    # winding on the ring of nodes nearest the middle radius
    mid = radii[n_rings // 2]
    band = finite & (q >= mid / 1.25) & (q < mid * 1.25)
    idx = np.nonzero(band)
    ang = np.arctan2(d2[band], d1[band])
    order = np.argsort(ang)
    ring = sigma[idx[0][order], idx[1][order]]
    wind = det_winding(ring)

    diags = {"slopes": slopes, "rounding_error": err, "winding": wind,
             "radii": list(map(float, radii)),
             "ring_radii": list(map(float, ring_r)),
             "ring_log_sv": [list(map(float, v)) for v in ring_logsv]}
    if err > slope_tol:
        raise AmbiguousType(f"slope {slopes} not within {slope_tol} of "
                            "integers", slopes=slopes, winding=wind)
    if wind != sum(k):
        raise AmbiguousType(f"winding {wind} != slope sum {sum(k)}",
                            slopes=slopes, winding=wind)
    if expected_sum is not None and wind != expected_sum:
        raise AmbiguousType(f"winding {wind} != expected {expected_sum}",
                            slopes=slopes, winding=wind)
    return tuple(k), diags


def extraction_annulus(ph: ParamHecke, pot):
    """Default fit annulus for a puncture: outside the excision, inside
    the saturated string tube, and clear of every other puncture's torus
    cut locus (where minimal-image seam phases jump)."""
    dom = ph.domain
    g = dom.grid
    r_in = max(2.0 * dom.epsilon, dom.epsilon + 2.0 * g.h_sigma,
               2.5 * g.h_sigma)
    r_out = min(ph.rho_t, 0.45 * g.L)
    me = pot.puncture
    for other in dom.punctures:
        if other is me:
            continue
        d1 = abs(torus_delta(np.array([me.z.real]), other.z.real, g.L)[0])
        d2 = abs(torus_delta(np.array([me.z.imag]), other.z.imag, g.L)[0])
        cut_dist = g.L / 2.0 - max(d1, d2)
        r_out = min(r_out, 0.9 * cut_dist)
    if r_out <= r_in * 1.1:
        raise AmbiguousType(f"no annulus room: [{r_in}, {r_out}]")
    return r_in, r_out


@dataclass
class RoundTripReport:
    ok: bool
    per_puncture: list
    details: dict


def roundtrip_check(ph: ParamHecke, result: ScatteringResult
                    ) -> RoundTripReport:
    """Compare extracted types per puncture/segment with the input ones."""
    dom = ph.domain
    per = []
    ok = True
    details = {}
    for pot in ph.pots:
        p = pot.puncture
        seg = None
        for i, (a, b) in enumerate(result.segments):
            if a < p.y <= b or (i == 0 and p.y <= a):
                seg = i
                break
        if seg is None:
            per.append((p.k, None, "no segment contains the puncture"))
            ok = False
            continue
        r_in, r_out = extraction_annulus(ph, pot)
        try:
            got, diags = extract_type(result.sigma[seg], p.z, dom.grid.L,
                                      r_in, r_out,
                                      expected_sum=sum(p.k))
            per.append((tuple(p.k), got, diags))
            ok &= (got == tuple(p.k))
        except AmbiguousType as e:
            per.append((tuple(p.k), None, str(e)))
            ok = False
    details["segments"] = result.segments
    return RoundTripReport(ok=ok, per_puncture=per, details=details)

"""Discretization of M = [0,1] x T^2 minus excised balls.

The base manifold is the slab [0,1]_y x T^2 with the flat square torus of
side L (complex coordinate z = x1 + i*x2, metric dx1^2 + dx2^2).  Punctures
sit at interior points (y_a, z_a); a lattice ball of radius ``epsilon``
around each is excised and the shell of nodes adjacent to the excised set
carries Dirichlet data.

Fields are stored as numpy arrays in node order (iy, ix1, ix2[, r, r]),
row-major.  Excised entries are kept as zeros in memory (the dump format
writes NaN).  Torus derivatives are spectral on slices free of excision
and second-order finite differences (one-sided at excision shells)
otherwise; y-derivatives are second-order finite differences throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TAU = 2.0 * np.pi


class GridError(Exception):
    pass


class PunctureTooClose(GridError):
    pass


class ResolutionTooCoarse(GridError):
    pass


class StencilHitsExcision(GridError):
    def __init__(self, nodes):
        self.nodes = list(nodes)
        super().__init__(f"no valid stencil at {len(self.nodes)} node(s); "
                         "widen epsilon or refine the grid")


class SolverDiverged(GridError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Tensor grid on [0,1] x T^2: periodic torus nodes, y includes both ends."""

    N_sigma: int
    N_y: int
    L: float = TAU

    def __post_init__(self):
        if self.N_sigma < 8 or self.N_sigma % 2 != 0:
            raise ResolutionTooCoarse("N_sigma must be an even integer >= 8")
        if self.N_y < 9:
            raise ResolutionTooCoarse("N_y must be >= 9")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def h_sigma(self) -> float:
        return self.L / self.N_sigma

    @property
    def h_y(self) -> float:
        return 1.0 / (self.N_y - 1)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N_y)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N_sigma) * self.h_sigma

    def mesh(self):
        """(y, x1, x2) broadcastable coordinate arrays of shape (N_y, N, N)."""
        y = self.y[:, None, None]
        x1 = self.x[None, :, None]
        x2 = self.x[None, None, :]
        return (np.broadcast_to(y, self.shape).copy(),
                np.broadcast_to(x1, self.shape).copy(),
                np.broadcast_to(x2, self.shape).copy())

    @property
    def shape(self):
        return (self.N_y, self.N_sigma, self.N_sigma)


@dataclass(frozen=True)
class Puncture:
    y: float
    z: complex
    k: tuple

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        object.__setattr__(self, "k", k)
        if any(k[i] > k[i + 1] for i in range(len(k) - 1)):
            raise ValueError(f"Hecke type must be increasing, got {k}")
        if not 0.0 < self.y < 1.0:
            raise ValueError("puncture must sit in the open slab 0 < y < 1")


def torus_delta(x, x0, L):
    """Minimal-image signed difference x - x0 on a circle of circumference L."""
    return (np.asarray(x) - x0 + L / 2.0) % L - L / 2.0


@dataclass
class Domain:
    """Discretized slab with punctures, excision masks and face masks."""

    grid: TorusGrid
    punctures: list = field(default_factory=list)
    epsilon: float = 0.0
    excised: np.ndarray = None
    shell: np.ndarray = None
    interior: np.ndarray = None
    y0_face: np.ndarray = None
    y1_face: np.ndarray = None

    @property
    def valid(self) -> np.ndarray:
        """All non-excised nodes."""
        return ~self.excised

    @property
    def dirichlet(self) -> np.ndarray:
        """Nodes pinned by Dirichlet data: y=0 face plus excision shells."""
        return self.shell | self.y0_face

    @property
    def free(self) -> np.ndarray:
        """Unknowns of the mixed-BC Poisson problem."""
        return self.interior | self.y1_face

    def sigma_slice_clean(self) -> np.ndarray:
        """Per-y-slice flag: True when no node of the slice is excised."""
        return ~self.excised.any(axis=(1, 2))


def _distance_to_puncture(grid: TorusGrid, p: Puncture):
    y, x1, x2 = grid.mesh()
    d1 = torus_delta(x1, p.z.real, grid.L)
    d2 = torus_delta(x2, p.z.imag, grid.L)
    return np.sqrt((y - p.y) ** 2 + d1 ** 2 + d2 ** 2)


def build_domain(grid: TorusGrid, punctures: Sequence[Puncture] = (),
                 epsilon: float = 0.0) -> Domain:
    """Populate excision and face masks.

    Excised set = nodes with distance < epsilon to some puncture; the shell
    is every non-excised node with an excised 6-neighbor.  epsilon = 0 is a
    legitimate test mode (no excision at all, punctures only mark columns).
    """
    punctures = list(punctures)
    h_s, h_y = grid.h_sigma, grid.h_y
    if punctures and epsilon > 0:
        if epsilon < 3.0 * h_y or epsilon < 1.0 * h_s:
            raise ResolutionTooCoarse(
                f"epsilon={epsilon} under-resolved: need >= {3 * h_y:.4g} in y "
                f"and >= {h_s:.4g} in sigma")
    for p in punctures:
        if p.y - epsilon <= 0.0 or p.y + epsilon >= 1.0:
            raise PunctureTooClose(f"ball around y={p.y} touches a y-face")
    for i, p in enumerate(punctures):
        for q in punctures[i + 1:]:
            dz = torus_delta(np.array([p.z.real]), q.z.real, grid.L)[0] \
                + 1j * torus_delta(np.array([p.z.imag]), q.z.imag, grid.L)[0]
            d = np.hypot(p.y - q.y, abs(dz))
            if d <= 4.0 * epsilon:
                raise PunctureTooClose(
                    f"punctures at y={p.y}, y={q.y} separated by {d:.4g} <= 4*eps")

    excised = np.zeros(grid.shape, dtype=bool)
    if epsilon > 0:
        for p in punctures:
            excised |= _distance_to_puncture(grid, p) < epsilon

    shell = np.zeros_like(excised)
    if excised.any():
        for axis, wrap in ((0, False), (1, True), (2, True)):
            for s in (1, -1):
                rolled = np.roll(excised, s, axis=axis)
                if not wrap:  # y-direction does not wrap around
                    if s == 1:
                        rolled[0] = False
                    else:
                        rolled[-1] = False
                shell |= rolled
        shell &= ~excised

    iy = np.arange(grid.N_y)[:, None, None]
    y0 = np.broadcast_to(iy == 0, grid.shape) & ~excised & ~shell
    y1 = np.broadcast_to(iy == grid.N_y - 1, grid.shape) & ~excised & ~shell
    interior = ~(excised | shell | y0 | y1)
    return Domain(grid=grid, punctures=punctures, epsilon=float(epsilon),
                  excised=excised, shell=shell, interior=interior,
                  y0_face=y0, y1_face=y1)


def radial_distance(domain: Domain, node, puncture_index: int) -> float:
    """Euclidean distance in (y, Re z, Im z), minimal image in the torus."""
    iy, i1, i2 = node
    g = domain.grid
    p = domain.punctures[puncture_index]
    d1 = torus_delta(i1 * g.h_sigma, p.z.real, g.L)
    d2 = torus_delta(i2 * g.h_sigma, p.z.imag, g.L)
    return float(np.sqrt((g.y[iy] - p.y) ** 2 + d1 ** 2 + d2 ** 2))


def puncture_distance_field(domain: Domain, puncture_index: int) -> np.ndarray:
    """r(x) = d(x, p_a) on the whole grid (minimal torus image)."""
    return _distance_to_puncture(domain.grid, domain.punctures[puncture_index])


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

_AXIS = {"y": 0, "x1": 1, "x2": 2}


def _spectral_diff(f, axis, L, order=1):
    n = f.shape[axis]
    k = TAU * np.fft.fftfreq(n, d=L / n)
    if order == 1:
        mult = 1j * k
        mult[n // 2] = 0.0  # drop the asymmetric Nyquist mode
    else:
        mult = (1j * k) ** order
        if order % 2 == 1:
            mult[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    return np.fft.ifft(np.fft.fft(f, axis=axis) * mult.reshape(shape), axis=axis)


def _fd_diff_periodic(f, axis, h):
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)


def diff(domain: Domain, fld: np.ndarray, direction: str,
         method: str = "auto") -> np.ndarray:
    """First derivative of a (matrix) field along y, x1 or x2.

    Torus directions: spectral on excision-free y-slices, else centered
    differences with one-sided 3-point stencils next to excised nodes
    (method="fd" forces differences everywhere).  y-direction: centered
    interior, one-sided 3-point at the two faces.  Raises
    StencilHitsExcision when a non-excised node has no valid stencil.
    """
    f = np.asarray(fld)
    g = domain.grid
    axis = _AXIS[direction]
    extra = f.ndim - 3  # matrix indices trail the node indices
    if direction == "y":
        return _diff_y(domain, f)

    h = g.h_sigma
    clean = domain.sigma_slice_clean()
    if method == "fd":
        clean = np.zeros_like(clean)
    out = np.empty_like(f, dtype=complex)
    # spectral on clean slices, done in one batch
    if clean.any():
        out[clean] = _spectral_diff(f[clean], axis, g.L)[...]
    dirty = np.nonzero(~clean)[0]
    if dirty.size:
        fd = _fd_diff_periodic(f[dirty], axis, h)
        exc = domain.excised[dirty]
        exc_p = np.roll(exc, -1, axis=axis)   # neighbor at +1 excised
        exc_m = np.roll(exc, 1, axis=axis)
        bad_p = exc_p & ~exc
        bad_m = exc_m & ~exc
        # one-sided 3-point stencils replacing broken centered ones
        fP = f[dirty]
        f1p = np.roll(fP, -1, axis=axis)
        f2p = np.roll(fP, -2, axis=axis)
        f1m = np.roll(fP, 1, axis=axis)
        f2m = np.roll(fP, 2, axis=axis)
        bwd = (3.0 * fP - 4.0 * f1m + f2m) / (2.0 * h)
        fwd = (-3.0 * fP + 4.0 * f1p - f2p) / (2.0 * h)
        bsl = (slice(None),) * 3 + (None,) * extra
        fd = np.where(bad_p[bsl], bwd, fd)
        fd = np.where(bad_m[bsl], fwd, fd)
        # a node squeezed between excised nodes, or whose one-sided stencil
        # hits excision again, has no valid stencil
        no_fwd = (np.roll(exc, -1, axis=axis) | np.roll(exc, -2, axis=axis))
        no_bwd = (np.roll(exc, 1, axis=axis) | np.roll(exc, 2, axis=axis))
        broken = (~exc) & ((bad_p & bad_m) | (bad_p & no_bwd) | (bad_m & no_fwd))
        if broken.any():
            ys, i1s, i2s = np.nonzero(broken)
            nodes = [(int(dirty[a]), int(b), int(c))
                     for a, b, c in zip(ys, i1s, i2s)]
            raise StencilHitsExcision(nodes)
        out[dirty] = fd
        out[domain.excised] = 0.0
    return out


def _diff_y(domain: Domain, f: np.ndarray) -> np.ndarray:
    g = domain.grid
    h = g.h_y
    out = np.empty_like(f, dtype=complex)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    if domain.excised.any():
        exc = domain.excised
        extra = f.ndim - 3
        bsl = (slice(None),) * 3 + (None,) * extra
        exc_p = np.zeros_like(exc)
        exc_m = np.zeros_like(exc)
        exc_p[:-1] = exc[1:]
        exc_m[1:] = exc[:-1]
        bad_p = exc_p & ~exc
        bad_m = exc_m & ~exc
        fpad = np.concatenate([f[:2] * 0, f, f[:2] * 0], axis=0)
        idx = np.arange(f.shape[0]) + 2
        bwd = (3.0 * f - 4.0 * fpad[idx - 1] + fpad[idx - 2]) / (2.0 * h)
        fwd = (-3.0 * f + 4.0 * fpad[idx + 1] - fpad[idx + 2]) / (2.0 * h)
        out = np.where(bad_p[bsl], bwd, out)
        out = np.where(bad_m[bsl], fwd, out)
        pad_exc = np.zeros((exc.shape[0] + 4,) + exc.shape[1:], dtype=bool)
        pad_exc[2:-2] = exc
        pad_exc[:2] = True   # beyond the faces counts as unusable for one-sided
        pad_exc[-2:] = True
        no_fwd = pad_exc[idx + 1] | pad_exc[idx + 2]
        no_bwd = pad_exc[idx - 1] | pad_exc[idx - 2]
        broken = (~exc) & ((bad_p & bad_m) | (bad_p & no_bwd) | (bad_m & no_fwd))
        if broken.any():
            nodes = [tuple(int(v) for v in t) for t in zip(*np.nonzero(broken))]
            raise StencilHitsExcision(nodes)
        out[exc] = 0.0
    return out


def d_z(domain, fld, method: str = "auto"):
    """Holomorphic derivative d/dz = (d/dx1 - i d/dx2)/2."""
    return 0.5 * (diff(domain, fld, "x1", method)
                  - 1j * diff(domain, fld, "x2", method))


def d_zbar(domain, fld, method: str = "auto"):
    """Anti-holomorphic derivative d/dzbar = (d/dx1 + i d/dx2)/2."""
    return 0.5 * (diff(domain, fld, "x1", method)
                  + 1j * diff(domain, fld, "x2", method))


def integrate(domain: Domain, fld: np.ndarray) -> complex:
    """Volume integral, trapezoid in y, uniform in sigma; excised nodes skipped."""
    g = domain.grid
    w = np.ones(g.N_y)
    w[0] = w[-1] = 0.5
    vals = np.where(domain.excised, 0.0, np.asarray(fld))
    return (vals * w[:, None, None]).sum() * g.h_y * g.h_sigma ** 2


def inner(domain: Domain, u, v) -> complex:
    return integrate(domain, np.conj(u) * v)


# ---------------------------------------------------------------------------
# mixed-BC Laplacian and Poisson solver (7-point stencil)
# ---------------------------------------------------------------------------

def laplace_mixed(domain: Domain, fld: np.ndarray) -> np.ndarray:
    """Second-order 7-point Laplacian with Dirichlet (y=0, shells) and
    Neumann (y=1, ghost reflection) boundary handling.

    The input is taken at face value: Dirichlet nodes contribute their
    stored entries to neighboring stencils.  The output is defined on free
    nodes (interior plus y=1 face) and zero elsewhere.
    """
    f = np.where(domain.excised, 0.0, np.asarray(fld, dtype=complex))
    g = domain.grid
    hs2, hy2 = g.h_sigma ** 2, g.h_y ** 2
    lap = (np.roll(f, 1, 1) + np.roll(f, -1, 1)
           + np.roll(f, 1, 2) + np.roll(f, -1, 2) - 4.0 * f) / hs2
    ypart = np.zeros_like(f)
    ypart[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / hy2
    ypart[-1] = (2.0 * f[-2] - 2.0 * f[-1]) / hy2  # ghost f[N] := f[N-2]
    lap += ypart
    return np.where(domain.free, lap, 0.0)


def _sigma_symbols(g: TorusGrid):
    m = np.arange(g.N_sigma)
    return (2.0 * np.cos(TAU * m / g.N_sigma) - 2.0) / g.h_sigma ** 2


def _poisson_direct_clean(domain: Domain, rhs: np.ndarray) -> np.ndarray:
    """Exact solve of the stencil problem on a puncture-free domain:
    FFT over the torus, one tridiagonal solve in y per mode."""
    g = domain.grid
    hy2 = g.h_y ** 2
    lam = _sigma_symbols(g)
    lam2 = lam[:, None] + lam[None, :]
    rhat = np.fft.fft2(rhs, axes=(1, 2))
    n = g.N_y
    sol = np.empty_like(rhat)
    # rows: j=0 Dirichlet; 1..n-2 centered; n-1 Neumann ghost
    lower = np.full(n, 1.0 / hy2)
    upper = np.full(n, 1.0 / hy2)
    lower[-1] = 2.0 / hy2
    import scipy.linalg as sla
    for a in range(g.N_sigma):
        for b in range(g.N_sigma):
            diagv = np.full(n, -2.0 / hy2 + lam2[a, b], dtype=complex)
            ab = np.zeros((3, n), dtype=complex)
            ab[0, 1:] = upper[:-1]
            ab[1, :] = diagv
            ab[2, :-1] = lower[1:]
            # Dirichlet row at j=0
            ab[1, 0] = 1.0
            ab[0, 1] = 0.0
            r = rhat[:, a, b].copy()
            r[0] = 0.0
            sol[:, a, b] = sla.solve_banded((1, 1), ab, r)
    return np.fft.ifft2(sol, axes=(1, 2))


def solve_poisson(domain: Domain, rhs: np.ndarray, tol: float = 1e-12,
                  maxiter: int = 20000) -> np.ndarray:
    """Solve the 7-point stencil problem lap(f) = rhs with f = 0 on the y=0
    face and on excision shells, Neumann at y=1.

    Puncture-free domains are solved exactly (spectral-in-sigma, banded in
    y); otherwise preconditioned conjugate gradients on the symmetrized
    system.  Raises SolverDiverged at the iteration cap.
    """
    rhs = np.where(domain.free, np.asarray(rhs, dtype=complex), 0.0)
    if not domain.excised.any():
        f = _poisson_direct_clean(domain, rhs)
        return np.where(domain.dirichlet, 0.0, f)

    free = domain.free
    # symmetrize: weight 1/2 on the Neumann face rows
    w = np.ones(domain.grid.shape)
    w[-1] = 0.5
    b = -(w * rhs)

    def A(v):
        return -(w * laplace_mixed(domain, v))

    def precond(r):
        return -_poisson_direct_clean(domain, np.where(free, r / w, 0.0))

    x = np.zeros_like(b)
    r = b.copy()
    z = np.where(free, precond(r), 0.0)
    p = z.copy()
    rz = inner(domain, r, z).real
    bnorm = np.sqrt(abs(inner(domain, b, b).real)) or 1.0
    for _ in range(maxiter):
        Ap = A(p)
        alpha = rz / inner(domain, p, Ap).real
        x += alpha * p
        r -= alpha * Ap
        if np.sqrt(abs(inner(domain, r, r).real)) <= tol * bnorm:
            return np.where(domain.dirichlet | domain.excised, 0.0, x)
        z = np.where(free, precond(r), 0.0)
        rz_new = inner(domain, r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDiverged(f"PCG did not reach tol={tol} in {maxiter} iterations")

"""Hermitian-metric heat flow with mixed boundary conditions.

The unknown metric is K = e^{logh} e^s with a scalar determinant sector
logh (handled once by the trace normalization) and a Hermitian deformation
s (driven by the trace-free moment map).  Boundary conditions: K pinned at
y = 0 and on excision shells (s = 0 there), Neumann at y = 1 (ghost
reflection inside every operator).

Two steppers: the explicit multiplicative update K <- K exp(-dt m°(K))
with dt at the parabolic CFL limit, and a linearly-implicit variant that
preconditions the update with (1 - (dt/2) Lap)^{-1} so convergence runs
take hundreds of steps instead of tens of thousands.  Both share the
fixed point m°(K) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import herm
from .ebe import moment_map, tracefree, dag
from .grid import Domain, SolverDiverged, diff, d_z, d_zbar
from .higgs import ParamHecke, puncture_weight


class StepTooLarge(Exception):
    pass


class NonHermitianDrift(Exception):
    pass


class NoConvergence(Exception):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class MetricState:
    """K = e^{logh} * mexp(s); logh scalar (determinant sector)."""
    logh: np.ndarray
    s: np.ndarray

    @classmethod
    def identity(cls, domain: Domain, r: int):
        sh = domain.grid.shape
        return cls(logh=np.zeros(sh),
                   s=np.zeros(sh + (r, r), dtype=complex))

    @property
    def r(self):
        return self.s.shape[-1]

    def K(self):
        return np.exp(self.logh)[..., None, None] * herm.mexp(self.s)

    def copy(self):
        return MetricState(self.logh.copy(), self.s.copy())


@dataclass
class FlowState:
    metric: MetricState
    t: float = 0.0
    dt: float = 0.0
    history: list = field(default_factory=list)
    epsilon: float = 0.0


# ---------------------------------------------------------------------------
# the composite scalar Laplacian of the flow (trace sector of m)
# ---------------------------------------------------------------------------

def flow_lap(domain: Domain, f):
    """The scalar Laplacian exactly as the moment map's determinant sector
    sees it: composed spectral/FD Sigma derivatives plus the compact
    staggered y-stencil with Neumann ghost; Dirichlet values enter
    through the given field."""
    g = domain.grid
    h = g.h_y
    out = 4.0 * d_zbar(domain, d_z(domain, f))
    fpad = np.concatenate([f[:1], f, f[-2:-1]], axis=0)
    d2 = (fpad[2:] - 2.0 * fpad[1:-1] + fpad[:-2]) / h ** 2
    d2[0] = 0.0
    out = out + d2
    # free nodes never have excised y-neighbors (those are shell nodes),
    # so no one-sided fallback is needed on the masked operator
    return np.where(domain.free, out, 0.0)


def _sigma_symbols_dz(g):
    """Exact symbols of the composed d_zbar(d_z(.)) route (Nyquist modes
    of the first derivative are dropped, matching diff)."""
    n = g.N_sigma
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=g.h_sigma)
    k[n // 2] = 0.0
    k1 = k[:, None]
    k2 = k[None, :]
    mult_z = 0.5 * (1j * k1 + k2)
    mult_zb = 0.5 * (1j * k1 - k2)
    return 4.0 * mult_z * mult_zb


def _thomas_all_modes(g, lam, rhs_hat, shift=0.0, scale=1.0):
    """Solve per sigma-mode tridiagonal systems
    scale*(D2y + lam) f + shift f = rhs for the clean (no-excision)
    operator: row 0 Dirichlet, top row Neumann ghost."""
    n = g.N_y
    h2 = g.h_y ** 2
    lo = np.full(n, 1.0 / h2) * scale
    up = np.full(n, 1.0 / h2) * scale
    lo[-1] = 2.0 / h2 * scale
    dg = (np.full(rhs_hat.shape, -2.0 / h2, dtype=complex) * scale
          + scale * lam[None, :, :] + shift)
    dg[0] = 1.0
    rhs = rhs_hat.copy()
    rhs[0] = 0.0
    # forward sweep (vectorized over modes)
    cp = np.zeros_like(dg)
    dp = np.zeros_like(rhs)
    cp[0] = 0.0  # row 0 has no upper coupling (Dirichlet identity row)
    dp[0] = rhs[0]
    denom = dg[0]
    cp[0] = 0.0
    dp[0] = rhs[0] / denom
    prev_c = np.zeros_like(dg[0])
    for j in range(1, n):
        denom = dg[j] - lo[j] * prev_c
        cj = (up[j] / denom) if j < n - 1 else np.zeros_like(denom)
        dp_j = (rhs[j] - lo[j] * dp[j - 1]) / denom
        cp[j] = cj
        dp[j] = dp_j
        prev_c = cj
    out = np.zeros_like(rhs)
    out[-1] = dp[-1]
    for j in range(n - 2, -1, -1):
        out[j] = dp[j] - cp[j] * out[j + 1]
    return out


def solve_flow_scalar(domain: Domain, rhs, shift=0.0, scale=1.0,
                      tol=1e-12, maxiter=400):
    """Solve scale*flow_lap(f) + shift*f = rhs with f = 0 at y=0 and on
    shells (Neumann top).  Clean domains solve exactly per sigma mode;
    excised domains run preconditioned LGMRES on the masked operator."""
    g = domain.grid
    lam = _sigma_symbols_dz(g)
    rhs = np.where(domain.free, rhs, 0.0)

    def clean_solve(b):
        bh = np.fft.fft2(b, axes=(1, 2))
        fh = _thomas_all_modes(g, lam, bh, shift=shift, scale=scale)
        return np.fft.ifft2(fh, axes=(1, 2))

    if not domain.excised.any():
        f = clean_solve(rhs)
        return np.where(domain.dirichlet, 0.0, f)

    import scipy.sparse.linalg as spla
    free = domain.free
    nfree = int(free.sum())

    def matvec(v):
        fld = np.zeros(g.shape, dtype=complex)
        fld[free] = v
        out = scale * flow_lap(domain, fld) + shift * fld
        return out[free]

    def psolve(v):
        fld = np.zeros(g.shape, dtype=complex)
        fld[free] = v
        out = clean_solve(fld)
        return out[free]

    A = spla.LinearOperator((nfree, nfree), matvec=matvec, dtype=complex)
    M = spla.LinearOperator((nfree, nfree), matvec=psolve, dtype=complex)
    x, info = spla.lgmres(A, rhs[free], M=M, rtol=tol, atol=0.0,
                          maxiter=maxiter)
    if info != 0:
        raise SolverDiverged(f"lgmres stalled (info={info})")
    f = np.zeros(g.shape, dtype=complex)
    f[free] = x
    return f


# ---------------------------------------------------------------------------
# trace normalization (the pre-step)
# ---------------------------------------------------------------------------

def normalize_trace(domain: Domain, ph: ParamHecke, state: MetricState,
                    tol=1e-12):
    """Replace the base metric by He^f so that tr m vanishes: solves
    (r/2) flow_lap(f) = tr m(K) for the determinant sector.  Returns the
    updated state and f."""
    r = state.r
    K = state.K()
    m = moment_map(domain, ph, K)
    trm = np.real(np.trace(m, axis1=-2, axis2=-1))
    f = np.real(solve_flow_scalar(domain, (2.0 / r) * trm, scale=1.0,
                                  tol=tol))
    new = state.copy()
    new.logh = new.logh + f
    return new, f


def residuals(domain: Domain, ph: ParamHecke, state: MetricState):
    """Weighted sup norms of m°(K) and m(K).

    The moment map is K-Hermitian; the measure projects onto that part
    first (the anti-Hermitian residue of one-sided stencils near the
    excision is discretization noise outside the equation's content)."""
    K = state.K()
    m = moment_map(domain, ph, K)
    Kinv = np.linalg.inv(K)
    m = 0.5 * (m + Kinv @ dag(m) @ K)
    w = puncture_weight(domain, ph.pots)
    mag_full = np.abs(m).max(axis=(-1, -2))
    mag_tf = np.abs(tracefree(m)).max(axis=(-1, -2))
    mask = domain.free
    return (float((w * mag_tf)[mask].max()),
            float((w * mag_full)[mask].max()))


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def dt_cfl(domain: Domain) -> float:
    g = domain.grid
    return 0.2 * min(g.h_sigma, g.h_y) ** 2


def _apply_update(state: MetricState, upd, domain: Domain):
    """s <- mlog(e^{s/2} e^{upd} e^{s/2}): the symmetrized multiplicative
    update (exactly Hermitian for Hermitian inputs, first-order equal to
    K e^{upd}, same fixed point).  Dirichlet masks re-imposed."""
    half = herm.mexp(0.5 * state.s)
    prod = half @ herm.mexp(upd) @ half
    drift = np.abs(prod - dag(prod)).max()
    if drift > 1e-6 * max(1.0, np.abs(prod).max()):
        raise NonHermitianDrift(f"update drift {drift:.2e}")
    s_new = herm.mlog(herm.hermitize(prod))
    s_new = np.where((domain.dirichlet | domain.excised)[..., None, None],
                     0.0, s_new)
    out = state.copy()
    out.s = s_new
    return out


class CapacitanceSolver:
    """Near-exact inverse of shift + scale*flow_lap with the Dirichlet
    constraints on shell and excised nodes.

    The constrained problem is the clean spectral operator plus |S| point
    constraints (S = shell plus excised set): one dense |S| x |S|
    capacitance matrix, built from |S| clean solves, turns every
    subsequent solve into two FFT passes and a small triangular solve.
    The remaining mismatch with the true masked operator (one-sided
    differences on slices that touch the excision) is absorbed by a short
    Krylov polish when ``polish`` is set."""

    def __init__(self, domain: Domain, shift, scale):
        self.domain = domain
        self.shift = shift
        self.scale = scale
        g = domain.grid
        self._lam = _sigma_symbols_dz(g)
        S = domain.shell | domain.excised
        self.S_idx = np.nonzero(S.ravel())[0]
        n_s = self.S_idx.size
        if n_s:
            import scipy.linalg as sla
            cols = np.empty((n_s, n_s), dtype=complex)
            e = np.zeros(g.shape, dtype=complex)
            flatten = e.reshape(-1)
            for a, idx in enumerate(self.S_idx):
                flatten[...] = 0.0
                flatten[idx] = 1.0
                sol = self._clean(e)
                cols[:, a] = sol.reshape(-1)[self.S_idx]
            self._lu = sla.lu_factor(cols)

    def _clean(self, rhs):
        g = self.domain.grid
        bh = np.fft.fft2(rhs, axes=(1, 2))
        fh = _thomas_all_modes(g, self._lam, bh, shift=self.shift,
                               scale=self.scale)
        return np.fft.ifft2(fh, axes=(1, 2))

    def solve(self, rhs):
        import scipy.linalg as sla
        dom = self.domain
        rhs = np.where(dom.free, rhs, 0.0)
        x0 = self._clean(rhs)
        if self.S_idx.size:
            g = sla.lu_solve(self._lu, -x0.reshape(-1)[self.S_idx])
            corr = np.zeros(dom.grid.shape, dtype=complex)
            corr.reshape(-1)[self.S_idx] = g
            x0 = x0 + self._clean(corr)
        return np.where(dom.dirichlet | dom.excised, 0.0, x0)


def _masked_solve(domain: Domain, rhs, dt, solver: CapacitanceSolver,
                  tol=1e-9, maxiter=60):
    """(1 - (dt/2) flow_lap) u = rhs through Krylov preconditioned by the
    capacitance solver (which is exact up to the one-sided stencils on
    slices that touch the excision, so a handful of iterations suffice)."""
    if not domain.excised.any():
        return solver.solve(rhs)
    import scipy.sparse.linalg as spla
    free = domain.free
    nfree = int(free.sum())

    def matvec(v):
        fld = np.zeros(domain.grid.shape, dtype=complex)
        fld[free] = v
        out = fld - 0.5 * dt * flow_lap(domain, fld)
        return out[free]

    def psolve(v):
        fld = np.zeros(domain.grid.shape, dtype=complex)
        fld[free] = v
        return solver.solve(fld)[free]

    A = spla.LinearOperator((nfree, nfree), matvec=matvec, dtype=complex)
    M = spla.LinearOperator((nfree, nfree), matvec=psolve, dtype=complex)
    rhs_m = np.where(free, rhs, 0.0)
    x, info = spla.lgmres(A, rhs_m[free], M=M, rtol=tol, atol=0.0,
                          maxiter=maxiter)
    if info != 0:
        raise SolverDiverged(f"masked imex solve stalled (info={info})")
    out = np.zeros(domain.grid.shape, dtype=complex)
    out[free] = x
    return out


def _imex_update(domain: Domain, drv, dt, r, solver: CapacitanceSolver = None):
    """Entrywise solve of (1 - (dt/2) Lap) u = -dt * drv on the masked
    operator."""
    if solver is None:
        solver = CapacitanceSolver(domain, 1.0, -0.5 * dt)
    upd = np.zeros_like(drv)
    for i in range(r):
        for j in range(i, r):
            sol = _masked_solve(domain, -dt * drv[..., i, j], dt, solver)
            upd[..., i, j] = sol
            if j > i:
                upd[..., j, i] = np.conj(sol)
    return upd


def flow_step(domain: Domain, ph: ParamHecke, state: MetricState, dt,
              mode="explicit", m=None, solver=None):
    """One step of the trace-free metric heat flow.

    explicit:  K <- K exp(-dt m°(K))
    imex:      the update solves (1 - (dt/2) Lap) u = -dt m°(K) entrywise
               (same fixed point, parabolic stiffness removed)
    full moment map variants use m instead of m° (mode 'explicit_full').
    """
    K = state.K()
    if m is None:
        m = moment_map(domain, ph, K)
    Kinv = np.linalg.inv(K)
    m = 0.5 * (m + Kinv @ dag(m) @ K)
    use_full = mode.endswith("_full")
    drv = m if use_full else tracefree(m)
    if mode.startswith("imex"):
        if solver is None:
            solver = CapacitanceSolver(domain, 1.0, -0.5 * dt)
        upd = _imex_update(domain, drv, dt, state.r, solver=solver)
    else:
        upd = -dt * drv
    upd = herm.hermitize(upd)
    return _apply_update(state, upd, domain)


def fit_decay(history, column=1):
    """Least-squares fit of log residual vs t on the trailing half of the
    history; returns (lambda, r_squared).  ``column`` selects the
    residual (1 = trace-free, 2 = full)."""
    hist = [(row[0], row[column]) for row in history if row[column] > 0]
    if len(hist) < 4:
        return 0.0, 0.0
    tail = hist[len(hist) // 2:]
    t = np.array([a for a, _ in tail])
    lr = np.log([b for _, b in tail])
    A = np.stack([t, np.ones_like(t)], axis=1)
    sol, *_ = np.linalg.lstsq(A, lr, rcond=None)
    pred = A @ sol
    ss_res = ((lr - pred) ** 2).sum()
    ss_tot = ((lr - lr.mean()) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-sol[0]), float(r2)


def run_flow(domain: Domain, ph: ParamHecke, state: MetricState, tol,
             t_max, dt0=None, mode="imex", max_steps=100000,
             monotone_grace=10, dt_max=4.0, verbose=False):
    """Step until the weighted sup of m°(K) drops below tol.

    Adaptive dt: halve on residual increase (StepTooLarge after 10
    consecutive); explicit stepping grows dt 1.2x after 20 clean steps
    (the parabolic CFL schedule), the implicit stepper grows every clean
    step since its stability is not CFL-bound.  Returns a FlowState with
    history rows (t, res_tracefree, res_full, sup_s, dt)."""
    if dt0 is None:
        dt0 = dt_cfl(domain) if mode.startswith("explicit") else 1.0
    # the implicit stepper holds dt fixed: its capacitance factorization
    # is per-dt, and contraction is already dt-uniform
    grow_every = 20 if mode.startswith("explicit") else None
    fs = FlowState(metric=state.copy(), dt=dt0, epsilon=domain.epsilon)
    w = puncture_weight(domain, ph.pots)

    def measure(metric, m):
        K = metric.K()
        Kinv = np.linalg.inv(K)
        mh = 0.5 * (m + Kinv @ dag(m) @ K)
        mag_tf = np.abs(tracefree(mh)).max(axis=(-1, -2))
        mag = np.abs(mh).max(axis=(-1, -2))
        return (float((w * mag_tf)[domain.free].max()),
                float((w * mag)[domain.free].max()))

    use_full = mode.endswith("_full")

    def stopping(res_pair):
        return res_pair[1] if use_full else res_pair[0]

    m = moment_map(domain, ph, fs.metric.K())
    res_tf, res_full = measure(fs.metric, m)
    sup_s = float(np.abs(fs.metric.s).max())
    fs.history.append((fs.t, res_tf, res_full, sup_s, fs.dt))
    if stopping((res_tf, res_full)) < tol:
        return fs
    bad_streak = 0
    clean_streak = 0
    steps = 0
    solver = None
    solver_dt = None
    while fs.t < t_max and steps < max_steps:
        if mode.startswith("imex") and solver_dt != fs.dt:
            solver = CapacitanceSolver(domain, 1.0, -0.5 * fs.dt)
            solver_dt = fs.dt
        try:
            new_metric = flow_step(domain, ph, fs.metric, fs.dt, mode=mode,
                                   m=m, solver=solver)
        except herm.NotPositiveDefinite:
            fs.dt *= 0.5
            bad_streak += 1
            if bad_streak > monotone_grace:
                raise StepTooLarge("repeated indefinite updates")
            continue
        m_new = moment_map(domain, ph, new_metric.K())
        new_tf, new_full = measure(new_metric, m_new)
        if stopping((new_tf, new_full)) > stopping((res_tf, res_full)) \
                * (1.0 + 1e-12):
            bad_streak += 1
            clean_streak = 0
            fs.dt *= 0.5
            if bad_streak > monotone_grace:
                raise StepTooLarge(
                    f"residual increased {bad_streak} consecutive steps")
            continue
        bad_streak = 0
        clean_streak += 1
        if grow_every and clean_streak >= grow_every:
            fs.dt = min(fs.dt * 1.2, dt_max)
            clean_streak = 0
        fs.metric = new_metric
        fs.t += fs.dt
        m = m_new
        res_tf, res_full = new_tf, new_full
        sup_s = float(np.abs(fs.metric.s).max())
        fs.history.append((fs.t, res_tf, res_full, sup_s, fs.dt))
        steps += 1
        if verbose:
            print(f"  step {steps}: dt={fs.dt:.3g} res={res_tf:.3e}",
                  flush=True)
        if stopping((res_tf, res_full)) < tol:
            return fs
    raise NoConvergence(
        f"residual {stopping((res_tf, res_full)):.3e} > tol {tol:.3e} at "
        f"t={fs.t:.3f}", state=fs)


# ---------------------------------------------------------------------------
# continuation and uniqueness
# ---------------------------------------------------------------------------

def epsilon_continuation(make_problem, eps_ladder, tol, t_max, mode="imex"):
    """Solve at each excision radius, warm-starting from the previous rung.

    ``make_problem(eps)`` must return (domain, ph).  Reports per-rung
    solutions and the Cauchy differences sup_{X_delta} |s_{i+1} - s_i|
    with delta the first (largest) epsilon."""
    eps_ladder = list(eps_ladder)
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError("epsilon ladder must be strictly decreasing")
    runs = []
    prev = None
    X_delta = None
    diffs = []

    def logmetric(fs):
        r = fs.metric.r
        return fs.metric.s + fs.metric.logh[..., None, None] * np.eye(r)

    for eps in eps_ladder:
        domain, ph = make_problem(eps)
        state = MetricState.identity(domain, ph.r)
        if prev is not None:
            state.s = np.where(
                (domain.dirichlet | domain.excised)[..., None, None],
                0.0, prev.metric.s)
        state, _ = normalize_trace(domain, ph, state)
        fs = run_flow(domain, ph, state, tol, t_max, mode=mode)
        if X_delta is None:
            X_delta = domain.valid & ~domain.shell
        else:
            d = np.abs(logmetric(runs[-1]) - logmetric(fs)).max(axis=(-1, -2))
            diffs.append(float(d[X_delta].max()))
        runs.append(fs)
        prev = fs
    sups = [float(np.abs(logmetric(r))[X_delta].max()) for r in runs]
    return runs, diffs, sups


def uniqueness_test(domain: Domain, ph: ParamHecke, deform, tol, t_max,
                    mode="imex"):
    """Flow two admissible starts (plain and e^{deform}-shifted) and return
    the sup distance of the limits, sup |mlog(K1^{-1/2} K2 K1^{-1/2})|."""
    s0 = MetricState.identity(domain, ph.r)
    s0, _ = normalize_trace(domain, ph, s0)
    f1 = run_flow(domain, ph, s0, tol, t_max, mode=mode)

    s1 = MetricState.identity(domain, ph.r)
    s1.s = np.where((domain.dirichlet | domain.excised)[..., None, None],
                    0.0, deform)
    s1, _ = normalize_trace(domain, ph, s1)
    f2 = run_flow(domain, ph, s1, tol, t_max, mode=mode)

    K1 = f1.metric.K()
    K2 = f2.metric.K()
    w, v = np.linalg.eigh(herm.hermitize(K1))
    K1h = (v * (w ** -0.5)[..., None, :]) @ dag(v)
    rel = herm.mlog(herm.hermitize(K1h @ K2 @ K1h))
    dist = float(np.abs(rel)[domain.valid].max())
    return dist, f1, f2

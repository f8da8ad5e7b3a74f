"""Run configuration: flat key = value files, CLI overrides, named presets.

A preset fixes grid geometry, punctures and background so that pipeline
runs are reproducible from a single name; every derived object is built
through ``build_problem``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .grid import Puncture, TorusGrid, build_domain
from .higgs import HiggsPair, build_param_hecke, snap_to_half_cell


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    preset: str = ""
    N_sigma: int = 32
    N_y: int = 33
    L: float = 2.0 * np.pi
    rank: int = 1
    punctures: list = field(default_factory=list)  # (y, z, (k...))
    epsilon: float = 0.0
    eps_ladder: list = field(default_factory=list)
    rho: float = None
    rho_t: float = None
    background: str = "zero"
    tol: float = 1e-6
    t_max: float = 400.0
    dt0: float = None
    mode: str = "imex"
    seed: int = 0
    outdir: str = "runs/out"
    slices: list = field(default_factory=list)   # intermediate m_i

    def echo(self):
        d = asdict(self)
        d["punctures"] = [[p[0], [p[1].real, p[1].imag], list(p[2])]
                          for p in self.punctures]
        return d


_KEYS = {f: t for f, t in [
    ("preset", str), ("N_sigma", int), ("N_y", int), ("L", float),
    ("rank", int), ("epsilon", float), ("rho", float), ("rho_t", float),
    ("background", str), ("tol", float), ("t_max", float), ("dt0", float),
    ("mode", str), ("seed", int), ("outdir", str),
]}


def parse_config(text_lines, overrides=()):
    """Flat key = value lines (# comments); overrides are 'key=value'
    strings that win over the file."""
    cfg = RunConfig()
    items = []
    for line in text_lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        items.append((k, v))
    items += [tuple(s.strip() for s in ov.split("=", 1)) for ov in overrides]
    for k, v in items:
        if k == "puncture":
            # y : z_re : z_im : k1,k2,...
            parts = v.split(":")
            if len(parts) != 4:
                raise ConfigError(f"puncture needs y:re:im:k, got {v!r}")
            y, zr, zi = float(parts[0]), float(parts[1]), float(parts[2])
            kk = tuple(int(x) for x in parts[3].split(","))
            cfg.punctures.append((y, complex(zr, zi), kk))
        elif k == "eps_ladder":
            cfg.eps_ladder = [float(x) for x in v.split(",")]
        elif k == "slices":
            cfg.slices = [float(x) for x in v.split(",")]
        elif k in _KEYS:
            setattr(cfg, k, _KEYS[k](v))
        else:
            raise ConfigError(f"unknown key {k!r}")
    if cfg.preset:
        cfg = apply_preset(cfg)
    return cfg


def apply_preset(cfg: RunConfig) -> RunConfig:
    name = cfg.preset
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    base = PRESETS[name]()
    # explicit non-default scalars override the preset
    for f in ("tol", "t_max", "seed", "outdir", "mode"):
        v = getattr(cfg, f)
        if v != getattr(RunConfig(), f):
            setattr(base, f, v)
    base.preset = name
    return base


def _preset_identities():
    return RunConfig(N_sigma=32, N_y=33, L=2.0 * np.pi, rank=2,
                     background="random", tol=1e-6)


def _preset_abelian_k1():
    g = TorusGrid(48, 49, 2.0)
    return RunConfig(N_sigma=48, N_y=49, L=2.0, rank=1,
                     punctures=[(0.5, snap_to_half_cell(g, 0j), (1,))],
                     epsilon=0.0, rho=0.15, rho_t=0.45,
                     background="zero", tol=1e-6)


def _preset_rank1_eps():
    g = TorusGrid(48, 49, 2.0)
    return RunConfig(N_sigma=48, N_y=49, L=2.0, rank=1,
                     punctures=[(0.5, snap_to_half_cell(g, 0j), (1,))],
                     epsilon=0.125, eps_ladder=[0.15, 0.1, 0.0625],
                     rho=0.1875, rho_t=0.45, background="zero", tol=1e-6)


def _preset_rank2_k01():
    g = TorusGrid(48, 49, 2.0)
    return RunConfig(N_sigma=48, N_y=49, L=2.0, rank=2,
                     punctures=[(0.5, snap_to_half_cell(g, 0j), (0, 1))],
                     epsilon=0.0625, rho=0.15, rho_t=0.45,
                     background="diag_phi", tol=1e-6)


def _preset_sequence():
    # quarter-period offset between the punctures: rings around either one
    # stay clear of the other's torus cut locus (where minimal-image seam
    # phases jump)
    g = TorusGrid(64, 65, 2.0)
    z1 = snap_to_half_cell(g, 0j)
    z2 = snap_to_half_cell(g, z1 + 0.5 + 0.5j)
    return RunConfig(N_sigma=64, N_y=65, L=2.0, rank=2,
                     punctures=[(0.30, z1, (0, 1)), (0.70, z2, (1, 1))],
                     epsilon=0.05, rho=0.10, rho_t=0.30,
                     background="diag_phi", tol=1e-6,
                     slices=[0.5])


PRESETS = {
    "identities": _preset_identities,
    "abelian_k1": _preset_abelian_k1,
    "rank1_eps": _preset_rank1_eps,
    "rank2_k01": _preset_rank2_k01,
    "sequence": _preset_sequence,
}


def smooth_matrix_field(grid: TorusGrid, rng, r, scale=0.3, kmax=2,
                        hermitian=False, slice_only=False):
    """Bandlimited random matrix field used by presets and tests."""
    y, x1, x2 = grid.mesh()
    shape = grid.shape if not slice_only else grid.shape[1:]
    if slice_only:
        x1, x2 = x1[0], x2[0]
    out = np.zeros(shape + (r, r), dtype=complex)
    for _ in range(4):
        m1, m2 = rng.integers(-kmax, kmax + 1, 2)
        my = int(rng.integers(0, 3))
        c = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
        modes = np.exp(2j * np.pi * (m1 * x1 + m2 * x2) / grid.L)
        if not slice_only:
            modes = modes * np.cos(my * np.pi * y / 2)
        out += modes[..., None, None] * c
    out = scale * out / 4
    if hermitian:
        out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
    return out


def background_pair(cfg: RunConfig, grid: TorusGrid) -> HiggsPair:
    r = cfg.rank
    n = grid.N_sigma
    zero = np.zeros((n, n, r, r), dtype=complex)
    if cfg.background == "zero":
        return HiggsPair(a01=zero.copy(), phi=zero.copy())
    if cfg.background == "diag_phi":
        vals = np.linspace(0.0, 0.35 * (r - 1), r)
        phi = np.broadcast_to(np.diag(vals).astype(complex),
                              (n, n, r, r)).copy()
        return HiggsPair(a01=zero.copy(), phi=phi)
    if cfg.background == "random":
        rng = np.random.default_rng(cfg.seed)
        gf = smooth_matrix_field(grid, rng, r, 0.25, slice_only=True)
        gf = np.broadcast_to(np.eye(r), gf.shape) + gf \
            + 0.5 * gf @ gf
        gfi = np.linalg.inv(gf)
        p0 = 0.3 * (rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r)))
        from .higgs import slice_d_zbar
        a01 = gfi @ slice_d_zbar(grid, gf)
        phi = gfi @ np.broadcast_to(p0, (n, n, r, r)) @ gf
        return HiggsPair(a01=a01, phi=phi)
    raise ConfigError(f"unknown background {cfg.background!r}")


def build_problem(cfg: RunConfig, epsilon=None):
    """(domain, ph) for a config; epsilon optionally overridden (used by
    the continuation ladder)."""
    grid = TorusGrid(N_sigma=cfg.N_sigma, N_y=cfg.N_y, L=cfg.L)
    punctures = [Puncture(y, z, k) for (y, z, k) in cfg.punctures]
    eps = cfg.epsilon if epsilon is None else epsilon
    domain = build_domain(grid, punctures, eps)
    pair0 = background_pair(cfg, grid)
    ph = build_param_hecke(domain, pair0, rho=cfg.rho, rho_t=cfg.rho_t)
    return domain, ph


def gauge_data(grid: TorusGrid, domain, rng, r, scale=0.25, p_scale=0.3):
    """Random integrable data: the complex-gauge transform of a constant
    Higgs pair (identities and property tests feed on this)."""
    from .grid import d_zbar, diff
    from .higgs import ParamHecke
    V = smooth_matrix_field(grid, rng, r, scale)
    gf = np.broadcast_to(np.eye(r), V.shape) + V + 0.5 * V @ V \
        + V @ V @ V / 6.0
    gfi = np.linalg.inv(gf)
    p0 = p_scale * (rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r)))
    return ParamHecke(
        domain=domain,
        a01_num=gfi @ d_zbar(domain, gf),
        b_num=gfi @ diff(domain, gf, "y"),
        phi=gfi @ np.broadcast_to(p0, grid.shape + (r, r)) @ gf,
        pots=[], rho=0.1 * grid.L, rho_t=0.2 * grid.L)

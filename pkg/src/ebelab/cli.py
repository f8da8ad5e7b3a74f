"""Command-line front end.

Subcommands: dirac-check, build, flow, scatter, roundtrip, hecke-type,
identities.  Runs are configured by a flat key = value file plus
--set overrides and named --preset geometries; every run writes its
artifacts and a manifest.json under the output directory.

Exit codes: 0 pass, 2 config error, 3 solver failure, 4 check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dirac, ebe, flow, hecke_exact, herm, io as iomod, scatter
from .config import ConfigError, RunConfig
from .grid import SolverDiverged


def _load_config(args) -> RunConfig:
    lines = []
    if getattr(args, "config", None):
        lines = Path(args.config).read_text().splitlines()
    overrides = list(getattr(args, "set", []) or [])
    if getattr(args, "preset", None):
        overrides = [f"preset={args.preset}"] + overrides
    return cfgmod.parse_config(lines, overrides)


def _outdir(cfg) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_dirac_check(args):
    cfg = _load_config(args)
    rng = np.random.default_rng(cfg.seed)
    types = [(0,), (1,), (2,), (1, 3)]
    report = {}
    ok = True
    for k in types:
        y = rng.uniform(-1, 1, 400)
        z = rng.uniform(-1, 1, 400) + 1j * rng.uniform(-1, 1, 400)
        r = dirac.radius(y, z)
        sel = (r > 0.1) & (r < 1.0)
        res = float(np.max(dirac.bogomolny_residual(
            k, y[sel], z[sel], "auto"))) if sel.any() else 0.0
        entry = {"bogomolny_residual": res}
        ok &= res < 1e-10
        # scattering law |sigma| vs |z| slope for each entry
        slopes = []
        for kj in k:
            zz = np.exp(np.linspace(np.log(0.05), np.log(0.4), 12)) \
                * np.exp(1j * rng.uniform(0, 2 * np.pi, 12))
            sc = dirac.scattering_closed_form(kj, zz, -0.3, 0.3)
            slope = dirac.fit_log_slope(np.abs(zz), np.abs(sc)) if kj != 0 \
                else float(np.abs(np.abs(sc) - 1.0).max())
            if kj != 0:
                slopes.append(slope)
                ok &= abs(slope - kj) < 1e-3
            else:
                ok &= slope < 1e-12
        entry["scattering_slopes"] = slopes
        report[str(k)] = entry
    out = _outdir(cfg)
    with open(out / "dirac_check.json", "w") as fh:
        json.dump(report, fh, indent=2)
    iomod.write_manifest(out, cfg.echo())
    print(json.dumps(report, indent=2))
    return 0 if ok else 4


def _build(cfg):
    domain, ph = cfgmod.build_problem(cfg)
    return domain, ph


def cmd_build(args):
    cfg = _load_config(args)
    domain, ph = _build(cfg)
    out = _outdir(cfg)
    iomod.dump_field(out / "a01_num.ebe", domain, ph.a01_num)
    iomod.dump_field(out / "b_num.ebe", domain, ph.b_num)
    iomod.dump_field(out / "phi.ebe", domain, ph.phi)
    sidecar = {
        "punctures": [[p.y, [p.z.real, p.z.imag], list(p.k)]
                      for p in domain.punctures],
        "rho": ph.rho, "rho_t": ph.rho_t, "epsilon": domain.epsilon,
    }
    with open(out / "param_hecke.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
    from .higgs import residual_param_hecke
    r1, r2, r3 = residual_param_hecke(ph)
    print(f"residuals: dbar_A phi {r1:.3e}  [d_y,dbar] {r2:.3e}  "
          f"[d_y,phi] {r3:.3e}")
    iomod.write_manifest(out, cfg.echo())
    return 0


def _run_flow(cfg, domain, ph):
    state = flow.MetricState.identity(domain, ph.r)
    state, _ = flow.normalize_trace(domain, ph, state)
    fs = flow.run_flow(domain, ph, state, cfg.tol, cfg.t_max, dt0=cfg.dt0,
                       mode=cfg.mode)
    return fs


def _write_morrey(out, domain, ph, fs):
    """morrey.csv for the full log-metric deformation from the base
    (at rank 1 the whole deformation sits in the determinant sector)."""
    from .dirac import InsufficientShells
    if not ph.pots:
        return
    s_full = fs.metric.s \
        + fs.metric.logh[..., None, None] * np.eye(ph.r)
    radii = np.geomspace(2 * max(domain.epsilon, domain.grid.h_sigma),
                         2 * ph.rho, 6)
    try:
        gv, expo = ebe.morrey_g(domain, ph.pots[0], s_full, radii)
    except InsufficientShells:
        return
    iomod.write_morrey_csv(out / "morrey.csv", radii, gv, expo)


def cmd_flow(args):
    cfg = _load_config(args)
    domain, ph = _build(cfg)
    out = _outdir(cfg)
    try:
        if cfg.t_max <= 0:
            state = flow.MetricState.identity(domain, ph.r)
            state, _ = flow.normalize_trace(domain, ph, state)
            res = flow.residuals(domain, ph, state)
            iomod.write_history_csv(out / "history.csv",
                                    [(0.0, res[0], res[1], 0.0, 0.0)])
            iomod.write_manifest(out, cfg.echo())
            print(f"t_max=0: single row, residual {res[0]:.3e}")
            return 3 if res[0] > cfg.tol else 0
        fs = _run_flow(cfg, domain, ph)
    except (flow.NoConvergence, flow.StepTooLarge, SolverDiverged) as e:
        if isinstance(e, flow.NoConvergence) and e.state is not None:
            iomod.write_history_csv(out / "history.csv", e.state.history)
        print(f"solver failure: {e}", file=sys.stderr)
        return 3
    iomod.write_history_csv(out / "history.csv", fs.history)
    iomod.dump_field(out / "metric_s.ebe", domain, fs.metric.s)
    iomod.dump_field(out / "metric_logh.ebe", domain,
                     fs.metric.logh.astype(complex)[..., None, None])
    lam, r2 = flow.fit_decay(fs.history,
                             column=2 if cfg.mode.endswith("_full") else 1)
    _write_morrey(out, domain, ph, fs)
    rescol = 2 if cfg.mode.endswith("_full") else 1
    iomod.write_manifest(out, cfg.echo(), extra={
        "flow": {"steps": len(fs.history) - 1, "t_end": fs.t,
                 "lambda": lam, "r_squared": r2,
                 "final_residual": fs.history[-1][rescol]}})
    print(f"converged: {len(fs.history) - 1} steps, residual "
          f"{fs.history[-1][rescol]:.3e}, lambda {lam:.4f} (R^2 {r2:.3f})")
    return 0


def _scatter_rows(cfg, domain, ph, result):
    rows = []
    for pot in ph.pots:
        p = pot.puncture
        seg = next((i for i, (a, b) in enumerate(result.segments)
                    if a < p.y <= b), 0)
        r_in, r_out = scatter.extraction_annulus(ph, pot)
        label = "k" + "_".join(str(v) for v in p.k)
        try:
            got, diags = scatter.extract_type(result.sigma[seg], p.z,
                                              domain.grid.L, r_in, r_out,
                                              expected_sum=sum(p.k))
            rows.append({"puncture": label, "segment": seg,
                         "diags": diags, "extracted": got})
        except scatter.AmbiguousType as e:
            rows.append({"puncture": label, "segment": seg,
                         "diags": {"ring_radii": [], "ring_log_sv": [],
                                   "slopes": e.slopes or [],
                                   "winding": e.winding},
                         "extracted": None, "error": str(e)})
    return rows


def cmd_scatter(args):
    cfg = _load_config(args)
    domain, ph = _build(cfg)
    out = _outdir(cfg)
    result = scatter.scattering_map(ph, slices=cfg.slices or None)
    rows = _scatter_rows(cfg, domain, ph, result)
    iomod.write_scattering_csv(out / "scattering.csv", rows)
    iomod.write_manifest(out, cfg.echo())
    ok = all(r.get("extracted") is not None for r in rows)
    for r in rows:
        print(f"puncture {r['puncture']} segment {r['segment']}: "
              f"extracted {r.get('extracted')}")
    return 0 if ok else 4


def cmd_roundtrip(args):
    cfg = _load_config(args)
    domain, ph = _build(cfg)
    out = _outdir(cfg)
    try:
        fs = _run_flow(cfg, domain, ph)
    except (flow.NoConvergence, flow.StepTooLarge, SolverDiverged) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3
    iomod.write_history_csv(out / "history.csv", fs.history)
    result = scatter.scattering_map(ph, slices=cfg.slices or None)
    rows = _scatter_rows(cfg, domain, ph, result)
    iomod.write_scattering_csv(out / "scattering.csv", rows)
    report = scatter.roundtrip_check(ph, result)
    _write_morrey(out, domain, ph, fs)
    verdict = {"pass": bool(report.ok),
               "per_puncture": [[list(a), list(b) if b else None]
                                for a, b, *_ in report.per_puncture]}
    with open(out / "roundtrip.json", "w") as fh:
        json.dump(verdict, fh, indent=2)
    iomod.write_manifest(out, cfg.echo(), extra={"roundtrip": verdict})
    print("PASS" if report.ok else "FAIL", verdict["per_puncture"])
    return 0 if report.ok else 4


def cmd_identities(args):
    from .grid import TorusGrid, build_domain
    cfg = _load_config(args)
    out = _outdir(cfg)
    tolerances = {"trace_ratio": (3.2, 4.8), "energy_ratio": (3.2, 4.8),
                  "xi_ratio": (3.2, 4.8), "split_ratio": (3.2, 4.8),
                  "inequality_violation": (None, 0.0)}
    vals = {}
    per_n = {}
    for N in (16, 32):
        g = TorusGrid(N, N + 1, cfg.L)
        d = build_domain(g)
        rng = np.random.default_rng(cfg.seed)
        ph = cfgmod.gauge_data(g, d, rng, 2)
        K = np.broadcast_to(np.eye(2, dtype=complex),
                            g.shape + (2, 2)).copy()
        s = cfgmod.smooth_matrix_field(g, rng, 2, 0.3, hermitian=True)
        eq, viol = ebe.trace_identity_check(d, ph, K, s)
        en = ebe.energy_identity_check(d, ph, K, s)
        xf, xd = ebe.xi_transform(d, ph, K, s)
        xe = float(np.abs(xf - xd)[d.interior].max())
        sp = ebe.split_equivalence_check(d, ph, K)
        per_n[N] = dict(trace=eq, energy=en, xi=xe, split=sp, viol=viol)
    for key in ("trace", "energy", "xi", "split"):
        vals[key + "_ratio"] = per_n[16][key] / per_n[32][key]
    # inequality scan
    g = TorusGrid(16, 17, cfg.L)
    d = build_domain(g)
    rng = np.random.default_rng(cfg.seed)
    ph = cfgmod.gauge_data(g, d, rng, 2)
    K = np.broadcast_to(np.eye(2, dtype=complex), g.shape + (2, 2)).copy()
    worst = -np.inf
    slack = 0.05
    for _ in range(100):
        s = cfgmod.smooth_matrix_field(g, rng, 2, 0.3, hermitian=True)
        _, viol = ebe.trace_identity_check(d, ph, K, s)
        worst = max(worst, viol)
    vals["inequality_violation"] = worst - slack
    ok = True
    for key, (lo, hi) in tolerances.items():
        v = vals[key]
        this = (lo is None or v >= lo) and (hi is None or v <= hi)
        ok &= this
        print(f"{key}: {v:.4g}  "
              f"[{'ok' if this else 'FAIL'} bounds=({lo},{hi})]")
    with open(out / "identities.json", "w") as fh:
        json.dump({"values": vals, "per_resolution": per_n}, fh, indent=2)
    iomod.write_manifest(out, cfg.echo())
    return 0 if ok else 4


def cmd_hecke_type(args):
    try:
        eta = hecke_exact.parse_matrix(args.matrix, n_trunc=args.trunc)
        k = hecke_exact.smith_type(eta)
    except (ValueError, hecke_exact.SingularToPrecision,
            hecke_exact.TruncationInsufficient) as e:
        print(json.dumps({"error": str(e)}))
        return 2
    print(json.dumps({"type": list(k),
                      "det_valuation": int(sum(k))}))
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="ebelab",
        description="extended-Bogomolny / Hecke-modification laboratory")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--preset", help="named preset", default=None)
        p.add_argument("--set", action="append", default=[],
                       help="override key=value")

    for name, fn in (("dirac-check", cmd_dirac_check), ("build", cmd_build),
                     ("flow", cmd_flow), ("scatter", cmd_scatter),
                     ("roundtrip", cmd_roundtrip),
                     ("identities", cmd_identities)):
        p = sub.add_parser(name)
        add_common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("hecke-type")
    p.add_argument("matrix", help="rows 'p11, p12; p21, p22' of polynomials "
                   "in z (rational or (a+bi) coefficients, z^-n allowed)")
    p.add_argument("--trunc", type=int, default=None)
    p.set_defaults(func=cmd_hecke_type)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (SolverDiverged, flow.NoConvergence, flow.StepTooLarge) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

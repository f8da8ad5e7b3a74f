import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ebelab import cli, io as iomod
from ebelab.config import ConfigError, parse_config
from ebelab.grid import Puncture, TorusGrid, build_domain


def run_cli(args):
    return cli.main(list(args))


def test_config_parsing(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "N_sigma = 16\nN_y = 17\nL = 6.283185307179586\n"
        "rank = 1\npuncture = 0.5:0.1:0.1:1\nepsilon = 0.4\n"
        "tol = 1e-5\nseed = 3\n# comment\n")
    cfg = parse_config(cfgfile.read_text().splitlines(),
                       overrides=["tol=1e-4"])
    assert cfg.N_sigma == 16 and cfg.tol == 1e-4
    assert cfg.punctures[0][2] == (1,)
    with pytest.raises(ConfigError):
        parse_config(["bogus = 1"])
    with pytest.raises(ConfigError):
        parse_config(["no equals sign here"])


def test_dirac_check_cli(tmp_path):
    code = run_cli(["dirac-check", "--set", f"outdir={tmp_path}"])
    assert code == 0
    report = json.loads((tmp_path / "dirac_check.json").read_text())
    assert report["(1,)"]["bogomolny_residual"] < 1e-10
    assert (tmp_path / "manifest.json").exists()


def test_hecke_type_cli(capsys):
    code = run_cli(["hecke-type", "z^2, 0; 0, z^3"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0 and out["type"] == [2, 3]
    code = run_cli(["hecke-type", "z, z; z, z"])
    out = json.loads(capsys.readouterr().out)
    assert code == 2 and "error" in out


def test_malformed_type_is_config_error(tmp_path, capsys):
    # decreasing k in a puncture spec maps to exit code 2
    code = run_cli(["build", "--set", "N_sigma=16", "--set", "N_y=17",
                    "--set", "rank=2", "--set", "puncture=0.5:0.1:0.1:2,1",
                    "--set", "epsilon=0.4", "--set", f"outdir={tmp_path}"])
    capsys.readouterr()
    assert code == 2
    with pytest.raises(ValueError):
        Puncture(0.5, 0j, (2, 1))


def test_flow_cli_t_max_zero(tmp_path):
    code = run_cli(["flow", "--set", "N_sigma=16", "--set", "N_y=17",
                    "--set", "rank=1", "--set", "t_max=0",
                    "--set", f"outdir={tmp_path}"])
    # vacuum background is already converged: exit 0, single-row history
    assert code == 0
    lines = (tmp_path / "history.csv").read_text().strip().splitlines()
    assert len(lines) == 2


def test_build_cli(tmp_path):
    code = run_cli(["build", "--preset", "rank1_eps",
                    "--set", f"outdir={tmp_path}"])
    assert code == 0
    d, fld = iomod.load_field(tmp_path / "phi.ebe")
    assert fld.shape[-1] == 1
    sidecar = json.loads((tmp_path / "param_hecke.json").read_text())
    assert sidecar["punctures"][0][2] == [1]


def test_field_dump_roundtrip(tmp_path):
    g = TorusGrid(16, 17, 2 * np.pi)
    d = build_domain(g, [Puncture(0.5, 0j, (1,))], epsilon=0.45)
    rng = np.random.default_rng(5)
    fld = rng.normal(size=g.shape + (2, 2)) \
        + 1j * rng.normal(size=g.shape + (2, 2))
    fld = np.where(d.excised[..., None, None], 0.0, fld)
    path = tmp_path / "f.ebe"
    iomod.dump_field(path, d, fld)
    d2, fld2 = iomod.load_field(path)
    assert np.array_equal(d2.excised, d.excised)
    assert np.allclose(fld2, fld)
    # excised entries are NaN on disk
    raw = path.read_bytes()
    assert np.isnan(np.frombuffer(raw[-16 * 2 * 2 * 2:], dtype="<f8")).any() \
        or d.excised.sum() > 0


def test_cli_determinism(tmp_path):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = run_cli(["scatter", "--preset", "rank1_eps",
                        "--set", f"outdir={out}", "--set", "seed=5"])
        assert code == 0
        outs.append((out / "scattering.csv").read_bytes())
    assert outs[0] == outs[1]


def test_identities_cli(tmp_path):
    code = run_cli(["identities", "--set", f"outdir={tmp_path}",
                    "--set", "seed=7"])
    assert code == 0
    vals = json.loads((tmp_path / "identities.json").read_text())["values"]
    for key in ("trace_ratio", "energy_ratio", "xi_ratio", "split_ratio"):
        assert 3.2 <= vals[key] <= 4.8

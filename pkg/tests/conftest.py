import numpy as np
import pytest

from ebelab import config as cfgmod
from ebelab import flow as flowmod
from ebelab.grid import TorusGrid, build_domain


@pytest.fixture()
def rng():
    # function-scoped: draws must not depend on test execution order
    return np.random.default_rng(20260808)


@pytest.fixture(scope="session")
def small_domain():
    g = TorusGrid(16, 17, 2 * np.pi)
    return g, build_domain(g)


@pytest.fixture(scope="session")
def rank2_pipeline():
    """Converged rank-2 k=(0,1) single-puncture run, shared across tests
    (flow, roundtrip, uniqueness and diagnostics all read it)."""
    cfg = cfgmod.PRESETS["rank2_k01"]()
    domain, ph = cfgmod.build_problem(cfg)
    state = flowmod.MetricState.identity(domain, ph.r)
    state, _ = flowmod.normalize_trace(domain, ph, state)
    fs = flowmod.run_flow(domain, ph, state, tol=1e-6, t_max=400.0,
                          mode="imex")
    return cfg, domain, ph, fs

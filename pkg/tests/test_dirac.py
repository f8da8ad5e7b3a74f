import numpy as np
import pytest

from ebelab import dirac


def random_shell_points(rng, n=100, lo=0.1, hi=1.0):
    pts = []
    while len(pts) < n:
        y = rng.uniform(-1, 1)
        z = rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1)
        r = float(dirac.radius(y, z))
        # keep off the chart axis, where 1/|z|^2 cancellations amplify
        # roundoff in the closed forms
        if lo < r < hi and abs(z) > 0.02:
            pts.append((y, z))
    y = np.array([p[0] for p in pts])
    z = np.array([p[1] for p in pts])
    return y, z


def test_xi_k_values():
    assert np.abs(dirac.xi_k((0,), 0.3, 0.1 + 0j)).max() == 0
    got = dirac.xi_k((1,), 0.5, 0j)  # r = 0.5
    assert got[..., 0, 0] == pytest.approx(1j)
    got = dirac.xi_k((1, 2), 0.0, 2.0 + 0j)  # r = 2
    assert got[..., 0, 0] == pytest.approx(0.25j)
    assert got[..., 1, 1] == pytest.approx(0.5j)


def test_xi_k_at_singularity():
    with pytest.raises(dirac.AtSingularity):
        dirac.xi_k((1,), 0.0, 0j)


def test_type_must_increase():
    with pytest.raises(ValueError):
        dirac.xi_k((2, 1), 0.5, 0j)


def test_connection_smooth_on_chart_axis():
    # on the positive y-axis the plus-chart coefficients vanish with z
    c_dz, c_dzbar, c_dy = dirac.connection_coeffs((1,), 1.0, 1e-8 + 0j,
                                                  "plus")
    assert np.abs(c_dz).max() < 1e-8
    assert np.abs(c_dy).max() == 0
    with pytest.raises(dirac.OutsideChart):
        dirac.connection_coeffs((1,), -1.0, 0j, "plus")


def test_connection_equator_value():
    # k=1, y=0, |z|=1: dz-coefficient = -(1/4) zbar (chart plus)
    z = np.exp(0.7j)
    c_dz, _, _ = dirac.connection_coeffs((1,), 0.0, z, "plus")
    assert c_dz[..., 0] == pytest.approx(-0.25 * np.conj(z))


@pytest.mark.parametrize("k", [(0,), (1,), (2,), (1, 3)])
def test_bogomolny_residual(k, rng):
    y, z = random_shell_points(rng)
    for chart in ("plus", "minus"):
        res = dirac.bogomolny_residual(k, y, z, chart)
        assert np.max(res) < 1e-10


def test_fd_curl_oracle(rng):
    """Numerical exterior derivative of the coefficients reproduces *d xi."""
    k = (1,)
    h = 1e-5
    for _ in range(10):
        y0 = rng.uniform(0.1, 0.8)
        z0 = rng.uniform(0.2, 0.8) + 1j * rng.uniform(-0.8, -0.2)

        def A(y, z):
            c_dz, c_dzbar, _ = dirac.connection_coeffs(k, y, z, "plus")
            return ((c_dz + c_dzbar)[..., 0],
                    (1j * (c_dz - c_dzbar))[..., 0])

        A1p, A2p = A(y0, z0 + h)
        A1m, A2m = A(y0, z0 - h)
        A1q, A2q = A(y0, z0 + 1j * h)
        A1r, A2r = A(y0, z0 - 1j * h)
        A1u, A2u = A(y0 + h, z0)
        A1d, A2d = A(y0 - h, z0)
        F12 = (A2p - A2m) / (2 * h) - (A1q - A1r) / (2 * h)
        Fy1 = (A1u - A1d) / (2 * h)
        Fy2 = (A2u - A2d) / (2 * h)
        r = float(dirac.radius(y0, z0))
        x1, x2 = z0.real, z0.imag
        assert abs(F12 - 1j * (-y0 / (2 * r ** 3))) < 1e-8
        assert abs(Fy1 - 1j * (-x2 / (2 * r ** 3))) < 1e-8
        assert abs(Fy2 - 1j * (x1 / (2 * r ** 3))) < 1e-8


def test_holomorphic_gauge_values():
    assert dirac.holomorphic_gauge((0,), 0.3, 0.4 + 0j, "plus")[..., 0] \
        == pytest.approx(1.0)
    got = dirac.holomorphic_gauge((2,), 0.0, 1.0 + 0j, "plus")
    assert got[..., 0] == pytest.approx(1.0)
    got = dirac.holomorphic_gauge((2,), 0.0, 4.0 + 0j, "plus")
    assert got[..., 0] == pytest.approx(4.0)


def test_holomorphic_gauge_flattens_dy(rng):
    """grad_{A~,dy} + k/(2r) = d_y checked by finite differences: the
    gauged y-connection coefficient -(d_y u) u^{-1} equals +k/(2r)."""
    k = 2
    h = 1e-6
    for _ in range(5):
        y0 = rng.uniform(0.1, 0.6)
        z0 = rng.uniform(0.2, 0.7) + 1j * rng.uniform(0.1, 0.5)
        up = dirac.holomorphic_gauge((k,), y0 + h, z0, "plus")[..., 0]
        um = dirac.holomorphic_gauge((k,), y0 - h, z0, "plus")[..., 0]
        u0 = dirac.holomorphic_gauge((k,), y0, z0, "plus")[..., 0]
        coeff = (up - um) / (2 * h) / u0
        r = float(dirac.radius(y0, z0))
        # unitary-frame b = k/(2r); gauge shifts it by -(d_y u)/u to zero
        assert abs(coeff - k / (2 * r)) < 1e-7


def test_chart_transition_intertwines(rng):
    """A_+ = A_- - d log tau with tau = (z/|z|)^k, checked pointwise."""
    k = (2,)
    for _ in range(20):
        y0 = rng.uniform(-0.5, 0.5)
        z0 = rng.uniform(0.1, 1.0) * np.exp(2j * np.pi * rng.uniform())
        cp = dirac.connection_coeffs(k, y0, z0, "plus")
        cm = dirac.connection_coeffs(k, y0, z0, "minus")
        dlt_dz = 2 * 0.5 / z0
        dlt_dzb = -2 * 0.5 / np.conj(z0)
        assert abs(cp[0][..., 0] - (cm[0][..., 0] - dlt_dz)) < 1e-10
        assert abs(cp[1][..., 0] - (cm[1][..., 0] - dlt_dzb)) < 1e-10


def test_u_tau_u_is_z_to_k(rng):
    """(r+eps)^(k/2) (z/|z|)^k (r-eps)^(k/2) = z^k at r = sqrt(eps^2+|z|^2)."""
    for k in (1, 2, 3):
        for _ in range(10):
            eps = rng.uniform(0.05, 0.3)
            z = rng.uniform(0.1, 1.0) * np.exp(2j * np.pi * rng.uniform())
            r = np.sqrt(eps ** 2 + abs(z) ** 2)
            lhs = (r + eps) ** (k / 2) * (z / abs(z)) ** k \
                * (r - eps) ** (k / 2)
            assert abs(lhs - z ** k) < 1e-12 * max(1, abs(z) ** k)


def test_direct_sum_structure(rng):
    y, z = random_shell_points(rng, n=10)
    full = dirac.xi_k((1, 3), y, z)
    a = dirac.xi_k((1,), y, z)
    b = dirac.xi_k((3,), y, z)
    assert np.allclose(full[..., 0, 0], a[..., 0, 0])
    assert np.allclose(full[..., 1, 1], b[..., 0, 0])


def test_scattering_closed_form_is_z_to_k(rng):
    for k in (1, 2):
        z = rng.uniform(0.1, 0.5, 20) * np.exp(2j * np.pi * rng.uniform(size=20))
        sc = dirac.scattering_closed_form(k, z, -0.3, 0.3)
        assert np.abs(sc - z ** k).max() < 1e-12


def test_chi_partition_and_derivatives():
    t = np.linspace(-0.5, 2.5, 301)
    c = dirac.chi(t)
    assert (c[t <= 1.0] == 1.0).all()
    assert (c[t >= 2.0] == 0.0).all()
    assert ((c >= 0) & (c <= 1)).all()
    h = 1e-6
    fd = (dirac.chi(t + h) - dirac.chi(t - h)) / (2 * h)
    assert np.abs(fd - dirac.chi_p(t)).max() < 1e-6
    h2 = 1e-4
    fd2 = (dirac.chi(t + h2) - 2 * dirac.chi(t) + dirac.chi(t - h2)) / h2 ** 2
    assert np.abs(fd2 - dirac.chi_pp(t)).max() < 1e-3


def test_decay_check_manufactured(rng):
    """Slope fits on shells: model + r^0.5 damping -> alpha ~ 0.5;
    an O(1/r) perturbation is flagged by slope <= -1."""
    n = 4000
    y = rng.uniform(-1, 1, n)
    z = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    r = dirac.radius(y, z)
    valid = np.ones(n, dtype=bool)
    eps = 0.05
    diffs_zero = {"A": np.zeros(n)}
    rates = dirac.decay_check(r, diffs_zero, valid, eps, 0.8)
    assert rates["A"] == np.inf
    smooth = 1.0 + 0.1 * np.sin(3 * y)
    rates = dirac.decay_check(r, {"A": r ** 0.5 * smooth}, valid, eps, 0.8)
    assert abs(rates["A"] - 0.5) < 0.1
    # a perturbation decaying at least like 1/r is flagged (slope <= -1)
    rates = dirac.decay_check(r, {"A": smooth / r ** 1.15}, valid, eps, 0.8)
    assert rates["A"] <= -1.0


def test_insufficient_shells():
    with pytest.raises(dirac.InsufficientShells):
        dirac.shell_radii(0.4, 0.5)

import numpy as np
import pytest

from uvbounds.core import GridSpec, ModelParams, SolverConfig
from uvbounds.payoff import PayoffSpec, evaluate, load_tabulated_csv, regularize, terminal_surface

BF = PayoffSpec.butterfly(90, 100, 110)
PARAMS = ModelParams(x0=100, z0=0.04, T=0.25, r=0, d=0.75, u=1.25,
                     kappa=15, theta=0.04, delta=0.05, rho=-0.9)


def test_butterfly_peak_and_kinks():
    assert evaluate(BF, 100.0) == 10.0
    assert evaluate(BF, 90.0) == 0.0
    assert evaluate(BF, 110.0) == 0.0
    assert evaluate(BF, 50.0) == 0.0
    assert evaluate(BF, 170.0) == 0.0


def test_call_intrinsic():
    assert evaluate(PayoffSpec.call(100), 120.0) == 20.0
    assert evaluate(PayoffSpec.put(100), 80.0) == 20.0
    assert evaluate(PayoffSpec.capped_linear(100), 120.0) == 100.0
    assert evaluate(PayoffSpec.capped_linear(100), 70.0) == 70.0


def test_butterfly_bounded_and_symmetric():
    x = np.linspace(0, 250, 1001)
    h = evaluate(BF, x)
    assert np.all(h >= 0)
    assert np.all(h <= 10.0)  # bounded by k2 - k1
    for a in np.linspace(0, 30, 31):
        assert evaluate(BF, 100 + a) == pytest.approx(evaluate(BF, 100 - a), abs=1e-12)


@pytest.mark.parametrize("spec", [BF, PayoffSpec.call(80), PayoffSpec.put(120)])
@pytest.mark.parametrize("lam", [0.5, 2.0, 7.3])
def test_positive_homogeneity(spec, lam):
    scaled = PayoffSpec(spec.kind, tuple(lam * k for k in spec.strikes))
    for x in (30.0, 85.0, 101.0, 160.0):
        assert evaluate(scaled, lam * x) == pytest.approx(lam * evaluate(spec, x), rel=1e-12)


def test_terminal_surface_constant_in_z():
    grid = GridSpec(0, 200, 100, 0, 0.12, 100, 20)
    surf = terminal_surface(BF, grid)
    i100 = grid.ix_nearest(100.0)
    col = surf.values[i100, :]
    assert np.all(col == col[0])
    np.testing.assert_array_equal(surf.values, np.tile(surf.values[:, :1], (1, 100)))
    assert surf.time_index == grid.n_t


def test_terminal_surface_peak_column_on_aligned_grid():
    # with the middle strike on a node, that column is the peak value 10
    grid = GridSpec(0, 200, 101, 0, 0.12, 8, 20)
    surf = terminal_surface(BF, grid)
    assert grid.x_nodes()[50] == 100.0
    np.testing.assert_array_equal(surf.values[50, :], np.full(8, 10.0))


def test_terminal_surface_degenerate_single_slice():
    grid = GridSpec(0, 200, 50, 0.04, 0.04, 1, 4)
    surf = terminal_surface(BF, grid)
    np.testing.assert_array_equal(surf.values[:, 0], evaluate(BF, grid.x_nodes()))


def test_tabulated_copy_matches_analytic_on_nodes():
    grid = GridSpec(0, 200, 120, 0, 0.12, 5, 4)
    x = grid.x_nodes()
    tab = PayoffSpec.tabulated(x, evaluate(BF, x))
    a = terminal_surface(BF, grid)
    b = terminal_surface(tab, grid)
    np.testing.assert_array_equal(a.values, b.values)


def test_tabulated_interpolates_and_extrapolates_flat():
    tab = PayoffSpec.tabulated([1.0, 2.0, 4.0], [0.0, 2.0, 2.0])
    assert evaluate(tab, 1.5) == 1.0
    assert evaluate(tab, 0.0) == 0.0   # constant below range
    assert evaluate(tab, 9.0) == 2.0   # constant above range


def test_spec_validation():
    with pytest.raises(ValueError):
        PayoffSpec.butterfly(100, 90, 110)
    with pytest.raises(ValueError):
        PayoffSpec.call(-5)
    with pytest.raises(ValueError):
        PayoffSpec.tabulated([1, 1, 2], [0, 1, 2])  # not strictly increasing
    with pytest.raises(ValueError):
        PayoffSpec("weird")


def test_csv_loader_roundtrip(tmp_path):
    path = tmp_path / "payoff.csv"
    path.write_text("x,h\n1.0,0.0\n2.0,3.5\n3.0,1.0\n")
    spec = load_tabulated_csv(path)
    assert evaluate(spec, 2.0) == 3.5
    bad = tmp_path / "bad.csv"
    bad.write_text("x,h\n1.0,0.0\noops,1.0\n")
    with pytest.raises(ValueError):
        load_tabulated_csv(bad)


# -- regularization ------------------------------------------------------------

GRID = GridSpec(0, 200, 100, 0, 0.12, 5, 20)


def test_regularize_tiny_eps_recovers_payoff():
    reg = regularize(BF, PARAMS, eps=1e-9, grid=GRID, config=SolverConfig(rannacher_steps=0))
    x = GRID.x_nodes()
    assert np.max(np.abs(evaluate(reg, x) - evaluate(BF, x))) < 1e-5


def test_regularize_butterfly_lowers_peak():
    eps = GRID.dt(PARAMS.T)  # one solver step
    reg = regularize(BF, PARAMS, eps, GRID)
    assert np.max(evaluate(reg, GRID.x_nodes())) < 10.0


def test_regularize_call_dominates_raw_payoff():
    # sup over the band of a convex payoff is worth at least intrinsic value
    call = PayoffSpec.call(100)
    eps = GRID.dt(PARAMS.T)
    reg = regularize(call, PARAMS, eps, GRID)
    x = GRID.x_nodes()
    assert np.all(evaluate(reg, x) >= evaluate(call, x) - 1e-8 * 100)


def test_regularize_rejects_large_eps():
    with pytest.raises(ValueError):
        regularize(BF, PARAMS, eps=PARAMS.T / 2, grid=GRID)

import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from penalized_nsf.fields import (
    CsvSeries, Grid, SnapshotError, State, divergence, flux_divergence, gradient, read_snapshot, velocity_gradient,
    write_snapshot,
)


def test_grid_geometry():
    g = Grid.uniform(2, 16)
    assert g.shape == (16, 16) and g.h == 1 / 16 and g.cell_volume == 1 / 256
    assert g.axes()[0][0] == pytest.approx(1 / 32)
    assert g.centers().shape == (2, 16, 16)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(lower=(0.0,), upper=(1.0, 1.0), n=(16, 16)),
    dict(lower=(0.0,) * 4, upper=(1.0,) * 4, n=(8,) * 4),
    dict(lower=(0.0,), upper=(1.0,), n=(4,)),
    dict(lower=(1.0,), upper=(0.0,), n=(16,)),
    dict(lower=(0.0, 0.0), upper=(1.0, 2.0), n=(16, 16)),
])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


def test_contains():
    g = Grid.uniform(2, 8)
    mask = g.contains(np.array([[0.5, 1.0, 1.2], [0.5, 0.0, 0.5]]))
    assert mask.tolist() == [True, True, False]


def test_divergence_of_linear_field_vanishing_at_walls():
    # v = x(1-x) has divergence 1-2x
    g = Grid.uniform(1, 64)
    x = g.axes()[0]
    d = divergence(np.array([x * (1 - x)]), g)
    assert np.allclose(d[1:-1], 1 - 2 * x[1:-1], atol=1e-12)


def test_gradient_exact_on_linear_data():
    g = Grid.uniform(2, 16)
    X, Y = g.centers()
    G = gradient(3 * X - 2 * Y + 1, g)
    assert np.allclose(G[0], 3.0, atol=1e-12) and np.allclose(G[1], -2.0, atol=1e-12)


def test_gradient_second_order():
    errs = []
    for n in (32, 64, 128):
        g = Grid.uniform(2, n)
        X, Y = g.centers()
        G = gradient(np.sin(2 * X) * np.cos(Y), g)
        errs.append(np.max(np.abs(G[0] - 2 * np.cos(2 * X) * np.cos(Y))))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


def test_divergence_second_order():
    # field vanishes smoothly at the walls, so the no-slip ghosts are consistent
    errs = []
    for n in (32, 64, 128):
        g = Grid.uniform(2, n)
        sx, sy = np.sin(np.pi * g.centers())
        cx, cy = np.cos(np.pi * g.centers())
        b = sx**3 * sy**3
        exact = 3 * np.pi * (sx**2 * cx * sy**3 + sy**2 * cy * sx**3)
        errs.append(np.max(np.abs(divergence(np.stack([b, b]), g) - exact)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


def test_operators_annihilate_constants():
    g = Grid.uniform(2, 16)
    c = np.full(g.shape, 2.5)
    for bc in ("extrapolate", "neumann"):
        assert np.all(gradient(c, g, bc=bc) == 0)


def test_velocity_gradient_layout():
    g = Grid.uniform(2, 32)
    X, Y = g.centers()
    u = np.stack([np.sin(np.pi * X) * np.sin(np.pi * Y), np.zeros(g.shape)])
    G = velocity_gradient(u, g)
    inner = (slice(4, -4), slice(4, -4))
    ref = np.pi * np.sin(np.pi * X) * np.cos(np.pi * Y)
    assert np.max(np.abs(G[0, 1][inner] - ref[inner])) < 0.02
    assert np.all(G[1] == 0)


@given(hnp.arrays(float, st.integers(9, 40), elements=st.floats(-1e3, 1e3)))
def test_flux_divergence_telescopes(faces):
    # wall fluxes are zero so the total vanishes
    d = flux_divergence(faces, 0, 0.1)
    assert d.shape == (faces.size + 1,)
    assert abs(np.sum(d) * 0.1) <= 1e-9 * (1 + np.max(np.abs(faces)))


def sample_state(grid, t=0.25):
    rng = np.random.default_rng(1)
    return State(rng.random(grid.shape) + 0.1, rng.standard_normal((grid.dim, *grid.shape)),
                 rng.random(grid.shape) + 1.0, t)


def test_snapshot_roundtrip_is_bitwise(tmp_path):
    g = Grid((0.0, -1.0), (2.0, 1.0), (16, 16))
    s = sample_state(g, t=0.1 + 0.2)
    p = write_snapshot(s, g, tmp_path / "s.dat")
    back, g2 = read_snapshot(p)
    assert g2 == g and back.t == s.t
    for a, b in zip(s.fields().values(), back.fields().values()):
        assert a.tobytes() == b.tobytes()


def test_snapshot_truncated(tmp_path):
    g = Grid.uniform(1, 16)
    p = write_snapshot(sample_state(g), g, tmp_path / "s.dat")
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(SnapshotError, match="shape mismatch"):
        read_snapshot(p)


def test_snapshot_nonfinite(tmp_path):
    g = Grid.uniform(1, 16)
    s = sample_state(g)
    s.rhoe[3] = np.nan
    p = write_snapshot(s, g, tmp_path / "s.dat")
    with pytest.raises(SnapshotError, match=r"rhoe at cell \(3,\)"):
        read_snapshot(p)


def test_snapshot_bad_magic(tmp_path):
    p = tmp_path / "x.dat"
    p.write_bytes(b"hello\nend\n")
    with pytest.raises(SnapshotError):
        read_snapshot(p)


def test_csv_series_column_order(tmp_path):
    s = CsvSeries(("t", "mass"))
    s.append({"mass": 1.0, "t": 0.1, "extra": 3})
    with pytest.raises(KeyError):
        s.append({"t": 0.2})
    rows = list(csv.reader(open(s.write(tmp_path / "a.csv"))))
    assert rows == [["t", "mass"], ["0.1", "1.0"]]

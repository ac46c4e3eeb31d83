import numpy as np
import pytest

from henonlab import core, slices
from henonlab.errors import NonHorizontalError


def make_grid(cells, rho=1.0, budget=10):
    cells = np.asarray(cells, dtype=np.uint8)
    V = slices.horizontal_line(0.0, rho)
    return slices.SliceGrid(resolution=cells.shape[0], cells=cells, budget=budget,
                            transversal=V, side="forward")


def test_rasterize_disk_fixture(fixtures):
    f, geom = fixtures["disk"]
    V = slices.horizontal_line(0.0, geom.R)
    grid = slices.rasterize_slice(f, geom, V, 128, 60)
    inside_frac = float(np.mean(grid.cells == core.INSIDE))
    assert inside_frac > 0.02
    rep = slices.label_components(grid)
    assert rep.count_lower == rep.count_upper == 1


def test_rasterize_refinement_coherence(fixtures):
    """Inside cells at double resolution sit in non-escaped coarse cells."""
    f, geom = fixtures["basilica"]
    V = slices.horizontal_line(0.0, geom.R)
    coarse = slices.rasterize_slice(f, geom, V, 64, 30)
    fine = slices.rasterize_slice(f, geom, V, 128, 30)
    fi, fj = np.nonzero(fine.cells == core.INSIDE)
    ci, cj = fi // 2, fj // 2
    assert (coarse.cells[ci, cj] != core.ESCAPED).all()


def test_rasterize_escaped_transversal(fixtures):
    f, geom = fixtures["disk"]
    V = slices.Transversal(x0=(10.0 * geom.R, 0.0), v=(1.0, 0.0), rho=1.0)
    grid = slices.rasterize_slice(f, geom, V, 32, 10)
    assert (grid.cells == core.ESCAPED).all()


def test_rasterize_rejects_coarse_grid(fixtures):
    f, geom = fixtures["disk"]
    with pytest.raises(ValueError):
        slices.rasterize_slice(f, geom, slices.horizontal_line(0.0, geom.R), 8, 10)


def test_label_all_inside():
    rep = slices.label_components(make_grid(np.zeros((32, 32))))
    assert rep.count_lower == rep.count_upper == 1
    assert rep.components[0][2] <= 2.0  # diameter bounded by the disk diameter


def test_label_two_pixels():
    cells = np.full((32, 32), core.ESCAPED, dtype=np.uint8)
    cells[10, 10] = core.INSIDE
    cells[20, 20] = core.INSIDE
    rep = slices.label_components(make_grid(cells))
    assert rep.count_lower == 2
    assert rep.count_upper == 2


def test_label_checkerboard_wildcards():
    cells = np.full((16, 16), core.UNRESOLVED, dtype=np.uint8)
    cells[::2, ::2] = core.INSIDE
    rep = slices.label_components(make_grid(cells))
    assert rep.count_lower == 1
    inside_in_disk = int(rep.count_upper)
    # unresolved as escaped isolates every inside cell inside the disk
    centers = make_grid(cells).cell_centers()
    expect = int(np.sum((cells == core.INSIDE) & (np.abs(centers) <= 1.0)))
    assert inside_in_disk == expect


def test_connectivity_verdicts(fixtures):
    f, geom = fixtures["disk"]
    V = slices.horizontal_line(0.0, geom.R)
    schedule = [(96, 2), (192, 3), (384, 4), (384, 8)]
    rep = slices.connectivity_verdict(f, geom, V, "forward", schedule)
    assert rep.verdict == "connected"

    fh, gh = fixtures["horseshoe"]
    Vh = slices.horizontal_line(0.0, gh.R)
    reph = slices.connectivity_verdict(fh, gh, Vh, "forward", schedule)
    assert reph.verdict == "disconnected"

    single = slices.connectivity_verdict(f, geom, V, "forward", [(96, 2)])
    assert single.verdict == "unresolved"


def test_connectivity_requires_schedule(fixtures):
    f, geom = fixtures["disk"]
    with pytest.raises(ValueError):
        slices.connectivity_verdict(f, geom, slices.horizontal_line(0.0, geom.R),
                                    "forward", [])


def test_winding_counts_roots():
    # (t - 0.3)(t + 0.5i) t has three zeros in the unit disk
    def fn(t):
        return (t - 0.3) * (t + 0.5j) * t

    n = slices.certified_winding(lambda m: fn(np.exp(2j * np.pi * np.arange(m) / m)))
    assert n == 3


def test_horizontal_degree(fixtures):
    f, geom = fixtures["disk"]
    V = slices.horizontal_line(0.0, geom.R * 1.05)
    assert slices.horizontal_degree(f, geom, V, 0) == 1
    assert slices.horizontal_degree(f, geom, V, 1) == 2
    assert slices.horizontal_degree(f, geom, V, 2) == 4


def test_degree_multiplicativity(fixtures):
    f, geom = fixtures["basilica"]
    V = slices.horizontal_line(0.0, geom.R * 1.05)
    for n in range(5):
        assert slices.horizontal_degree(f, geom, V, n) == f.degree ** n


def test_tangency_counts(fixtures):
    f, geom = fixtures["disk"]
    V = slices.horizontal_line(0.0, geom.R * 1.02)
    assert slices.tangency_count(f, geom, V, 1) == 1
    assert slices.tangency_count(f, geom, V, 2) == 3

    fh, gh = fixtures["horseshoe"]
    Vh = slices.horizontal_line(0.0, gh.R * 1.02)
    assert slices.tangency_count(fh, gh, Vh, 1) == 0
    # closed-form check: the unique tangency parameter is t = 0 and its
    # image (c + a w0, 0) sits far outside the bidisk
    assert abs(-10.0 + 0.1 * 0.0) > gh.R


def test_rh_consistency(fixtures):
    f, geom = fixtures["disk"]
    V = slices.horizontal_line(0.0, geom.R * 1.02)
    for n in (1, 2, 3):
        rep = slices.rh_consistency(f, geom, V, n, raster_n=256)
        assert rep.degree == 2 ** n
        assert rep.component_count == 1
        assert rep.tangencies_inside == 2 ** n - 1
        assert rep.consistent is True

    fh, gh = fixtures["horseshoe"]
    Vh = slices.horizontal_line(0.0, gh.R * 1.02)
    rep = slices.rh_consistency(fh, gh, Vh, 1, raster_n=256)
    assert rep.degree == 2 and rep.component_count == 2
    assert rep.tangencies_inside == 0
    assert rep.consistent is True


def test_non_horizontal_error(fixtures):
    f, geom = fixtures["disk"]
    V = slices.horizontal_line(0.0, 0.3)   # boundary well inside the bounded set
    with pytest.raises(NonHorizontalError):
        slices.horizontal_degree(f, geom, V, 1)


def test_tangency_escape(fixtures):
    f, geom = fixtures["disk"]
    V = slices.horizontal_line(0.0, geom.R * 1.02)
    res = slices.tangency_escape_test(f, geom, V, 6)
    assert res.status == "all_confined"

    fh, gh = fixtures["horseshoe"]
    Vh = slices.horizontal_line(0.0, gh.R * 1.02)
    resh = slices.tangency_escape_test(fh, gh, Vh, 3)
    assert resh.status == "some_escape"
    assert resh.witness["n"] == 1

    vac = slices.tangency_escape_test(f, geom, V, 0)
    assert vac.status == "all_confined"
    assert vac.checked == ()


def test_verdict_agreement(fixtures):
    """Slice components and tangency tracking never contradict."""
    schedule = [(96, 2), (192, 3), (384, 4)]
    for name in ("basilica", "horseshoe3"):
        f, geom = fixtures[name]
        V = slices.horizontal_line(0.0, geom.R)
        Vt = slices.horizontal_line(0.0, geom.R * 1.02)
        cv = slices.connectivity_verdict(f, geom, V, "forward", schedule).verdict
        te = slices.tangency_escape_test(f, geom, Vt, 3).status
        if cv == "connected":
            assert te != "some_escape"
        if cv == "disconnected":
            assert te != "all_confined"

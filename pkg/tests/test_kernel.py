import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import simpson

from schwarz_coupler.errors import ConfigurationError
from schwarz_coupler.geometry import Interval
from schwarz_coupler.kernel import (
    KernelSpec,
    complement_moment,
    eval_kernel,
    kernel_mass,
    load_table_csv,
    region_moment,
    validate_kernel,
)

HAT = KernelSpec.hat(0.5)
BOX = KernelSpec.box(0.3)
TABLE = KernelSpec.table([-0.4, -0.1, 0.0, 0.2, 0.4], [0.0, 1.5, 2.0, 1.0, 0.0])


@pytest.mark.parametrize("z, want", [(0.0, 2.0), (0.5, 0.0), (-0.25, 1.0), (0.7, 0.0)])
def test_hat_values(z, want):
    assert eval_kernel(HAT, z) == pytest.approx(want, abs=1e-15)


def test_box_values():
    assert eval_kernel(BOX, 0.1) == pytest.approx(1 / 0.6)
    assert eval_kernel(BOX, -0.3) == pytest.approx(1 / 0.6)
    assert eval_kernel(BOX, 0.30001) == 0.0


def test_symmetry_is_exact():
    z = np.linspace(-1, 1, 2001)
    for k in (HAT, BOX, TABLE):
        assert np.array_equal(eval_kernel(k, z), eval_kernel(k, -z))


@pytest.mark.parametrize(
    "kernel, want",
    [(KernelSpec.hat(0.5), 1.0), (KernelSpec.box(0.7), 1.0), (KernelSpec.hat(0.3, 2.0), 2.0), (KernelSpec.box(0.2, 3.0), 3.0)],
)
def test_kernel_mass(kernel, want):
    assert kernel_mass(kernel) == pytest.approx(want, rel=1e-15)


def test_region_moment_examples():
    assert region_moment(HAT, 0.0, [Interval(-1, 0)]) == pytest.approx(0.5, abs=1e-15)
    assert region_moment(HAT, 0.6, [(-1, 0)]) == 0.0
    assert complement_moment(HAT, -0.1, [(-1, 0)]) == pytest.approx(0.32, abs=1e-15)
    assert complement_moment(HAT, -0.5, [(-1, 0)]) == pytest.approx(0.0, abs=1e-15)
    assert complement_moment(BOX, -0.15, [(-1, 0)]) == pytest.approx(0.25, abs=1e-15)


def test_region_moment_vectorized_and_bounded():
    x = np.linspace(-2, 2, 401)
    m = region_moment(HAT, x, [(-1, 0), (0.3, 0.8)])
    assert m.shape == x.shape
    assert np.all(m >= 0) and np.all(m <= kernel_mass(HAT) + 1e-15)


def _random_region(draw_pts):
    pts = np.sort(np.asarray(draw_pts))
    return [(pts[i], pts[i + 1]) for i in range(0, len(pts) - 1, 2) if pts[i + 1] > pts[i]]


coords = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(x=coords, a=coords, b=coords, c=coords)
def test_moment_additivity(x, a, b, c):
    lo, mid, hi = sorted([a, b, c])
    for k in (HAT, BOX, TABLE):
        whole = region_moment(k, x, [(lo, hi)])
        parts = region_moment(k, x, [(lo, mid)]) + region_moment(k, x, [(mid, hi)])
        assert abs(whole - parts) <= 1e-13 * max(whole, 1e-300) + 1e-16


@settings(max_examples=100, deadline=None)
@given(x=coords, a=coords, b=coords)
def test_moment_partition_of_unity(x, a, b):
    lo, hi = sorted([a, b])
    for k in (HAT, BOX, TABLE):
        inside = region_moment(k, x, [(lo, hi)])
        outside = region_moment(k, x, [(-np.inf, lo), (hi, np.inf)])
        assert inside + outside == pytest.approx(kernel_mass(k), rel=1e-13)
        assert complement_moment(k, x, [(lo, hi)]) == pytest.approx(outside, abs=1e-13)


def _simpson_moment(kernel, x, region, panels=100_000):
    # substitute z = x - y; 1e5 panels in total, laid out so that no panel
    # straddles a kernel kink
    kinks = kernel.kinks
    pieces = []
    for lo, hi in region:
        za, zb = max(x - hi, kinks[0]), min(x - lo, kinks[-1])
        if zb <= za:
            continue
        cuts = np.unique(np.concatenate([[za, zb], kinks[(kinks > za) & (kinks < zb)]]))
        pieces += list(zip(cuts[:-1], cuts[1:]))
    span = sum(b - a for a, b in pieces)
    total = 0.0
    for a, b in pieces:
        n = max(2, 2 * int(round(0.5 * panels * (b - a) / span)))
        z = np.linspace(a, b, n + 1)
        total += simpson(eval_kernel(kernel, z), x=z)
    return total


def test_moment_matches_simpson():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-1.5, 1.5)
        pts = np.sort(rng.uniform(-2, 2, 4))
        region = [(pts[0], pts[1]), (pts[2], pts[3])]
        for k in (HAT, BOX, TABLE):
            exact = region_moment(k, x, region)
            brute = _simpson_moment(k, x, region)
            if exact > 1e-8:
                worst = max(worst, abs(exact - brute) / exact)
    assert worst < 1e-10


def test_validate_hat():
    rep = validate_kernel(HAT)
    assert rep.ok and rep.symmetric and rep.nonnegative
    assert rep.visibility_radius == pytest.approx(0.5)
    assert rep.delta == pytest.approx(0.25)
    assert rep.lower_bound == pytest.approx(eval_kernel(HAT, 0.5 * (1 - 1e-9)))
    assert 0 < rep.lower_bound < 1e-7


def test_validate_box():
    rep = validate_kernel(BOX)
    assert rep.delta == pytest.approx(0.15)
    assert rep.lower_bound == pytest.approx(1 / 0.6)


def test_validate_rejects_small_sample_count():
    with pytest.raises(ValueError):
        validate_kernel(HAT, samples=10)


def test_negative_table_rejected():
    with pytest.raises(ConfigurationError, match="negative"):
        KernelSpec.table([-0.2, 0.0, 0.1, 0.2], [0.0, 1.0, -1.0, 0.0])


def test_asymmetric_table_flagged_but_symmetrized():
    k = KernelSpec.table([-0.2, 0.0, 0.4], [1.0, 2.0, 0.0])
    z = np.linspace(-0.5, 0.5, 101)
    assert np.array_equal(k(z), k(-z))
    with pytest.raises(ConfigurationError, match="symmetric"):
        validate_kernel(k)
    rep = validate_kernel(k, strict=False)
    assert not rep.symmetric and not rep.ok


def test_table_symmetrization_averages():
    k = KernelSpec.table([-0.2, 0.0, 0.4], [1.0, 2.0, 0.0])
    # J(0.1) = 0.5 * (interp(0.1) + interp(-0.1)) = 0.5 * (1.5 + 1.5)
    assert k(0.1) == pytest.approx(1.5)
    # beyond |z| = 0.2 only the positive branch contributes
    assert k(0.3) == pytest.approx(0.25)
    assert k.support_radius == pytest.approx(0.4)


def test_table_reproduces_hat():
    t = KernelSpec.table([-0.5, 0.0, 0.5], [0.0, 2.0, 0.0])
    x = np.linspace(-1, 1, 77)
    assert np.allclose(t(x), HAT(x), atol=1e-15)
    assert np.allclose(region_moment(t, x, [(-1, 0)]), region_moment(HAT, x, [(-1, 0)]), atol=1e-15)


def test_load_table_csv(tmp_path):
    p = tmp_path / "k.csv"
    p.write_text("z,J\n-0.3,0\n0,1\n0.3,0\n0.5,0\n")
    k = load_table_csv(p)
    assert k.support_radius == pytest.approx(0.3)
    assert validate_kernel(k).ok
    bad = tmp_path / "bad.csv"
    bad.write_text("z,J\n0,abc\n")
    with pytest.raises(ConfigurationError):
        load_table_csv(bad)


@pytest.mark.parametrize("d", [0.0, -1.0, float("nan")])
def test_bad_support(d):
    with pytest.raises(ConfigurationError):
        KernelSpec.hat(d)

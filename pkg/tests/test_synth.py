import numpy as np
import pytest
from scipy import stats

from ortsmooth.lattice import LatticeField
from ortsmooth.synth import (
    TETRAHEDRON_VERTICES,
    TRIANGLE_VERTICES,
    NoiseModel,
    PiecewiseSpec,
    add_noise,
    format_spec,
    overlapping_points,
    parse_spec,
    region_labels,
    render,
    tetrahedron_spec,
    triangle_spec,
    two_region_spec,
)

from .oracles import in_simplex


def test_triangle_examples():
    spec = triangle_spec()
    assert spec.evaluate([[0.5, 0.4]])[0] == 1.0
    assert spec.evaluate([[0.05, 0.05]])[0] == 0.0
    # vertices lie on the closed boundary
    np.testing.assert_array_equal(spec.evaluate(np.array(TRIANGLE_VERTICES)), [1.0, 1.0, 1.0])


def test_empty_spec_is_constant():
    f = render(PiecewiseSpec([], [], background_jump=0.7), (5, 6))
    np.testing.assert_array_equal(f.values, np.full(30, 0.7))


def test_tetrahedron_examples():
    spec = tetrahedron_spec()
    base = np.array(TETRAHEDRON_VERTICES[:3])
    lifted = base.mean(axis=0) + [0.0, 0.0, 0.1]
    assert spec.evaluate([lifted])[0] == 1.0
    assert spec.evaluate([[0.0, 0.0, 0.0]])[0] == 0.0
    rng = np.random.default_rng(0)
    high = rng.random((1000, 3))
    high[:, 2] = 0.8 + 0.2 * high[:, 2] + 1e-9
    assert np.all(spec.evaluate(high) == 0.0)
    assert len(spec.regions[0]) == 4


@pytest.mark.parametrize("vertices, make", [(TRIANGLE_VERTICES, triangle_spec),
                                            (TETRAHEDRON_VERTICES, tetrahedron_spec)])
def test_membership_matches_barycentric_oracle(vertices, make):
    spec = make()
    pts = np.random.default_rng(1).random((10_000, len(vertices) - 1))
    np.testing.assert_array_equal(spec.region_of(pts) == 0, in_simplex(vertices, pts))


def test_first_region_wins_on_shared_boundary():
    half = [(np.array([1.0, 0.0]), 0.5)]
    other = [(np.array([-1.0, 0.0]), -0.5)]
    spec = PiecewiseSpec([half, other], [1.0, 2.0])
    assert spec.evaluate([[0.5, 0.3]])[0] == 1.0
    assert spec.evaluate([[0.6, 0.3]])[0] == 2.0
    assert overlapping_points(spec) == 0


def test_overlap_detection():
    a = [(np.array([1.0, 0.0]), 0.6)]
    b = [(np.array([-1.0, 0.0]), -0.4)]
    assert overlapping_points(PiecewiseSpec([a, b], [1.0, 2.0])) > 0
    assert overlapping_points(triangle_spec()) == 0


def test_two_region_spec_and_labels():
    spec = two_region_spec()
    f = render(spec, (8, 8))
    labels = region_labels(spec, (8, 8))
    coords = f.coords()
    inside = coords @ np.array([1.0, 2.0]) <= 1.3 + 1e-12
    np.testing.assert_array_equal(labels == 0, inside)
    np.testing.assert_array_equal(f.values, inside.astype(float))


def test_base_functions():
    lin = PiecewiseSpec([], [], base=("linear", (0.1, 1.0, -2.0)))
    np.testing.assert_allclose(lin.evaluate([[0.5, 0.25]]), [0.1 + 0.5 - 0.5])
    quad = PiecewiseSpec([], [], base=("quadratic", (0.0, 0.0, 0.0, 1.0, 2.0)))
    np.testing.assert_allclose(quad.evaluate([[0.5, 0.5]]), [0.25 + 0.5])
    with pytest.raises(ValueError):
        PiecewiseSpec([], [], base=("cubic", ()))
    with pytest.raises(ValueError):
        lin.evaluate([[0.5, 0.5, 0.5]])


def test_noise_examples():
    zero = LatticeField((256, 256), np.zeros(256 * 256))
    assert add_noise(zero, NoiseModel(0.0, 3)) is zero
    noisy = add_noise(zero, NoiseModel(0.2, 3))
    assert abs(noisy.values.mean()) <= 0.005
    assert 0.195 <= noisy.values.std() <= 0.205
    again = add_noise(zero, NoiseModel(0.2, 3))
    assert np.array_equal(noisy.values, again.values)
    assert not np.array_equal(noisy.values, add_noise(zero, NoiseModel(0.2, 4)).values)
    with pytest.raises(ValueError):
        NoiseModel(-0.1)


def test_noise_is_gaussian_ks():
    base = LatticeField((100_000,), np.zeros(100_000))
    draws = add_noise(base, NoiseModel(0.3, 12)).values
    assert stats.kstest(draws, "norm", args=(0.0, 0.3)).pvalue > 1e-4


def test_render_is_deterministic():
    a = render(triangle_spec(), (30, 30))
    b = render(triangle_spec(), (30, 30))
    assert np.array_equal(a.values, b.values)


def test_spec_text_round_trip():
    spec = PiecewiseSpec(
        [triangle_spec().regions[0], [(np.array([1.0, 0.0]), 0.1)]],
        [1.0, -0.5],
        base=("linear", (0.2, 0.1, 0.0)),
        background_jump=0.05,
    )
    back = parse_spec(format_spec(spec))
    pts = np.random.default_rng(2).random((500, 2))
    np.testing.assert_array_equal(back.evaluate(pts), spec.evaluate(pts))
    assert back.base == spec.base and back.jumps == spec.jumps


def test_spec_parse_with_comments():
    text = """
    # unit square corner
    base zero
    background 0.0
    region 1.0   # first
    -1 0 -0.5
    end
    """
    spec = parse_spec(text)
    assert spec.evaluate([[0.7, 0.1]])[0] == 1.0
    assert spec.evaluate([[0.2, 0.1]])[0] == 0.0


@pytest.mark.parametrize("text", [
    "region 1.0\n1 0 0.5\n",          # no end
    "bogus 3\n",
    "region 1.0\nend\n",               # empty region
    "region 1\n1 0 0.5\nend\nregion 1\n1 0 0 0.5\nend\n",  # mixed dimensions
    "region 1\n0.5\nend\n",
])
def test_spec_parse_errors(text):
    with pytest.raises(ValueError):
        parse_spec(text)

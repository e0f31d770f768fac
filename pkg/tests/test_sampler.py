import math

import numpy as np
import pytest

from multiindex_qmc.errors import ConfigurationError
from multiindex_qmc.sampler import (BLOCK, LatticeRule, ShiftSet, StreamKey, korobov_search,
                                    lattice_points, load_lattice_file, mc_points, product_weights,
                                    shift_statistics, shifted_points, worst_case_error2)


def test_stream_reproducible_and_keyed():
    k = StreamKey(5, "run", (2, 1))
    np.testing.assert_array_equal(mc_points(3, 100, k), mc_points(3, 100, k))
    assert not np.array_equal(mc_points(3, 10, k), mc_points(3, 10, StreamKey(5, "run", (1, 2))))
    assert not np.array_equal(mc_points(3, 10, k), mc_points(3, 10, StreamKey(5, "screen", (2, 1))))


def test_stream_is_independent_of_chunking():
    k = StreamKey(1, "run", (3,))
    whole = mc_points(2, BLOCK + 50, k)
    parts = np.concatenate([mc_points(2, 7, k), mc_points(2, BLOCK + 43, k, start=7)])
    np.testing.assert_array_equal(whole, parts)


def test_empty_and_range():
    assert mc_points(4, 0, StreamKey(0, "x")).shape == (0, 4)
    pts = mc_points(4, 100_000, StreamKey(0, "x"))
    assert pts.min() >= -0.5 and pts.max() < 0.5
    assert np.all(np.abs(pts.mean(axis=0)) <= 0.01)


def test_lattice_points_formula():
    rule = LatticeRule(2, 4, (1, 3), "file")
    pts = lattice_points(rule, [0.0, 0.0])
    np.testing.assert_allclose(pts, [[-0.25, 0.25], [0.0, 0.0], [0.25, -0.25], [-0.5, -0.5]])


def test_lattice_validation():
    with pytest.raises(ConfigurationError):
        LatticeRule(2, 8, (1, 4))
    with pytest.raises(ConfigurationError):
        LatticeRule(1, 8, (9,))


def test_constants_integrated_exactly():
    rule = korobov_search(3, 64)
    pts = lattice_points(rule, [0.3, 0.1, 0.7])
    assert np.full(len(pts), 2.5).mean() == 2.5


def test_coordinates_are_shifted_regular_grids():
    rule = korobov_search(4, 128)
    pts = lattice_points(rule, [0.11, 0.52, 0.93, 0.27])
    for j in range(4):
        col = np.sort(pts[:, j] + 0.5)
        offsets = col * 128 - np.arange(128)
        assert np.ptp(offsets) < 1e-9


def test_product_integrand_unbiased_within_three_se():
    rule = korobov_search(2, 2**10)
    shifts = ShiftSet.draw(StreamKey(0, "t"), 32, 2).shifts
    Q = [np.prod(0.5 + lattice_points(rule, sh) ** 2, axis=1).mean() for sh in shifts]
    mean, vom = shift_statistics(Q)
    assert abs(mean - (0.5 + 1 / 12) ** 2) <= 3 * math.sqrt(vom)


def test_shift_statistics():
    assert shift_statistics([1, 2, 3]) == pytest.approx((2.0, 1 / 3))
    assert shift_statistics([4.0] * 5)[1] == 0.0
    with pytest.raises(ValueError):
        shift_statistics([1.0])
    q = np.random.default_rng(0).standard_normal(10_000)
    assert shift_statistics(q)[1] == pytest.approx(1e-4, rel=0.1)


def wce2_bruteforce(z, N, gamma):
    # independent oracle: sum over k of prod_j (1 + gamma_j B2(frac(k z_j / N))) with B2 written out
    total = 0.0
    for k in range(N):
        prod = 1.0
        for zj, gj in zip(z, gamma):
            x = (k * zj % N) / N
            prod *= 1.0 + gj * (x * x - x + 1.0 / 6.0)
        total += prod
    return total / N - 1.0


def test_worst_case_error_matches_loop_oracle():
    g = product_weights(3)
    for z in [(1, 5, 25), (1, 3, 9), (1, 1, 1)]:
        assert worst_case_error2(z, 64, g) == pytest.approx(wce2_bruteforce(z, 64, g), rel=1e-12)
        assert worst_case_error2(z, 64, g) > 0


def test_korobov_examples():
    assert korobov_search(5, 2).z == (1,) * 5
    assert korobov_search(1, 64).z == (1,)
    rule = korobov_search(4, 2**8)
    g = product_weights(4)
    assert rule.exhaustive
    assert rule.criterion <= worst_case_error2((1, 1, 1, 1), 256, g)
    # exhaustive comparison within the search set
    best = min(wce2_bruteforce([pow(a, j, 256) for j in range(4)], 256, g)
               for a in range(1, 256, 2))
    assert rule.criterion == pytest.approx(best, rel=1e-10)


def test_korobov_cap_sets_flag():
    rule = korobov_search(3, 2**12, search_cap=64)
    assert not rule.exhaustive
    with pytest.raises(ConfigurationError):
        korobov_search(3, 100)


def test_lattice_file(tmp_path):
    p = tmp_path / "z.txt"
    p.write_text("# vector\nn_max=1024\n1\n433\n\n  3 229  \n")
    rule = load_lattice_file(p, 3, 1024)
    assert rule.z == (1, 433, 229) and rule.source == "file"
    with pytest.raises(ConfigurationError):
        load_lattice_file(p, 3, 2048)
    with pytest.raises(ConfigurationError):
        load_lattice_file(p, 4, 1024)
    with pytest.raises(ConfigurationError):
        load_lattice_file(tmp_path / "missing.txt", 3, 1024)


def test_embedded_rules_share_points():
    rule = korobov_search(3, 256)
    small = rule.restricted(64)
    big = {tuple(np.round(p, 12)) for p in lattice_points(rule, [0.2, 0.4, 0.6])}
    for p in lattice_points(small, [0.2, 0.4, 0.6]):
        assert tuple(np.round(p, 12)) in big


def test_shifted_points_shape():
    rule = korobov_search(2, 16)
    assert shifted_points(rule, np.zeros((3, 2))).shape == (3, 16, 2)

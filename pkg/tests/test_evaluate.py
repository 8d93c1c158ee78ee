import numpy as np
import pytest
from _oracles import naive_energy
from hypothesis import given, settings
from hypothesis import strategies as st

from missflow.dataset import DataError, Standardizer
from missflow.evaluate import energy_distance, quantile, standardized_energy


# ------------------------------------------------------------------- energy


def test_energy_identical_samples_is_zero():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 3))
    assert abs(energy_distance(x, x.copy())) <= 1e-12


def test_energy_two_point_masses():
    # point masses at 0 and 1 in one dimension: 2*1 - 0 - 0 = 2
    x = np.array([[0.0], [0.0]])
    y = np.array([[1.0], [1.0]])
    assert energy_distance(x, y) == pytest.approx(2.0, abs=1e-15)


def test_energy_matches_naive_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal((30, 3))
        y = rng.standard_normal((25, 3)) + 0.3
        assert energy_distance(x, y) == pytest.approx(naive_energy(x.tolist(), y.tolist()), abs=1e-10)


def test_energy_symmetry_is_exact():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.standard_normal((int(rng.integers(2, 30)), 2))
        y = rng.standard_normal((int(rng.integers(2, 30)), 2))
        assert energy_distance(x, y) == energy_distance(y, x)


def test_energy_row_permutation_stable():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((50, 3))
    y = rng.standard_normal((60, 3))
    base = energy_distance(x, y)
    shuffled = energy_distance(x[rng.permutation(50)], y[rng.permutation(60)])
    assert abs(base - shuffled) <= 1e-12


def test_energy_vstat_nonnegative_on_random_pairs():
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.standard_normal((int(rng.integers(2, 20)), 2))
        y = rng.standard_normal((int(rng.integers(2, 20)), 2)) * rng.uniform(0.5, 2)
        assert energy_distance(x, y) >= -1e-10


def test_energy_unbiased_variant_can_be_negative():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((20, 2))
    # identical samples: the U-statistic over-subtracts the within term
    assert energy_distance(x, x.copy(), unbiased=True) < 0


def test_energy_rejects_dimension_mismatch():
    with pytest.raises(ValueError, match="column mismatch"):
        energy_distance(np.zeros((3, 2)), np.zeros((3, 3)))


# ------------------------------------------------------------- standardized


def test_standardized_energy_identical_is_zero():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((30, 3))
    report = standardized_energy(x, x.copy())
    assert abs(report.e2) <= 1e-12
    assert report.standardizer_source == "heldout"
    assert report.n_x == report.n_y == 30


def test_standardized_energy_absorbs_column_scale():
    rng = np.random.default_rng(7)
    gen = rng.standard_normal((40, 3))
    held = rng.standard_normal((50, 3))
    base = standardized_energy(gen, held).e2
    scale = np.array([1000.0, 1.0, 1.0])
    rescaled = standardized_energy(gen * scale, held * scale).e2
    assert rescaled == pytest.approx(base, abs=1e-10)


def test_standardized_energy_separates_shifted_samples():
    rng = np.random.default_rng(8)
    larger = 0
    for _ in range(20):
        held = rng.standard_normal((80, 2))
        gen = rng.standard_normal((80, 2))
        shifted = gen + np.array([held[:, 0].std(ddof=1), 0.0])
        if standardized_energy(shifted, held).e2 > standardized_energy(gen, held).e2:
            larger += 1
    assert larger == 20


def test_standardized_energy_rejects_flat_heldout_column():
    gen = np.random.default_rng(9).standard_normal((10, 2))
    held = np.column_stack([np.ones(10), np.arange(10.0)])
    with pytest.raises(DataError, match="zero-variance"):
        standardized_energy(gen, held)


def test_standardized_energy_external_standardizer():
    rng = np.random.default_rng(10)
    gen = rng.standard_normal((20, 2))
    held = rng.standard_normal((20, 2))
    s = Standardizer(np.zeros(2), np.ones(2))
    report = standardized_energy(gen, held, standardizer=s)
    assert report.standardizer_source == "external"
    assert report.e2 == pytest.approx(energy_distance(gen, held), abs=1e-12)


# ----------------------------------------------------------------- quantile


def test_quantile_exact_rank_position():
    assert quantile(np.arange(11.0), 0.1) == 1.0


def test_quantile_constant_sample():
    assert quantile(np.full(7, 3.25), 0.42) == 3.25


def test_quantile_interpolates_between_ranks():
    # positions (len-1)*q: for {0, 10} and q=0.25 the value is 2.5
    assert quantile(np.array([0.0, 10.0]), 0.25) == 2.5


def test_quantile_uniform_monte_carlo():
    rng = np.random.default_rng(11)
    draws = rng.random(10**6)
    assert quantile(draws, 0.1) == pytest.approx(0.1, abs=0.002)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.data())
@settings(max_examples=100)
def test_quantile_monotone_in_q(values, data):
    sample = np.array(values)
    q1 = data.draw(st.floats(0.01, 0.99))
    q2 = data.draw(st.floats(q1, 0.99))
    assert quantile(sample, q1) <= quantile(sample, q2)


def test_quantile_rejects_empty_and_bad_q():
    with pytest.raises(ValueError):
        quantile(np.array([]), 0.5)
    with pytest.raises(ValueError):
        quantile(np.array([1.0]), 1.0)

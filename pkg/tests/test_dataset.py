import logging

import numpy as np
import pytest

from missflow.dataset import (
    DataError,
    FullyMissingColumnError,
    MaskedDataset,
    MaskedReadError,
    Pattern,
    PatternGroup,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    partition_by_pattern,
    write_csv,
)


def random_masked(rng, n=None, d=None, missing_frac=0.3, allow_all_missing_rows=False):
    n = n or int(rng.integers(2, 12))
    d = d or int(rng.integers(1, 6))
    values = rng.standard_normal((n, d))
    mask = rng.random((n, d)) < missing_frac
    # keep every column partially observed
    for j in range(d):
        if mask[:, j].all():
            mask[rng.integers(0, n), j] = False
    if not allow_all_missing_rows:
        for i in range(n):
            if mask[i].all():
                mask[i, rng.integers(0, d)] = False
    return MaskedDataset(values, mask, tuple(f"c{j}" for j in range(d)))


# ---------------------------------------------------------------- loading


def test_load_csv_single_na_cell(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1.0,2.0\n3.0,NA\n5.0,6.0\n")
    ds = load_csv(p)
    assert ds.n == 3 and ds.d == 2
    assert ds.mask.sum() == 1
    assert ds.mask[1, 1]
    assert ds.value_at(0, 1) == 2.0


def test_load_csv_empty_cell_is_missing(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1.0,\n2.0,3.0\n")
    assert load_csv(p).mask[0, 1]


def test_load_csv_fully_missing_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1.0,NA\n2.0,NA\n")
    with pytest.raises(FullyMissingColumnError):
        load_csv(p)


def test_load_csv_ragged_row(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1.0,2.0\n3.0\n")
    with pytest.raises(DataError, match="expected 2 cells"):
        load_csv(p)


def test_load_csv_unparseable_cell(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1.0,zebra\n")
    with pytest.raises(DataError, match="zebra"):
        load_csv(p)


def test_csv_round_trip_random_matrices(tmp_path):
    rng = np.random.default_rng(11)
    for i in range(25):
        ds = random_masked(rng)
        path = tmp_path / f"rt{i}.csv"
        write_csv(ds, path)
        back = load_csv(path)
        assert back.column_names == ds.column_names
        assert np.array_equal(back.mask, ds.mask)
        assert np.array_equal(back.values[~back.mask], ds.values[~ds.mask])


def test_masked_read_raises():
    ds = MaskedDataset(
        [[1.0, 2.0], [3.0, 4.0]], [[False, True], [False, False]], ("a", "b")
    )
    assert ds.value_at(0, 0) == 1.0
    with pytest.raises(MaskedReadError):
        ds.value_at(0, 1)


def test_values_are_immutable():
    ds = MaskedDataset([[1.0, 2.0]], [[False, False]], ("a", "b"))
    with pytest.raises(ValueError):
        ds.values[0, 0] = 5.0


def test_nonfinite_observed_entry_rejected():
    with pytest.raises(DataError, match="non-finite"):
        MaskedDataset([[np.inf, 1.0]], [[False, False]], ("a", "b"))


# ---------------------------------------------------------------- patterns


def test_pattern_observed_index():
    pat = Pattern((True, False, True, False))
    assert pat.observed_idx.tolist() == [1, 3]
    assert pat.n_observed == 2
    assert not pat.all_observed and not pat.all_missing


def test_partition_all_rows_observed():
    ds = MaskedDataset.complete(np.arange(12.0).reshape(4, 3))
    groups = partition_by_pattern(ds)
    assert len(groups) == 1
    assert groups[0].pattern.all_observed
    assert groups[0].n_rows == 4


def test_partition_three_pattern_design():
    # patterns (0,0,0), (0,1,0), (1,0,0): observed widths 3, 2, 2
    mask = np.array(
        [
            [False, False, False],
            [False, True, False],
            [True, False, False],
            [False, True, False],
        ]
    )
    ds = MaskedDataset(np.where(mask, np.nan, 1.0), mask, ("a", "b", "c"))
    groups = partition_by_pattern(ds)
    assert len(groups) == 3
    assert [g.pattern.n_observed for g in groups] == [3, 2, 2]
    # lexicographic order on the missing bits
    assert [g.pattern.missing for g in groups] == [
        (False, False, False),
        (False, True, False),
        (True, False, False),
    ]


def test_partition_matches_brute_force_rescan():
    rng = np.random.default_rng(5)
    for _ in range(30):
        ds = random_masked(rng)
        groups = partition_by_pattern(ds)
        assert sum(g.n_rows for g in groups) == ds.n
        covered = sorted(i for g in groups for i in g.row_indices.tolist())
        assert covered == list(range(ds.n))
        for g in groups:
            for local, i in enumerate(g.row_indices):
                assert tuple(ds.mask[i]) == g.pattern.missing
                np.testing.assert_array_equal(
                    g.rows[local], ds.values[i, g.pattern.observed_idx]
                )


def test_partition_is_row_permutation_equivariant():
    rng = np.random.default_rng(8)
    ds = random_masked(rng, n=15, d=4)
    perm = rng.permutation(ds.n)
    shuffled = MaskedDataset(ds.values[perm], ds.mask[perm], ds.column_names)

    def multiset(groups):
        return sorted(
            (g.pattern.missing, tuple(map(tuple, np.sort(g.rows, axis=0))))
            for g in groups
        )

    assert multiset(partition_by_pattern(ds)) == multiset(partition_by_pattern(shuffled))


def test_partition_excludes_all_missing_rows(caplog):
    mask = np.array([[False, False], [True, True], [False, True]])
    ds = MaskedDataset(np.where(mask, np.nan, 1.0), mask, ("a", "b"))
    with caplog.at_level(logging.WARNING, logger="missflow.dataset"):
        groups = partition_by_pattern(ds)
    assert sum(g.n_rows for g in groups) == 2
    assert "fully missing" in caplog.text


def test_pattern_group_rejects_nonfinite():
    with pytest.raises(DataError):
        PatternGroup(Pattern((False,)), np.array([[np.nan]]), np.array([0]))


# ---------------------------------------------------------------- standardizer


def test_fit_two_point_column():
    ds = MaskedDataset([[0.0], [2.0]], [[False], [False]], ("a",))
    s = fit_standardizer(ds)
    assert s.mean[0] == pytest.approx(1.0)
    assert s.scale[0] == pytest.approx(np.sqrt(2.0))


def test_fit_skips_masked_entries():
    ds = MaskedDataset([[1.0], [np.nan], [3.0]], [[False], [True], [False]], ("a",))
    s = fit_standardizer(ds)
    assert s.mean[0] == pytest.approx(2.0)
    assert s.scale[0] == pytest.approx(np.sqrt(2.0))


def test_fit_matches_naive_accumulation():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ds = random_masked(rng, n=20)
        s = fit_standardizer(ds)
        for j in range(ds.d):
            acc, count = 0.0, 0
            for i in range(ds.n):
                if not ds.mask[i, j]:
                    acc += ds.values[i, j]
                    count += 1
            mean = acc / count
            ss = sum(
                (ds.values[i, j] - mean) ** 2
                for i in range(ds.n)
                if not ds.mask[i, j]
            )
            assert s.mean[j] == pytest.approx(mean, abs=1e-12)
            assert s.scale[j] == pytest.approx(np.sqrt(ss / (count - 1)), rel=1e-12)


def test_fit_rejects_zero_variance_column():
    ds = MaskedDataset([[1.0], [1.0]], [[False], [False]], ("a",))
    with pytest.raises(DataError, match="zero variance"):
        fit_standardizer(ds)


def test_fit_rejects_single_observation_column():
    ds = MaskedDataset([[1.0], [np.nan]], [[False], [True]], ("a",))
    with pytest.raises(DataError, match="fewer than 2"):
        fit_standardizer(ds)


def test_round_trip_identity_many_random_matrices():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        values = rng.standard_normal((5, 2)) * rng.uniform(0.1, 50) + rng.uniform(-20, 20)
        ds = MaskedDataset.complete(values)
        s = fit_standardizer(ds)
        back = apply_standardizer(apply_standardizer(ds, s), s, "inverse")
        np.testing.assert_allclose(back.values, values, rtol=1e-12, atol=1e-12)


def test_shift_moves_mean_only():
    rng = np.random.default_rng(2)
    values = rng.standard_normal((30, 3))
    s0 = fit_standardizer(MaskedDataset.complete(values))
    s1 = fit_standardizer(MaskedDataset.complete(values + 7.5))
    np.testing.assert_allclose(s1.mean, s0.mean + 7.5, rtol=1e-12)
    np.testing.assert_allclose(s1.scale, s0.scale, rtol=1e-12)


def test_forward_output_has_zero_mean_unit_sd():
    rng = np.random.default_rng(9)
    ds = random_masked(rng, n=40, d=3)
    s = fit_standardizer(ds)
    out = apply_standardizer(ds, s)
    for j in range(ds.d):
        col = out.observed_column(j)
        assert abs(col.mean()) < 1e-10
        assert abs(col.std(ddof=1) - 1.0) < 1e-10


def test_apply_on_plain_matrix_and_dimension_check():
    rng = np.random.default_rng(1)
    s = fit_standardizer(MaskedDataset.complete(rng.standard_normal((10, 2))))
    matrix = np.array([[1.0, 2.0]])
    forward = apply_standardizer(matrix, s)
    back = apply_standardizer(forward, s, "inverse")
    np.testing.assert_allclose(back, matrix, rtol=1e-12)
    with pytest.raises(DataError):
        apply_standardizer(np.ones((2, 3)), s)

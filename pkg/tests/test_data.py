"""Ingestion, canonical format round trips and deterministic splitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnmf.data import (
    DataSplit,
    ObservationSet,
    SplitSpec,
    ingest_edge_list,
    ingest_movielens,
    make_splits,
    mix_seed,
    read_canonical,
    split_sizes,
    write_canonical,
)
from nnmf.errors import DuplicateObservationError, EmptyDatasetError, ParseError

from conftest import random_observations


def write_lines(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return str(path)


class TestMixSeed:
    def test_matches_splitmix64_reference_stream(self):
        # first outputs of the splitmix64 generator seeded with 0
        assert mix_seed(0, 0) == 0xE220A8397B1DCDAF
        assert mix_seed(0, 1) == 0x6E789E6AA1B965F4
        assert mix_seed(0, 2) == 0x06C45D188009454F

    def test_outputs_are_64_bit_and_distinct(self):
        seen = {mix_seed(12345, r) for r in range(100)}
        assert len(seen) == 100
        assert all(0 <= s < 2**64 for s in seen)


class TestIngestMovielens:
    def test_minimal_file(self, tmp_path):
        path = write_lines(tmp_path, "u.data", ["1\t1\t5\t0"])
        data = ingest_movielens(path)
        assert data.n_rows == 1 and data.n_cols == 1
        assert data.triples == [(0, 0, 5.0)]

    def test_dimensions_are_max_ids(self, tmp_path):
        path = write_lines(
            tmp_path, "u.data", ["3\t7\t4\t11", "1\t2\t1\t12", "2\t5\t3\t13"]
        )
        data = ingest_movielens(path)
        assert (data.n_rows, data.n_cols, len(data)) == (3, 7, 3)

    def test_wrong_field_count_names_line(self, tmp_path):
        path = write_lines(tmp_path, "u.data", ["1\t2"])
        with pytest.raises(ParseError, match=":1:"):
            ingest_movielens(path)

    def test_non_numeric_field(self, tmp_path):
        path = write_lines(tmp_path, "u.data", ["1\t1\t5\t0", "1\tx\t4\t0"])
        with pytest.raises(ParseError, match=":2:"):
            ingest_movielens(path)

    def test_rating_out_of_range(self, tmp_path):
        path = write_lines(tmp_path, "u.data", ["1\t1\t6\t0"])
        with pytest.raises(ParseError, match="rating"):
            ingest_movielens(path)

    def test_space_separated_rejected(self, tmp_path):
        path = write_lines(tmp_path, "u.data", ["1 1 5 0"])
        with pytest.raises(ParseError):
            ingest_movielens(path)

    def test_duplicate_pair(self, tmp_path):
        path = write_lines(tmp_path, "u.data", ["1\t1\t5\t0", "1\t1\t4\t9"])
        with pytest.raises(DuplicateObservationError):
            ingest_movielens(path)

    def test_empty_file(self, tmp_path):
        path = write_lines(tmp_path, "u.data", [])
        with pytest.raises(EmptyDatasetError):
            ingest_movielens(path)


class TestIngestEdgeList:
    def test_square_dimensions(self, tmp_path):
        # a 234-node graph shaped like the coauthorship benchmark
        lines = [f"{r}\t{c}\t1" for r, c in [(1, 2), (2, 1), (234, 10), (3, 234)]]
        path = write_lines(tmp_path, "graph.tsv", lines)
        data = ingest_edge_list(path, square=True)
        assert data.n_rows == data.n_cols == 234
        assert len(data) == 4

    def test_rectangular_dimensions(self, tmp_path):
        path = write_lines(tmp_path, "graph.tsv", ["5\t2\t1", "1\t9\t0"])
        data = ingest_edge_list(path, square=False)
        assert (data.n_rows, data.n_cols) == (5, 9)

    def test_general_real_values_accepted(self, tmp_path):
        path = write_lines(tmp_path, "graph.tsv", ["1\t1\t0.25", "2\t1\t-3.5"])
        data = ingest_edge_list(path, square=True)
        assert data.values.tolist() == [0.25, -3.5]

    def test_empty_file_violates_invariant(self, tmp_path):
        path = write_lines(tmp_path, "graph.tsv", [])
        with pytest.raises(EmptyDatasetError):
            ingest_edge_list(path)

    def test_duplicate_edge(self, tmp_path):
        path = write_lines(tmp_path, "graph.tsv", ["1\t2\t1", "1\t2\t0"])
        with pytest.raises(DuplicateObservationError):
            ingest_edge_list(path)


class TestCanonicalFormat:
    def test_round_trip_exact(self, tmp_path):
        data = random_observations(5, n_rows=13, n_cols=9, n_obs=40)
        path = tmp_path / "canon.tsv"
        write_canonical(data, path)
        again = read_canonical(path)
        assert again == data

    def test_header_required(self, tmp_path):
        path = write_lines(tmp_path, "bad.tsv", ["0\t0\t1.5"])
        with pytest.raises(ParseError, match="#obs"):
            read_canonical(path)

    def test_movielens_to_canonical_round_trip(self, tmp_path):
        src = write_lines(
            tmp_path, "u.data", ["1\t1\t5\t0", "2\t3\t1\t0", "1\t3\t4\t0"]
        )
        data = ingest_movielens(src)
        path = tmp_path / "canon.tsv"
        write_canonical(data, path)
        assert read_canonical(path) == data


class TestObservationSet:
    def test_duplicate_rejected(self):
        with pytest.raises(DuplicateObservationError):
            ObservationSet.from_triples(2, 2, [(0, 0, 1.0), (0, 0, 2.0)])

    def test_empty_rejected(self):
        with pytest.raises(EmptyDatasetError):
            ObservationSet.from_triples(2, 2, [])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ObservationSet.from_triples(2, 2, [(2, 0, 1.0)])

    def test_validate_false_allows_empty_for_limit_cases(self):
        empty = ObservationSet.from_triples(2, 2, [], validate=False)
        assert len(empty) == 0


class TestMakeSplits:
    def spec(self, **kw):
        base = dict(test_fraction=0.1, validation_fraction=0.1, n_repeats=3, seed=99)
        base.update(kw)
        return SplitSpec(**base)

    def test_sizes_match_floor_arithmetic(self):
        data = random_observations(0, 40, 30, 1000)
        spec = self.spec(test_fraction=0.1, validation_fraction=0.02)
        split = make_splits(data, spec)[0]
        assert len(split.test) == 100
        assert len(split.validation) == 18  # floor(0.02 * 900)
        assert len(split.train) == 882

    def test_disjoint_and_covering(self):
        data = random_observations(1, 20, 20, 150)
        for split in make_splits(data, self.spec()):
            parts = [split.train, split.validation, split.test]
            pair_sets = [p.pair_set() for p in parts]
            assert sum(len(s) for s in pair_sets) == len(data)
            assert set.union(*pair_sets) == data.pair_set()

    def test_deterministic(self):
        data = random_observations(2, 15, 15, 120)
        a = make_splits(data, self.spec())
        b = make_splits(data, self.spec())
        for sa, sb in zip(a, b):
            assert sa.train == sb.train
            assert sa.validation == sb.validation
            assert sa.test == sb.test

    def test_repeats_differ(self):
        data = random_observations(3, 15, 15, 120)
        splits = make_splits(data, self.spec())
        assert splits[0].test != splits[1].test

    def test_empty_partition_is_error(self):
        data = random_observations(4, 5, 4, 10)
        with pytest.raises(EmptyDatasetError):
            make_splits(data, self.spec(test_fraction=0.1, validation_fraction=0.1))

    def test_million_triples_sizes(self):
        n = 1_000_000
        rows = np.arange(n, dtype=np.int64) // 1000
        cols = np.arange(n, dtype=np.int64) % 1000
        data = ObservationSet(1000, 1000, rows, cols, np.ones(n))
        spec = self.spec(test_fraction=0.1, validation_fraction=0.005, n_repeats=1)
        split = make_splits(data, spec)[0]
        assert len(split.test) == 100_000
        assert len(split.validation) == 4500
        assert len(split.train) == 895_500

    @settings(max_examples=60, deadline=None)
    @given(
        n_obs=st.integers(min_value=30, max_value=4000),
        test_fraction=st.floats(min_value=0.05, max_value=0.4),
        validation_fraction=st.floats(min_value=0.05, max_value=0.4),
        seed=st.integers(min_value=0, max_value=2**63),
    )
    def test_size_arithmetic_property(self, n_obs, test_fraction, validation_fraction, seed):
        rows = np.arange(n_obs, dtype=np.int64)
        data = ObservationSet(n_obs, 1, rows, np.zeros(n_obs, dtype=np.int64),
                              np.ones(n_obs))
        spec = SplitSpec(test_fraction, validation_fraction, 1, seed)
        n_train, n_val, n_test = split_sizes(n_obs, spec)
        assert n_test == int(np.floor(test_fraction * n_obs))
        assert n_val == int(np.floor(validation_fraction * (n_obs - n_test)))
        if 0 in (n_train, n_val, n_test):
            with pytest.raises(EmptyDatasetError):
                make_splits(data, spec)
            return
        split = make_splits(data, spec)[0]
        assert (len(split.train), len(split.validation), len(split.test)) == (
            n_train, n_val, n_test,
        )
        union = split.train.pair_set() | split.validation.pair_set() | split.test.pair_set()
        assert union == data.pair_set()


class TestSplitSpec:
    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            SplitSpec(0.0, 0.1, 1, 0)
        with pytest.raises(ValueError):
            SplitSpec(0.1, 1.0, 1, 0)
        with pytest.raises(ValueError):
            SplitSpec(0.1, 0.1, 0, 0)

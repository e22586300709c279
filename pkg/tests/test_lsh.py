import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from projlang.lsh import IndexFormatError, LshIndex, build_index, hyperplanes, load_index, save_index

from simhash_oracle import bit_agreement, pairs_at_angle


def random_index(n=300, dim=12, bits=10, seed=5):
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((n, dim))
    return LshIndex(bits, seed, dim, [f"s{i}" for i in range(n)], [f"p{i}" for i in range(n)], vecs)


def test_hyperplanes_pure():
    assert np.array_equal(hyperplanes(3, 16, 8), hyperplanes(3, 16, 8))
    assert not np.array_equal(hyperplanes(3, 16, 8), hyperplanes(4, 16, 8))


class TestFingerprint:
    def test_deterministic_and_complement(self):
        idx = random_index()
        v = np.random.default_rng(0).standard_normal(12)
        assert np.array_equal(idx.fingerprint(v), idx.fingerprint(v))
        assert np.array_equal(idx.fingerprint(-v), 1 - idx.fingerprint(v))

    def test_sign_zero_is_one(self):
        idx = random_index()
        assert idx.fingerprint(np.zeros(12)).tolist() == [1] * 10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            random_index().fingerprint(np.zeros(3))

    @pytest.mark.parametrize("theta", [np.pi / 6, np.pi / 3, 2 * np.pi / 3])
    def test_agreement_law(self, theta):
        idx = LshIndex(32, 11, 16, [], [], np.zeros((0, 16)))
        u, v = pairs_at_angle(np.random.default_rng(1), 10_000, 16, theta)
        assert bit_agreement(idx, u, v) == pytest.approx(1 - theta / np.pi, abs=0.02)


class TestBuild:
    def test_g1(self, g1_sentences, provider):
        idx = build_index(g1_sentences, provider, bits=16, seed=0)
        assert len(idx) == 8
        assert sum(len(b) for b in idx.buckets.values()) == 8
        assert idx.texts == [s.text for s in g1_sentences]

    def test_zero_bits(self, g1_sentences, provider):
        idx = build_index(g1_sentences, provider, bits=0, seed=0)
        assert list(idx.buckets) == [0]
        assert idx.query(provider.embed(["go"]), 0).tolist() == list(range(8))

    def test_deterministic(self, g1_sentences, provider):
        a = build_index(g1_sentences, provider, bits=4, seed=9)
        b = build_index(g1_sentences, provider, bits=4, seed=9)
        assert {k: v.tolist() for k, v in a.buckets.items()} == {k: v.tolist() for k, v in b.buckets.items()}

    def test_partition(self):
        idx = random_index()
        ids = np.concatenate(list(idx.buckets.values()))
        assert sorted(ids.tolist()) == list(range(len(idx)))
        for key, members in idx.buckets.items():
            for i in members:
                assert idx.key(idx.vectors[i]) == key

    def test_embedding_failure_names_text(self, g1_sentences, tmp_path):
        from projlang.embedding import EmbeddingError, load_file_provider

        path = tmp_path / "e.txt"
        path.write_text("dim 2\ngo to the red ball\t1 0\n")
        with pytest.raises(EmbeddingError, match="go to the yellow ball"):
            build_index(g1_sentences, load_file_provider(path))

    def test_empty(self, provider):
        with pytest.raises(ValueError):
            build_index([], provider)


class TestQuery:
    def test_full_radius_is_everything(self):
        idx = random_index()
        q = np.random.default_rng(2).standard_normal(12)
        assert idx.query(q, idx.bits).tolist() == list(range(len(idx)))

    def test_radius_zero_is_own_bucket(self):
        idx = random_index()
        q = np.random.default_rng(3).standard_normal(12)
        expected = idx.buckets.get(idx.key(q), np.array([], dtype=int))
        assert idx.query(q, 0).tolist() == sorted(expected.tolist())

    def test_matches_brute_force_hamming(self):
        idx = random_index()
        rng = np.random.default_rng(4)
        for _ in range(20):
            q = rng.standard_normal(12)
            qbits = idx.fingerprint(q)
            for r in range(idx.bits + 1):
                expected = [i for i in range(len(idx))
                            if np.sum(idx.fingerprint(idx.vectors[i]) != qbits) <= r]
                assert idx.query(q, r).tolist() == expected

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10), st.integers(0, 10), st.integers(0, 2**32 - 1))
    def test_monotone_in_radius(self, r1, r2, qseed):
        r1, r2 = min(r1, r2), max(r1, r2)
        idx = random_index()
        q = np.random.default_rng(qseed).standard_normal(12)
        assert set(idx.query(q, r1).tolist()) <= set(idx.query(q, r2).tolist())


class TestPersistence:
    def test_roundtrip(self, tmp_path, babyai_small, provider):
        from projlang import enumerate_sentences

        idx = build_index(enumerate_sentences(babyai_small), provider, bits=8, seed=2)
        path = tmp_path / "i.idx"
        save_index(idx, path)
        back = load_index(path)
        assert np.array_equal(back.vectors, idx.vectors)
        assert (back.texts, back.programs, back.bits, back.seed) == (idx.texts, idx.programs, 8, 2)
        rng = np.random.default_rng(0)
        for _ in range(25):
            q = rng.standard_normal(64)
            r = int(rng.integers(0, 9))
            assert back.query(q, r).tolist() == idx.query(q, r).tolist()

    def test_same_bytes(self, tmp_path):
        idx = random_index()
        save_index(idx, tmp_path / "a")
        save_index(idx, tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "i.idx"
        save_index(random_index(), path)
        lines = path.read_bytes().split(b"\n", 1)
        path.write_bytes(lines[0].replace(b'"version": 1', b'"version": 99') + b"\n" + lines[1])
        with pytest.raises(IndexFormatError, match="version"):
            load_index(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "i.idx"
        save_index(random_index(), path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 100])
        with pytest.raises(IndexFormatError, match="checksum"):
            load_index(path)

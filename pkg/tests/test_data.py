import hashlib

import numpy as np
import pytest

from hyenarec.data import (InteractionLog, SequenceDataset, batch_from_prefixes, load_cache, load_dataset,
                           load_log, make_batch, preprocess, save_cache, sliding_examples, stage_users,
                           synth_copy_task)
from hyenarec.errors import DataError, DataFormatError, ParameterError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def log_of(rows):
    return InteractionLog([(u, i, t) for u, i, t in rows])


class TestLoadLog:
    def test_empty_file(self, tmp_path):
        assert len(load_log(write(tmp_path, "e.csv", ""))) == 0

    def test_order_preserved(self, tmp_path):
        p = write(tmp_path, "a.csv", "u1,b,3\nu1,a,1\nu2,c,2\n")
        assert load_log(p).records == [("u1", "b", 3), ("u1", "a", 1), ("u2", "c", 2)]

    def test_header_skipped(self, tmp_path):
        p = write(tmp_path, "h.csv", "user,item,timestamp\nu1,a,1\n")
        assert load_log(p).records == [("u1", "a", 1)]

    def test_tsv(self, tmp_path):
        p = write(tmp_path, "a.tsv", "u1\ta\t1\nu2\tb\t2\n")
        assert len(load_log(p, "tsv")) == 2

    def test_ml1m_layout(self, tmp_path):
        p = write(tmp_path, "ratings.dat", "1::1193::5::978300760\n1::661::3::978302109\n")
        assert load_log(p, "ml1m").records == [("1", "1193", 978300760), ("1", "661", 978302109)]

    def test_bad_timestamp_skipped(self, tmp_path):
        p = write(tmp_path, "b.csv", "u1,a,1\nu1,b,x\nu2,c,3\n")
        with pytest.warns(UserWarning, match="line 2"):
            out = load_log(p)
        assert out.skipped == 1 and len(out) == 2

    def test_duplicates_removed(self, tmp_path):
        p = write(tmp_path, "d.csv", "u1,a,1\nu1,a,1\nu1,a,2\n")
        assert len(load_log(p)) == 2

    def test_mostly_malformed(self, tmp_path):
        p = write(tmp_path, "m.csv", "u1,a,1\nbad\nworse,,\nu2,b,zz\n")
        with pytest.raises(DataFormatError):
            load_log(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="nope.csv"):
            load_log(tmp_path / "nope.csv")


class TestPreprocess:
    def test_single_repeated_item(self):
        ds = preprocess(log_of([("u", "x", t) for t in range(6)]))
        train, valid, test = ds.split(0)
        assert len(train) == 4 and valid == test == ds.item_index("x")

    def test_cascade_removes_user(self):
        # item "r" has 4 interactions and is dropped; user "c" then has one item left and is dropped,
        # which takes item "s" below five.
        rows = [(u, "r", t) for t, u in enumerate("abcd")]
        rows += [("c", "s", 10)] + [(u, "s", 10 + t) for t, u in enumerate("efgh", 1)]
        rows += [(u, "k", 20 + t) for t, u in enumerate("abdefgh")]
        rows += [(u, "k2", 30 + t) for t, u in enumerate("abdefgh")]
        ds = preprocess(log_of(rows))
        assert "r" not in ds.items and "s" not in ds.items and "c" not in ds.users
        assert all(len(s) >= 2 for s in ds.sequences)
        counts = np.bincount(np.concatenate(ds.sequences), minlength=ds.num_items)
        assert counts.min() >= 5

    def test_stable_time_ties(self):
        rows = [("u", "b", 5), ("u", "a", 5), ("u", "c", 1)] + [(f"v{j}", i, 0) for j in range(5) for i in "abc"]
        ds = preprocess(log_of(rows))
        u = ds.users.index("u")
        assert [ds.items[i] for i in ds.sequences[u]] == ["c", "b", "a"]

    def test_dense_vocabulary(self):
        rows = [(f"u{j}", f"i{k}", j * 10 + k) for j in range(6) for k in range(3)]
        ds = preprocess(log_of(rows))
        assert sorted(set(np.concatenate(ds.sequences).tolist())) == list(range(ds.num_items))

    def test_idempotent(self, rng):
        rows = [(f"u{rng.integers(20)}", f"i{rng.integers(15)}", int(rng.integers(1000))) for _ in range(400)]
        ds = preprocess(log_of(rows))
        again = preprocess(ds.to_log())
        assert again.users == ds.users and again.items == ds.items
        for a, b in zip(ds.sequences, again.sequences):
            np.testing.assert_array_equal(a, b)

    def test_empty(self):
        with pytest.raises(DataError):
            preprocess(InteractionLog())
        with pytest.raises(DataError):
            preprocess(log_of([("u", "a", 1), ("u", "b", 2)]))

    def test_stats(self):
        ds = SequenceDataset(["a", "b"], ["x", "y", "z"], [np.array([0, 1, 2]), np.array([0, 1])])
        s = ds.stats()
        assert s["users"] == 2 and s["items"] == 3 and s["interactions"] == 5
        assert s["avg_length"] == 2.5 and s["sparsity"] == pytest.approx(1 - 5 / 6)


class TestBatches:
    def ds(self, *seqs):
        n = max(max(s) for s in seqs) + 1
        return SequenceDataset([str(i) for i in range(len(seqs))], [str(i) for i in range(n)],
                               [np.array(s) for s in seqs])

    def test_train_example(self):
        ds = self.ds([0, 1, 2, 3, 4])  # train prefix [0, 1, 2]
        b = make_batch(ds, [0], 4, "train")
        np.testing.assert_array_equal(b.items[0], [5, 5, 0, 1])
        assert b.targets[0] == 2

    def test_valid_and_test_inputs(self):
        ds = self.ds([0, 1, 2, 3, 4])
        v, t = make_batch(ds, [0], 6, "valid"), make_batch(ds, [0], 6, "test")
        np.testing.assert_array_equal(v.items[0][-3:], [0, 1, 2])
        assert v.targets[0] == 3
        np.testing.assert_array_equal(t.items[0][-4:], [0, 1, 2, 3])
        assert t.targets[0] == 4

    def test_truncation_keeps_recent(self):
        ds = self.ds(list(range(13)) + [0, 1])
        b = make_batch(ds, [0], 8, "test")
        np.testing.assert_array_equal(b.items[0], list(range(6, 13)) + [0])

    def test_masks(self):
        ds = self.ds([0, 1, 2, 3], [0, 1, 2, 3, 4, 5, 6, 7])
        b = make_batch(ds, [0, 1], 8, "test")
        assert b.mask.sum(axis=1).tolist() == [3, 7]
        assert b.mask[:, -1].all()
        np.testing.assert_array_equal(b.mask, b.items != ds.num_items)

    def test_empty_input_skipped(self, caplog):
        ds = self.ds([0, 1], [0, 1, 2, 3])
        b = make_batch(ds, [0, 1], 4, "valid")
        assert b.users.tolist() == [1]
        assert "skipped 1" in caplog.text

    def test_stage_users(self):
        ds = self.ds([0, 1], [0, 1, 2], [0, 1, 2, 3])
        assert stage_users(ds, "train").tolist() == [2]
        assert stage_users(ds, "valid").tolist() == [1, 2]
        assert stage_users(ds, "test").tolist() == [0, 1, 2]

    def test_no_leakage(self, rng):
        ds = synth_copy_task(50, 12, 3, 9, seed=1)
        for stage, offset in (("test", 1), ("valid", 2)):
            b = make_batch(ds, np.arange(50), 32, stage)
            for r, u in enumerate(b.users):
                seq = ds.sequences[u]
                np.testing.assert_array_equal(b.items[r][b.mask[r]], seq[:len(seq) - offset])

    def test_sliding_examples(self):
        ds = self.ds([0, 1, 2, 3, 4, 5])
        pairs = sliding_examples(ds)
        assert pairs == [(0, 1), (0, 2), (0, 3)]
        b = batch_from_prefixes(ds, pairs, 4)
        assert b.targets.tolist() == [1, 2, 3]


class TestCopyTask:
    def test_lag_one(self):
        ds = synth_copy_task(20, 10, 1, 7)
        for s in ds.sequences:
            assert s[-1] == s[-2] == s[-3] == s[-4]

    def test_lag_64_every_split(self):
        L, lag = 128, 64
        ds = synth_copy_task(100, L, lag, 50)
        for stage in ("train", "valid", "test"):
            b = make_batch(ds, np.arange(100), L, stage)
            assert b.mask.all()
            np.testing.assert_array_equal(b.targets, b.items[:, L - lag])

    def test_deterministic(self):
        a, b = synth_copy_task(30, 16, 4, 10, seed=3), synth_copy_task(30, 16, 4, 10, seed=3)
        assert np.array_equal(np.stack(a.sequences), np.stack(b.sequences))
        assert not np.array_equal(np.stack(a.sequences), np.stack(synth_copy_task(30, 16, 4, 10, seed=4).sequences))

    def test_lag_too_large(self):
        with pytest.raises(ParameterError):
            synth_copy_task(5, 8, 8, 4)


class TestCache:
    def test_round_trip_and_hash(self, tmp_path):
        ds = synth_copy_task(3, 5, 2, 4)
        digests = []
        for i in range(2):
            p = tmp_path / f"c{i}.npz"
            save_cache(ds, p, key="k")
            digests.append(hashlib.sha256(p.read_bytes()).hexdigest())
        assert digests[0] == digests[1]
        back = load_cache(tmp_path / "c0.npz")
        assert back.users == ds.users and back.items == ds.items
        for a, b in zip(ds.sequences, back.sequences):
            np.testing.assert_array_equal(a, b)

    def test_invalidated_by_source_change(self, tmp_path):
        rows = "".join(f"u{j},i{k},{j * 10 + k}\n" for j in range(6) for k in range(3))
        src = write(tmp_path, "log.csv", rows)
        cache = tmp_path / "log.npz"
        ds1 = load_dataset(src, cache_path=cache)
        assert cache.exists()
        src.write_text(rows + "".join(f"u9,i{k},{900 + k}\n" for k in range(3)))
        ds2 = load_dataset(src, cache_path=cache)
        assert ds2.num_users == ds1.num_users + 1

    def test_not_a_cache(self, tmp_path):
        p = write(tmp_path, "x.npz", "garbage")
        with pytest.raises(DataFormatError):
            load_cache(p)

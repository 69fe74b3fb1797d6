"""Windowing, normalization, noise injection, subsampling, and record I/O."""
import numpy as np
import pytest

from vibfault.pipeline import (DatasetSplit, SignalRecord, SpeedProfile,
                               WindowedSample, add_noise, build_split, normalize,
                               read_record_csv, segment, split_records,
                               stratified_fraction, write_record_csv)


def make_record(n=1000, seed=0, fault="healthy", rate=1000.0, machine="m0"):
    rng = np.random.default_rng(seed)
    return SignalRecord(rng.normal(size=n), rate, machine, fault,
                        0.0 if fault == "healthy" else 1.0,
                        SpeedProfile.constant(1800.0), load=2.0)


class TestSegment:
    def test_offsets_and_count(self):
        rec = make_record(10)
        wins = segment(rec, window_len=4, hop=2)
        assert len(wins) == 4
        offsets = [int(w.origin.split(":")[1]) for w in wins]
        assert offsets == [0, 2, 4, 6]

    def test_non_overlapping_tiling(self):
        rec = make_record(100)
        wins = segment(rec, window_len=10, hop=10)
        assert len(wins) == (100 - 10) // 10 + 1 == 10

    def test_count_by_enumeration_oracle(self):
        # offsets 0, 1024, ... while offset + 2048 <= 25600
        expected = len([o for o in range(0, 25600, 1024) if o + 2048 <= 25600])
        assert expected == 24
        rec = make_record(25600)
        assert len(segment(rec, 2048, 1024)) == expected

    def test_window_longer_than_signal_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            segment(make_record(10), window_len=11, hop=1)

    def test_prefix_reconstruction(self):
        rec = make_record(103)
        wins = segment(rec, window_len=10, hop=10)
        rebuilt = np.concatenate([w.values for w in wins])
        np.testing.assert_array_equal(rebuilt, rec.samples[:100])

    def test_labels_carried(self):
        wins = segment(make_record(20), 5, 5, label=3)
        assert all(w.label == 3 for w in wins)


class TestNormalize:
    def test_constant_window_maps_to_zeros(self):
        s = WindowedSample(np.array([1.0, 1, 1, 1]), 0, "x")
        np.testing.assert_array_equal(normalize(s).values, np.zeros(4))

    def test_two_point_window(self):
        s = WindowedSample(np.array([0.0, 2.0]), 0, "x")
        np.testing.assert_allclose(normalize(s).values, [-1.0, 1.0])

    def test_random_window_statistics(self):
        rng = np.random.default_rng(1)
        s = WindowedSample(rng.normal(3.0, 7.0, size=512), 0, "x")
        out = normalize(s).values
        assert abs(out.mean()) <= 1e-9
        assert abs(out.std() - 1.0) <= 1e-6


class TestAddNoise:
    def test_percent_zero_unchanged(self):
        rec = make_record(500)
        out = add_noise(rec, 0.0, seed=0)
        np.testing.assert_array_equal(out.samples, rec.samples)

    def test_ten_percent_ratio_on_long_record(self):
        rec = make_record(100_000, seed=2)
        out = add_noise(rec, 10.0, seed=3)
        ratio = (out.samples - rec.samples).std() / rec.samples.std()
        assert abs(ratio - 0.10) <= 0.01

    def test_deterministic_given_seed(self):
        rec = make_record(1000)
        a = add_noise(rec, 10.0, seed=5)
        b = add_noise(rec, 10.0, seed=5)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_preserves_length_rate_and_mean(self):
        rec = make_record(20_000, seed=4)
        out = add_noise(rec, 10.0, seed=6)
        assert out.samples.size == rec.samples.size
        assert out.sample_rate_hz == rec.sample_rate_hz
        sigma = 0.10 * rec.samples.std()
        shift = abs(out.samples.mean() - rec.samples.mean())
        assert shift <= 3 * sigma / np.sqrt(rec.samples.size)

    def test_negative_percent_rejected(self):
        with pytest.raises(ValueError):
            add_noise(make_record(100), -1.0, seed=0)


def make_split(class_counts: dict[int, int]) -> DatasetSplit:
    train = []
    for label, n in class_counts.items():
        for i in range(n):
            train.append(WindowedSample(np.zeros(4), label, f"c{label}:{i}"))
    label_map = {f"class{c}": c for c in class_counts}
    return DatasetSplit(train, [], [], label_map)


class TestStratifiedFraction:
    def test_full_fraction_is_set_equality(self):
        split = make_split({0: 13, 1: 9})
        out = stratified_fraction(split, 1.0, seed=0)
        assert {s.origin for s in out} == {s.origin for s in split.train}

    def test_five_percent_of_balanced_classes(self):
        split = make_split({0: 200, 1: 200, 2: 200, 3: 200})
        out = stratified_fraction(split, 0.05, seed=1)
        counts = {}
        for s in out:
            counts[s.label] = counts.get(s.label, 0) + 1
        assert counts == {0: 10, 1: 10, 2: 10, 3: 10}

    def test_minimum_one_rule(self):
        # round(0.05 * 7) = 0 -> bumped to 1; round(0.05 * 100) = 5
        split = make_split({0: 7, 1: 100})
        out = stratified_fraction(split, 0.05, seed=2)
        counts = {}
        for s in out:
            counts[s.label] = counts.get(s.label, 0) + 1
        assert counts == {0: 1, 1: 5}

    def test_proportions_within_one_sample(self):
        split = make_split({0: 57, 1: 123, 2: 40})
        for fraction in (0.07, 0.15, 0.33):
            out = stratified_fraction(split, fraction, seed=3)
            counts = {}
            for s in out:
                counts[s.label] = counts.get(s.label, 0) + 1
            for label, n in ((0, 57), (1, 123), (2, 40)):
                assert abs(counts[label] - fraction * n) <= 1.0

    def test_deterministic_and_validation_untouched(self):
        split = make_split({0: 30, 1: 30})
        split.validation.append(WindowedSample(np.zeros(4), 0, "val:0"))
        before = list(split.validation)
        a = stratified_fraction(split, 0.2, seed=9)
        b = stratified_fraction(split, 0.2, seed=9)
        assert [s.origin for s in a] == [s.origin for s in b]
        assert split.validation == before

    def test_empty_class_rejected_by_name(self):
        split = make_split({0: 5})
        split.label_map["ghost"] = 1
        with pytest.raises(ValueError, match="ghost"):
            stratified_fraction(split, 0.5, seed=0)

    def test_fraction_bounds(self):
        split = make_split({0: 5})
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                stratified_fraction(split, bad, seed=0)


class TestSplits:
    def test_record_split_is_disjoint_and_stratified(self):
        records = []
        for cls in ("healthy", "rotor-unbalance"):
            for i in range(10):
                records.append(make_record(64, seed=i, fault=cls,
                                           machine=f"{cls}-{i}"))
        train, val, test = split_records(records, seed=0)
        ids = lambda part: {r.machine_id for r in part}
        assert not (ids(train) & ids(val) or ids(train) & ids(test)
                    or ids(val) & ids(test))
        for part in (train, val, test):
            assert {r.fault_class for r in part} == {"healthy", "rotor-unbalance"}

    def test_too_few_records_rejected(self):
        records = [make_record(64, seed=i, machine=f"m{i}") for i in range(2)]
        with pytest.raises(ValueError, match="healthy"):
            split_records(records)

    def test_build_split_windows_disjoint_by_record(self):
        records = []
        for cls in ("healthy", "bearing-inner-race"):
            for i in range(5):
                records.append(make_record(200, seed=100 + i, fault=cls,
                                           machine=f"{cls}{i}"))
        split = build_split(records, window_len=50, hop=50, seed=1)
        rec_of = lambda s: s.origin.rsplit(":", 1)[0]
        train_ids = {rec_of(s) for s in split.train}
        val_ids = {rec_of(s) for s in split.validation}
        test_ids = {rec_of(s) for s in split.test}
        assert not (train_ids & val_ids or train_ids & test_ids or val_ids & test_ids)
        assert set(split.label_map) == {"healthy", "bearing-inner-race"}
        for part in ("train", "validation", "test"):
            assert set(split.class_counts(part)) == {0, 1}

    def test_build_split_caps(self):
        records = [make_record(400, seed=i, machine=f"m{i}") for i in range(6)]
        split = build_split(records, window_len=20, hop=20, seed=2,
                            caps=(5, 2, None))
        assert split.class_counts("train")[0] == 5
        assert split.class_counts("validation")[0] == 2


class TestRecordIO:
    def test_roundtrip_bit_exact(self, tmp_path):
        rec = make_record(257, seed=11, fault="bearing-outer-race")
        path = tmp_path / "rec.csv"
        write_record_csv(rec, path)
        back = read_record_csv(path)
        assert back.samples.tobytes() == rec.samples.tobytes()
        assert back.sample_rate_hz == rec.sample_rate_hz
        assert back.machine_id == rec.machine_id
        assert back.fault_class == rec.fault_class
        assert back.severity == rec.severity
        assert back.speed_profile == rec.speed_profile
        assert back.load == rec.load

    def test_ramp_profile_roundtrip(self, tmp_path):
        rec = SignalRecord(np.random.default_rng(0).normal(size=100), 3200.0,
                           "mv", "bearing-inner-race", 0.7,
                           SpeedProfile.ramp(680.0, 2460.0), load=0.0)
        path = tmp_path / "ramp.csv"
        write_record_csv(rec, path)
        back = read_record_csv(path)
        assert back.speed_profile == SpeedProfile.ramp(680.0, 2460.0)
        assert not back.speed_profile.is_constant

    def test_header_required(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0\n2.0\n")
        with pytest.raises(ValueError, match="header"):
            read_record_csv(path)


class TestRecordValidation:
    def test_bad_rate_rejected(self):
        with pytest.raises(ValueError):
            SignalRecord(np.ones(4), 0.0, "m", "healthy", 0.0,
                         SpeedProfile.constant(100))

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            SignalRecord(np.array([]), 10.0, "m", "healthy", 0.0,
                         SpeedProfile.constant(100))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            SignalRecord(np.array([1.0, np.nan]), 10.0, "m", "healthy", 0.0,
                         SpeedProfile.constant(100))

    def test_unknown_class_rejected(self):
        with pytest.raises(ValueError):
            SignalRecord(np.ones(4), 10.0, "m", "gearbox", 0.0,
                         SpeedProfile.constant(100))

"""Labeling, merging, admission and fold construction semantics."""

import dataclasses

import numpy as np
import pytest

from eegaug.dataset import (
    INTERICTAL, PREICTAL, DatasetSpec, Fold, Recording, Segment,
    admit_patient, assign_seizures, label_segments, make_folds, merge_seizures,
)
from eegaug.errors import ConfigError
from oracles import count_full_windows, interval_complement

SPEC = DatasetSpec()


def _rec(duration_s, annotations, fs=1, channels=1, rid="r0"):
    data = np.zeros((channels, int(duration_s * fs)))
    return Recording(id=rid, fs=fs, samples=data, annotations=annotations)


class TestMergeSeizures:
    def test_close_pair_merges_keeping_leading_onset(self):
        merged = merge_seizures([(1000.0, 1200.0), (1800.0, 1900.0)], 15.0)
        assert merged == [(1000.0, 1900.0)]

    def test_far_pair_stays_separate(self):
        anns = [(1000.0, 1200.0), (2200.0, 2300.0)]
        assert merge_seizures(anns, 15.0) == anns

    def test_single_unchanged(self):
        assert merge_seizures([(50.0, 60.0)], 15.0) == [(50.0, 60.0)]

    def test_chain_of_three_collapses(self):
        anns = [(0.0, 60.0), (660.0, 720.0), (1320.0, 1380.0)]  # 10 min gaps
        assert merge_seizures(anns, 15.0) == [(0.0, 1380.0)]

    def test_boundary_gap_is_strict(self):
        # exactly 15 min between offset and next onset: NOT merged (strict <)
        anns = [(0.0, 100.0), (1000.0, 1100.0)]
        assert merge_seizures(anns, 15.0) == anns


class TestLabelSegments:
    def test_preictal_tiling_matches_hand_grid(self):
        rec = _rec(4000, [(3600.0, 3660.0)])
        segs = label_segments(rec, SPEC)
        pre = [s for s in segs if s.label == PREICTAL]
        assert [s.start_s for s in pre] == [1800.0 + 30.0 * j for j in range(60)]
        assert all(s.seizure == 0 for s in pre)
        # the 4 h exclusion swallows the whole short recording
        assert all(s.label == PREICTAL for s in segs)

    def test_no_seizures_all_full_windows_interictal(self):
        rec = _rec(100, [])
        segs = label_segments(rec, SPEC)
        assert [s.start_s for s in segs] == [0.0, 30.0, 60.0]
        assert all(s.label == INTERICTAL for s in segs)

    def test_interictal_counts_match_interval_oracle(self):
        duration = 10 * 3600.0
        onset, offset = 5 * 3600.0, 5 * 3600.0 + 60.0
        rec = _rec(duration, [(onset, offset)])
        segs = label_segments(rec, SPEC)
        inter = [s for s in segs if s.label == INTERICTAL]
        regions = interval_complement([(onset - 4 * 3600, offset + 4 * 3600)], duration)
        expected = sum(count_full_windows(a, b, 30.0) for a, b in regions)
        assert len(inter) == expected
        pre = [s for s in segs if s.label == PREICTAL]
        assert len(pre) == 60

    def test_nothing_overlaps_ictal_and_classes_disjoint(self):
        rec = _rec(20 * 3600.0, [(6 * 3600.0, 6 * 3600.0 + 120.0), (12 * 3600.0, 12 * 3600.0 + 60.0)])
        segs = label_segments(rec, SPEC)
        starts = [(s.start_s, s.label) for s in segs]
        assert len(set(starts)) == len(starts)
        for s in segs:
            for onset, offset in rec.annotations:
                assert s.start_s + 30.0 <= onset or s.start_s >= offset

    def test_preictal_clipped_by_previous_seizure(self):
        # second onset only 20 min after the first offset: merged? gap 1200 s
        # > 900 s so the seizures stay separate, but the second preictal
        # window range must not reach into the first seizure.
        rec = _rec(4 * 3600.0, [(3600.0, 3700.0), (4900.0, 5000.0)])
        segs = label_segments(rec, SPEC)
        second = [s for s in segs if s.label == PREICTAL and s.seizure == 1]
        assert second, "expected preictal windows for the second seizure"
        assert min(s.start_s for s in second) >= 3700.0
        assert max(s.start_s for s in second) + 30.0 <= 4900.0
        # grid stays anchored at onset - 30 min
        anchor = 4900.0 - 1800.0
        assert all((s.start_s - anchor) % 30.0 == 0.0 for s in second)

    def test_partial_edge_windows_dropped(self):
        rec = _rec(75, [])  # 2 full windows + 15 s remainder
        assert len(label_segments(rec, SPEC)) == 2

    def test_short_preictal_region_at_recording_start(self):
        rec = _rec(3700, [(100.0, 160.0)])
        segs = label_segments(rec, SPEC)
        pre = [s for s in segs if s.label == PREICTAL]
        # nominal region [-1700, 100): only full windows inside [0, 100) on
        # the nominal grid survive; grid offset -1700 + 30j -> 10, 40, 70
        # ([70, 100) ends exactly at onset, which half-open windows allow)
        assert [s.start_s for s in pre] == [10.0, 40.0, 70.0]

    def test_idempotent_and_deterministic(self):
        rec = _rec(9 * 3600.0, [(4 * 3600.0 + 7.0, 4 * 3600.0 + 77.0)])
        a = label_segments(rec, SPEC)
        b = label_segments(rec, SPEC)
        assert [(s.start_s, s.label) for s in a] == [(s.start_s, s.label) for s in b]

    def test_non_integral_segment_length_rejected(self):
        with pytest.raises(ConfigError, match="whole sample"):
            label_segments(_rec(100, [], fs=3), dataclasses.replace(SPEC, segment_seconds=0.5))


class TestAdmission:
    def test_three_seizures_rejected(self):
        recs = [_rec(30 * 3600.0, [(h * 3600.0, h * 3600.0 + 60.0) for h in (8, 17, 26)])]
        report = admit_patient(recs, SPEC)
        assert not report.admitted
        assert any("seizure count 3" in v for v in report.violated)

    def test_low_ratio_rejected(self):
        # 4 seizures packed so the 4 h belts eat almost all interictal time:
        # belts chain from 1 h to the end, leaving 1 h interictal vs 2 h preictal
        onsets = [(5 + 6 * k) * 3600.0 for k in range(4)]
        recs = [_rec(26 * 3600.0, [(o, o + 60.0) for o in onsets])]
        report = admit_patient(recs, SPEC)
        assert not report.admitted
        assert report.inter_pre_ratio < 2.0
        assert any("ratio" in v for v in report.violated)

    def test_chb01_like_patient_admitted(self):
        onsets = [(9 * (k + 1)) * 3600.0 for k in range(7)]
        recs = [_rec(68 * 3600.0, [(o, o + 60.0) for o in onsets])]
        report = admit_patient(recs, SPEC)
        assert report.admitted and report.violated == ()
        assert report.n_seizures == 7
        assert report.inter_pre_ratio > 2.0
        assert report.seizures_per_day < 10.0

    def test_high_daily_rate_rejected(self):
        onsets = [(1 + k) * 1800.0 for k in range(12)]  # 12 seizures in 8 h
        recs = [_rec(8 * 3600.0, [(o, o + 10.0) for o in onsets])]
        report = admit_patient(recs, dataclasses.replace(SPEC, merge_gap_minutes=1.0))
        assert not report.admitted
        assert any("rate" in v for v in report.violated)


def _fake_segments(n_seizures=4, pre_per=8, n_inter=100):
    segs = []
    t = 0.0
    for j in range(n_inter):
        segs.append(Segment(np.zeros((1, 4)), INTERICTAL, "r0", t))
        t += 30.0
    for k in range(n_seizures):
        for j in range(pre_per):
            segs.append(Segment(np.zeros((1, 4)), PREICTAL, "r0", t, seizure=k))
            t += 30.0
    return segs


class TestFolds:
    def test_partition_property(self):
        segs = _fake_segments()
        folds = make_folds(segs, 4)
        assert len(folds) == 4
        seen = set()
        for f in folds:
            assert len([s for s in f.test if s.label == INTERICTAL]) == 25
            blocks = {s.seizure for s in f.test if s.label == PREICTAL}
            assert len(blocks) == 1
            for s in f.test:
                key = id(s)
                assert key not in seen
                seen.add(key)
        assert len(seen) == len(segs)

    def test_train_val_test_disjoint_and_complete(self):
        segs = _fake_segments(3, 5, 31)
        for f in make_folds(segs):
            ids = [id(s) for s in f.train + f.val + f.test]
            assert len(ids) == len(set(ids)) == len(segs)

    def test_validation_is_later_quarter_per_class(self):
        segs = _fake_segments(4, 8, 100)
        f = make_folds(segs)[0]
        for label in (PREICTAL, INTERICTAL):
            tr = [s.start_s for s in f.train if s.label == label]
            va = [s.start_s for s in f.val if s.label == label]
            assert va, "validation must hold both classes"
            assert min(va) > max(tr)
        n_tr_i = len([s for s in f.train if s.label == INTERICTAL])
        n_va_i = len([s for s in f.val if s.label == INTERICTAL])
        assert n_va_i == int((n_tr_i + n_va_i) * 0.25)

    def test_single_seizure_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            make_folds(_fake_segments(1, 8, 40))

    def test_missing_seizure_index_rejected(self):
        segs = _fake_segments(2, 4, 20)
        segs[-1] = dataclasses.replace(segs[-1], seizure=None)
        with pytest.raises(ValueError, match="seizure index"):
            make_folds(segs)


def test_assign_seizures_restores_block_indices():
    rec = _rec(16 * 3600.0, [(6 * 3600.0, 6 * 3600.0 + 60.0), (12 * 3600.0, 12 * 3600.0 + 60.0)])
    labeled = label_segments(rec, SPEC)
    stripped = [dataclasses.replace(s, seizure=None) for s in labeled]
    restored = assign_seizures(stripped, rec.annotations, SPEC)
    assert [(s.start_s, s.seizure) for s in restored] == [(s.start_s, s.seizure) for s in labeled]


def test_dataset_spec_validates_positivity():
    with pytest.raises(ValueError, match="positive"):
        DatasetSpec(preictal_minutes=0)

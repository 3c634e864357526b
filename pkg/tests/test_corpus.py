from dataclasses import replace

import numpy as np
import pytest

from ssd_screen.attributes import (DEFAULT_INITIALS, build_attribute_map,
                                   default_phone_inventory)
from ssd_screen.corpus import (ManifestEntry, SyntheticSpec,
                               assemble_subject_utterance, check_stratification,
                               confusable_partner, load_manifest, make_folds,
                               save_manifest, speaker_diagnoses, synth_generate,
                               utterance_id)
from ssd_screen.errors import ManifestError
from ssd_screen.features import FeatureMatrix


def _entries(n_td=10, n_ssd=10, words=("w01", "w02")):
    out = []
    for i in range(n_td):
        for w in words:
            out.append(ManifestEntry(f"td{i:03d}", "TD", w, f"td{i:03d}_{w}.wav"))
    for i in range(n_ssd):
        for w in words:
            out.append(ManifestEntry(f"sd{i:03d}", "SSD", w, f"sd{i:03d}_{w}.wav"))
    return out


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = _entries(3, 2)
        entries[0] = replace(entries[0], annotation=1, age_band="4-5")
        path = tmp_path / "manifest.tsv"
        save_manifest(path, entries)
        assert load_manifest(path) == entries

    def test_crlf_accepted(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        save_manifest(path, _entries(2, 2))
        path.write_bytes(path.read_bytes().replace(b"\n", b"\r\n"))
        assert load_manifest(path) == _entries(2, 2)

    def test_bad_field_count_names_line(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        save_manifest(path, _entries(2, 2))
        lines = path.read_text().splitlines()
        lines[3] = lines[3].rsplit("\t", 3)[0]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ManifestError, match=":4:"):
            load_manifest(path)

    def test_bad_annotation_names_line(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        save_manifest(path, _entries(2, 2))
        lines = path.read_text().splitlines()
        parts = lines[2].split("\t")
        parts[4] = "maybe"
        lines[2] = "\t".join(parts)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ManifestError, match=":3:"):
            load_manifest(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("speaker\tdiag\tword\tpath\n")
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("")
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_invalid_diagnosis(self):
        with pytest.raises(ManifestError):
            ManifestEntry("s1", "HEALTHY", "w01", "x.wav")

    def test_conflicting_diagnoses(self):
        entries = [ManifestEntry("s1", "TD", "w01", "a.wav"),
                   ManifestEntry("s1", "SSD", "w02", "b.wav")]
        with pytest.raises(ManifestError):
            speaker_diagnoses(entries)


class TestFolds:
    def test_even_split(self):
        entries = _entries(10, 10)
        plan = make_folds(entries, n_folds=5, seed=0)
        for fold in range(5):
            assert len(plan.fold_speakers(fold)) == 4

    def test_speaker_disjoint_partition(self):
        entries = _entries(13, 7)
        plan = make_folds(entries, n_folds=5, seed=3)
        seen = []
        for fold in range(5):
            seen.extend(plan.fold_speakers(fold))
        assert sorted(seen) == sorted({e.speaker_id for e in entries})
        for fold in range(5):
            assert not set(plan.fold_speakers(fold)) & set(plan.train_speakers(fold))

    def test_paper_scale_stratification(self):
        entries = _entries(265, 150)
        plan = make_folds(entries, n_folds=5, seed=0)
        assert check_stratification(plan, entries, tolerance=0.10)

    def test_deterministic_per_seed(self):
        entries = _entries(20, 12)
        assert make_folds(entries, seed=7).assignment \
            == make_folds(entries, seed=7).assignment
        assert make_folds(entries, seed=7).assignment \
            != make_folds(entries, seed=8).assignment

    def test_too_few_speakers(self):
        with pytest.raises(ValueError):
            make_folds(_entries(3, 10), n_folds=5)


class TestAssemble:
    def _archive(self, speaker, words, rng):
        return {utterance_id(speaker, w):
                FeatureMatrix(rng.standard_normal((4, 2)), 0.01, "mfcc",
                              utterance_id(speaker, w))
                for w in words}

    def test_canonical_word_order(self, rng):
        words = ["w03", "w01", "w02"]
        entries = [ManifestEntry("s1", "TD", w, f"{w}.wav") for w in words]
        archive = self._archive("s1", words, rng)
        merged = assemble_subject_utterance(entries, archive)
        expected = np.vstack([archive[utterance_id("s1", w)].frames
                              for w in ("w01", "w02", "w03")])
        assert np.array_equal(merged.frames, expected)
        assert merged.utterance_id == "s1"

    def test_missing_word_skipped(self, rng):
        entries = [ManifestEntry("s1", "TD", w, f"{w}.wav")
                   for w in ("w01", "w02")]
        archive = self._archive("s1", ["w01"], rng)
        merged = assemble_subject_utterance(entries, archive)
        assert merged.n_frames == 4

    def test_all_missing_rejected(self):
        entries = [ManifestEntry("s1", "TD", "w01", "w01.wav")]
        with pytest.raises(ValueError):
            assemble_subject_utterance(entries, {})

    def test_multiple_speakers_rejected(self, rng):
        entries = [ManifestEntry("s1", "TD", "w01", "a.wav"),
                   ManifestEntry("s2", "TD", "w01", "b.wav")]
        with pytest.raises(ValueError):
            assemble_subject_utterance(entries, self._archive("s1", ["w01"], rng))


class TestConfusablePartner:
    def test_partner_differs_and_is_minimal(self):
        inv = default_phone_inventory()
        amap = build_attribute_map()
        for phone in DEFAULT_INITIALS:
            partner = confusable_partner(phone, inv, amap)
            assert partner != phone
            own = amap.phone_to_attributes[phone]
            got = len(own ^ amap.phone_to_attributes[partner])
            assert got > 0
            best = min(len(own ^ amap.phone_to_attributes[p])
                       for p in DEFAULT_INITIALS if p != phone)
            assert got == best

    def test_aspiration_pairs(self):
        inv = default_phone_inventory()
        amap = build_attribute_map()
        assert confusable_partner("p", inv, amap) == "pʰ"
        assert confusable_partner("pʰ", inv, amap) == "p"


class TestSynthetic:
    SMALL = SyntheticSpec(n_td=6, n_ssd=5, words_per_speaker=4, seed=1)

    def test_counts_and_shapes(self):
        corpus = synth_generate(self.SMALL)
        assert len(corpus.entries) == 11 * 4
        assert len(corpus.features) == 11 * 4
        diagnoses = speaker_diagnoses(corpus.entries)
        assert sum(1 for d in diagnoses.values() if d == "TD") == 6
        assert sum(1 for d in diagnoses.values() if d == "SSD") == 5
        for e in corpus.entries:
            utt = utterance_id(e.speaker_id, e.word_id)
            fm = corpus.features[utt]
            assert fm.dim == self.SMALL.feature_dim
            assert fm.n_frames == corpus.frame_labels[utt].size

    def test_deterministic(self):
        a = synth_generate(self.SMALL)
        b = synth_generate(self.SMALL)
        for utt in a.features:
            assert np.array_equal(a.features[utt].frames, b.features[utt].frames)
        assert a.entries == b.entries

    def test_zero_substitution_prob(self):
        corpus = synth_generate(replace(self.SMALL, substitution_prob=0.0))
        assert all(e.annotation == 0 for e in corpus.entries)

    def test_full_substitution_prob(self):
        corpus = synth_generate(replace(self.SMALL, substitution_prob=1.0))
        diagnoses = speaker_diagnoses(corpus.entries)
        for e in corpus.entries:
            if diagnoses[e.speaker_id] == "SSD":
                assert e.annotation == 1
            else:
                assert e.annotation == 0

    def test_td_speakers_never_annotated(self):
        corpus = synth_generate(self.SMALL)
        diagnoses = speaker_diagnoses(corpus.entries)
        for e in corpus.entries:
            if diagnoses[e.speaker_id] == "TD":
                assert e.annotation == 0

    def test_annotation_matches_frame_labels(self):
        corpus = synth_generate(self.SMALL)
        inv = default_phone_inventory()
        for e in corpus.entries:
            utt = utterance_id(e.speaker_id, e.word_id)
            first = corpus.phone_labels[corpus.frame_labels[utt][0]]
            canonical = corpus.word_initials[e.word_id]
            if e.annotation == 1:
                assert first != canonical
            else:
                assert first == canonical

    def test_seed_changes_features(self):
        a = synth_generate(self.SMALL)
        b = synth_generate(replace(self.SMALL, seed=2))
        utt = utterance_id(a.entries[0].speaker_id, a.entries[0].word_id)
        assert not np.array_equal(a.features[utt].frames, b.features[utt].frames)

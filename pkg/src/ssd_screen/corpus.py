"""Dataset manifests, speaker-disjoint folds, subject assembly and the
synthetic corpus generator.

The synthetic generator stands in for a private clinical corpus: it emits
feature-space frames from per-phone Gaussians, with disordered speakers
substituting initial consonants by attribute-confusable phones.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .attributes import DEFAULT_INITIALS, build_attribute_map, default_phone_inventory
from .errors import ManifestError
from .features import FeatureMatrix, concat_feature_matrices

logger = logging.getLogger(__name__)

DIAGNOSES = ("TD", "SSD")
MANIFEST_FIELDS = ("speaker_id", "diagnosis", "word_id", "path", "annotation",
                   "age_band")


@dataclass(frozen=True)
class ManifestEntry:
    speaker_id: str
    diagnosis: str
    word_id: str
    path: str
    annotation: int = -1      # -1 = unannotated
    age_band: str = ""

    def __post_init__(self):
        if not self.speaker_id or not self.word_id:
            raise ManifestError("speaker_id and word_id must be non-empty")
        if self.diagnosis not in DIAGNOSES:
            raise ManifestError(f"unknown diagnosis {self.diagnosis!r}")


def utterance_id(speaker_id, word_id):
    """Canonical archive key for one spoken word."""
    return f"{speaker_id}__{word_id}"


def load_manifest(path):
    """Parse the tab-separated manifest; CRLF endings are accepted."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if header is None:
                header = fields
                if header[:4] != list(MANIFEST_FIELDS[:4]):
                    raise ManifestError(
                        f"{path}:{lineno}: header must start with "
                        f"{MANIFEST_FIELDS[:4]}, got {header}"
                    )
                extras = header[4:]
                if extras != list(MANIFEST_FIELDS[4:4 + len(extras)]):
                    raise ManifestError(f"{path}:{lineno}: bad optional columns {extras}")
                continue
            if len(fields) != len(header):
                raise ManifestError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}"
                )
            row = dict(zip(header, fields))
            try:
                entries.append(ManifestEntry(
                    row["speaker_id"], row["diagnosis"], row["word_id"], row["path"],
                    int(row["annotation"]) if row.get("annotation", "") != "" else -1,
                    row.get("age_band", ""),
                ))
            except (ManifestError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    if header is None:
        raise ManifestError(f"{path}: empty manifest")
    return entries


def save_manifest(path, entries):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(MANIFEST_FIELDS) + "\n")
        for e in entries:
            annotation = "" if e.annotation < 0 else str(e.annotation)
            fh.write(f"{e.speaker_id}\t{e.diagnosis}\t{e.word_id}\t{e.path}\t"
                     f"{annotation}\t{e.age_band}\n")


def speaker_diagnoses(entries):
    """speaker_id -> diagnosis, verifying consistency across entries."""
    out = {}
    for e in entries:
        if out.setdefault(e.speaker_id, e.diagnosis) != e.diagnosis:
            raise ManifestError(f"speaker {e.speaker_id} has conflicting diagnoses")
    return out


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignment: dict          # speaker_id -> fold index

    def fold_speakers(self, fold):
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def train_speakers(self, fold):
        return sorted(s for s, f in self.assignment.items() if f != fold)


def make_folds(entries, n_folds=5, seed=0):
    """Speaker-disjoint stratified fold assignment, deterministic per seed."""
    diagnoses = speaker_diagnoses(entries)
    by_class = {d: sorted(s for s, dd in diagnoses.items() if dd == d)
                for d in DIAGNOSES}
    for d, speakers in by_class.items():
        if len(speakers) < n_folds:
            raise ValueError(
                f"{len(speakers)} {d} speakers is too few for {n_folds} folds"
            )
    rng = np.random.default_rng(seed)
    assignment = {}
    for d in DIAGNOSES:
        speakers = by_class[d]
        order = rng.permutation(len(speakers))
        for pos, idx in enumerate(order):
            assignment[speakers[idx]] = pos % n_folds
    return FoldPlan(n_folds, assignment)


def check_stratification(plan, entries, tolerance=0.10):
    """Verify each fold's class ratio is within `tolerance` of the global one."""
    diagnoses = speaker_diagnoses(entries)
    total = len(diagnoses)
    global_td = sum(1 for d in diagnoses.values() if d == "TD") / total
    for fold in range(plan.n_folds):
        speakers = plan.fold_speakers(fold)
        td = sum(1 for s in speakers if diagnoses[s] == "TD") / len(speakers)
        if abs(td - global_td) > tolerance:
            return False
    return True


def assemble_subject_utterance(entries, feature_archive):
    """Concatenate one speaker's word features in canonical word_id order."""
    speakers = {e.speaker_id for e in entries}
    if len(speakers) != 1:
        raise ValueError(f"entries span multiple speakers: {sorted(speakers)}")
    speaker = speakers.pop()
    parts = []
    missing = 0
    for e in sorted(entries, key=lambda e: e.word_id):
        utt = utterance_id(e.speaker_id, e.word_id)
        if utt in feature_archive:
            parts.append(feature_archive[utt])
        else:
            missing += 1
    if not parts:
        raise ValueError(f"no features found for speaker {speaker}")
    if missing:
        logger.info("speaker %s: %d of %d words missing from the archive",
                    speaker, missing, missing + len(parts))
    merged = concat_feature_matrices(parts)
    merged.utterance_id = speaker
    return merged


# ---------------------------------------------------------------------------
# Synthetic corpus

@dataclass
class SyntheticSpec:
    n_td: int = 40
    n_ssd: int = 24
    words_per_speaker: int = 30
    substitution_prob: float = 0.3
    feature_dim: int = 20
    attribute_scale: float = 3.0
    residual_scale: float = 1.0
    frame_noise_std: float = 0.45
    speaker_offset_std: float = 1.0
    speaker_rotation: float = 0.005
    frames_per_phone: tuple = (8, 10)
    vowels_per_word: int = 1
    seed: int = 0
    frame_shift: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.substitution_prob <= 1.0:
            raise ValueError("substitution_prob must be in [0, 1]")
        if min(self.n_td, self.n_ssd, self.words_per_speaker) <= 0:
            raise ValueError("speaker and word counts must be positive")


def confusable_partner(phone, inventory, attribute_map):
    """The attribute-closest other consonant: minimal nonzero set difference.

    Models substitution errors that shift one articulatory category, e.g.
    a place shift or de-affrication. Ties break by inventory order.
    """
    own = attribute_map.phone_to_attributes[phone]
    best = None
    best_cost = None
    for other in inventory.phones:
        if other == phone or other not in DEFAULT_INITIALS:
            continue
        cost = len(own ^ attribute_map.phone_to_attributes[other])
        if cost == 0:
            continue
        if best_cost is None or cost < best_cost:
            best, best_cost = other, cost
    if best is None:
        raise ValueError(f"phone {phone!r} has no confusable partner")
    return best


@dataclass
class SyntheticCorpus:
    entries: list             # ManifestEntry per (speaker, word)
    features: dict            # utterance_id -> FeatureMatrix
    frame_labels: dict        # utterance_id -> produced-phone index array
    phone_labels: list        # index -> phone label
    word_initials: dict       # word_id -> canonical initial consonant


def synth_generate(spec):
    """Generate a labeled feature-space corpus of TD and disordered speakers.

    Every speaker utters the same word list. Each word is an initial
    consonant followed by `vowels_per_word` vowels; disordered speakers
    substitute the
    initial with its attribute-confusable partner with probability
    `substitution_prob`, and the word annotation records whether a
    substitution happened. Frames are drawn from per-phone Gaussians and
    passed through a per-speaker channel: a mild random rotation (strength
    `speaker_rotation`) plus an additive offset.
    """
    rng = np.random.default_rng(spec.seed)
    inventory = default_phone_inventory()
    amap = build_attribute_map()
    phones = list(inventory.phones)
    vowels = [p for p in phones if p not in DEFAULT_INITIALS]
    partners = {c: confusable_partner(c, inventory, amap) for c in DEFAULT_INITIALS}

    # Compositional acoustics: each attribute contributes a shared basis
    # vector and a phone's mean is the sum over its attributes plus a small
    # phone-specific residual. Confusable partners therefore differ along a
    # single category axis while unrelated phones differ along several.
    basis = np.zeros((amap.n_attributes, spec.feature_dim))
    for a in range(amap.n_attributes):
        direction = rng.standard_normal(spec.feature_dim)
        basis[a] = spec.attribute_scale * direction / np.linalg.norm(direction)
    phone_means = np.zeros((len(phones), spec.feature_dim))
    for i, phone in enumerate(phones):
        residual = rng.standard_normal(spec.feature_dim)
        phone_means[i] = (basis[sorted(amap.phone_to_attributes[phone])].sum(0)
                          + spec.residual_scale * residual
                          / np.linalg.norm(residual))

    word_ids = [f"w{i:03d}" for i in range(spec.words_per_speaker)]
    word_phones = {}
    word_initials = {}
    for i, word in enumerate(word_ids):
        initial = DEFAULT_INITIALS[i % len(DEFAULT_INITIALS)]
        tail = [vowels[rng.integers(len(vowels))]
                for _ in range(spec.vowels_per_word)]
        word_phones[word] = [initial] + tail
        word_initials[word] = initial

    speakers = ([(f"td{i:03d}", "TD") for i in range(spec.n_td)]
                + [(f"ssd{i:03d}", "SSD") for i in range(spec.n_ssd)])

    entries = []
    features = {}
    frame_labels = {}
    lo, hi = spec.frames_per_phone
    for speaker, diagnosis in speakers:
        offset = spec.speaker_offset_std * rng.standard_normal(spec.feature_dim)
        skew = spec.speaker_rotation * rng.standard_normal((spec.feature_dim,
                                                            spec.feature_dim))
        rotation, _ = np.linalg.qr(np.eye(spec.feature_dim) + skew)
        for word in word_ids:
            produced = []
            annotation = 0
            for pos, phone in enumerate(word_phones[word]):
                if (diagnosis == "SSD" and pos == 0
                        and rng.random() < spec.substitution_prob):
                    phone = partners[phone]
                    annotation = 1
                produced.append(phone)
            frames = []
            labels = []
            for phone in produced:
                n = int(rng.integers(lo, hi + 1))
                idx = phones.index(phone)
                clean = (phone_means[idx]
                         + spec.frame_noise_std
                         * rng.standard_normal((n, spec.feature_dim)))
                frames.append(clean @ rotation.T + offset)
                labels.extend([idx] * n)
            utt = utterance_id(speaker, word)
            features[utt] = FeatureMatrix(np.vstack(frames), spec.frame_shift,
                                          "embedding", utt)
            frame_labels[utt] = np.array(labels, dtype=np.int32)
            entries.append(ManifestEntry(speaker, diagnosis, word, utt, annotation))
    return SyntheticCorpus(entries, features, frame_labels, phones, word_initials)

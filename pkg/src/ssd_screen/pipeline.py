"""Experiment configuration and the speaker-disjoint cross-validation loop.

Every model (posterior classifier, UBM, total-variability matrix, back-end)
is retrained inside each fold so no test speaker's data reaches a training
stage; a guard aborts the run if that property is violated.
"""

import hashlib
import json
from dataclasses import dataclass, fields

import numpy as np

from . import backend as be
from .attributes import (build_attribute_map, default_phone_inventory,
                         lpr_transform, predict_posteriors,
                         train_frame_classifier)
from .corpus import speaker_diagnoses, utterance_id
from .errors import LeakError
from .features import FeatureMatrix, concat_feature_matrices
from .frontend import cmvn as cmvn_op
from .ivector import accumulate_stats, extract_ivector, length_normalize, train_tv, train_ubm

REPRESENTATIONS = ("ivector-mfcc", "ivector-phone-lpr", "ivector-attribute-lpr",
                   "functional")
FUSIONS = ("subject", "word-majority", "phone-stack")
CLASSIFIERS = ("svm", "logreg")


@dataclass
class ExperimentConfig:
    representation: str = "ivector-attribute-lpr"
    lda: bool = True
    classifier: str = "svm"
    fusion: str = "subject"
    n_folds: int = 5
    seed: int = 0
    ubm_components: int = 256
    ivector_rank: int = 100
    ubm_iters: int = 10
    tv_iters: int = 5
    posterior_lr: float = 0.5
    posterior_epochs: int = 150
    cmvn: bool = True          # per-speaker normalization of acoustic features
    cmvn_lpr: bool = False     # additionally normalize LPR features
    length_norm: bool = False
    c_param: float = 1.0
    pair_negative_ratio: float = 1.0

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {self.fusion!r}")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.representation == "functional" and self.fusion == "phone-stack":
            raise ValueError("functional representation has no phone-stack fusion")

    def canonical_text(self):
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def config_hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def parse_config_file(path):
    """Flat ``key = value`` config text; '#' starts a comment line."""
    values = {}
    bools = {"true": True, "false": False}
    field_types = {f.name: f.type for f in fields(ExperimentConfig)}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in field_types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            ftype = field_types[key]
            if ftype == "bool" or ftype is bool:
                if raw.lower() not in bools:
                    raise ValueError(f"{path}:{lineno}: bad boolean {raw!r}")
                values[key] = bools[raw.lower()]
            elif ftype == "int" or ftype is int:
                values[key] = int(raw)
            elif ftype == "float" or ftype is float:
                values[key] = float(raw)
            else:
                values[key] = raw
    return ExperimentConfig(**values)


def _guard(stage, used_speakers, test_speakers):
    overlap = set(used_speakers) & set(test_speakers)
    if overlap:
        raise LeakError(
            f"{stage}: test speakers {sorted(overlap)} reached a training stage"
        )


def plan_to_splits(plan):
    return [(plan.train_speakers(fold), plan.fold_speakers(fold))
            for fold in range(plan.n_folds)]


def _speaker_words(entries):
    """speaker -> list of word ids in canonical order."""
    words = {}
    for e in entries:
        words.setdefault(e.speaker_id, set()).add(e.word_id)
    return {s: sorted(w) for s, w in words.items()}


def derive_word_initials(entries, features, frame_labels, phone_labels, initials):
    """word_id -> canonical initial consonant, from TD first-frame labels."""
    votes = {}
    for e in entries:
        if e.diagnosis != "TD":
            continue
        utt = utterance_id(e.speaker_id, e.word_id)
        if utt not in frame_labels or not len(frame_labels[utt]):
            continue
        phone = phone_labels[frame_labels[utt][0]]
        if phone in initials:
            votes.setdefault(e.word_id, {}).setdefault(phone, 0)
            votes[e.word_id][phone] += 1
    out = {}
    for word, counts in votes.items():
        out[word] = max(sorted(counts), key=lambda p: counts[p])
    return out


def _apply_cmvn(fm, enabled):
    if not enabled or fm.n_frames < 2:
        return fm
    return cmvn_op(fm)[0]


def _speaker_cmvn(entries, features):
    """Normalize each speaker's word features with that speaker's own stats."""
    from .frontend import apply_cmvn as apply_stats
    by_speaker = {}
    for e in entries:
        utt = utterance_id(e.speaker_id, e.word_id)
        if utt in features:
            by_speaker.setdefault(e.speaker_id, []).append(utt)
    out = {}
    for speaker, utts in by_speaker.items():
        merged = concat_feature_matrices([features[u] for u in sorted(utts)])
        _, stats = cmvn_op(merged)
        for u in utts:
            out[u] = apply_stats(features[u], stats)
    return out


def _lpr_features(entries, features, frame_labels, phone_labels, config,
                  train_speakers, test_speakers, fold_seed):
    """Train the frame classifier on TD training speakers, transform everything."""
    inventory = default_phone_inventory()
    if list(inventory.phones) != list(phone_labels):
        raise ValueError("frame-label phone table does not match the inventory")
    amap = build_attribute_map()
    train_td = sorted({e.speaker_id for e in entries
                       if e.diagnosis == "TD" and e.speaker_id in set(train_speakers)})
    _guard("posterior classifier training", train_td, test_speakers)
    train_feats = []
    train_labels = []
    for e in entries:
        if e.speaker_id not in set(train_td):
            continue
        utt = utterance_id(e.speaker_id, e.word_id)
        if utt in features and utt in frame_labels:
            train_feats.append(features[utt])
            train_labels.append(frame_labels[utt])
    task = ("phone_softmax" if config.representation == "ivector-phone-lpr"
            else "attribute_multitask")
    model = train_frame_classifier(
        train_feats, train_labels, inventory, amap, task,
        learning_rate=config.posterior_lr, epochs=config.posterior_epochs,
        seed=fold_seed)
    out = {}
    for utt, fm in features.items():
        out[utt] = lpr_transform(predict_posteriors(model, fm))
    return out


def _extract_ivectors(units, train_ids, test_ids, id_speaker, config, fold_seed):
    """Train UBM and T on the training units, extract i-vectors for all."""
    _guard("UBM training", [id_speaker[u] for u in train_ids], test_ids)
    train_mats = [units[u] for u in train_ids]
    n_comp = config.ubm_components
    total_frames = sum(m.n_frames for m in train_mats)
    while n_comp > 1 and total_frames < 10 * n_comp:
        n_comp //= 2
    ubm = train_ubm(train_mats, n_components=n_comp, n_iters=config.ubm_iters,
                    seed=fold_seed)
    stats = {u: accumulate_stats(ubm, units[u]) for u in units}
    rank = min(config.ivector_rank, ubm.n_components * ubm.dim,
               max(2, len(train_ids) - 1))
    tv = train_tv(ubm, [stats[u] for u in train_ids], rank=rank,
                  n_iters=config.tv_iters, seed=fold_seed)
    ivectors = {}
    for u in units:
        ivec = extract_ivector(tv, stats[u], source_id=u)
        if config.length_norm:
            ivec = length_normalize(ivec)
        ivectors[u] = ivec.w
    return ivectors


def _fit_backend(train_x, train_y, test_x, config, balanced=False):
    train_x = np.asarray(train_x, dtype=np.float64)
    test_x = np.asarray(test_x, dtype=np.float64)
    if config.lda:
        lda = be.lda_fit(train_x, train_y)
        train_x = lda.transform(train_x)
        test_x = lda.transform(test_x)
    weights = None
    if balanced:
        y = np.asarray(train_y)
        weights = {int(c): y.size / (2.0 * np.sum(y == c)) for c in np.unique(y)}
    if config.classifier == "svm":
        model = be.svm_train(train_x, train_y, c_param=config.c_param,
                             class_weights=weights)
    else:
        model = be.logreg_train(train_x, train_y, c_param=config.c_param)
    return model.predict(np.atleast_2d(test_x)), model


def _run_functional(entries, config, train_set, test_set, labels):
    """Paralinguistic route: functional vectors straight from the word audio."""
    from .features import AudioBuffer
    from .frontend import load_wav
    from .paralinguistics import apply_functionals, compute_llds

    by_speaker = {}
    for e in sorted(entries, key=lambda e: (e.speaker_id, e.word_id)):
        by_speaker.setdefault(e.speaker_id, []).append(e.path)

    def speaker_vector(speaker):
        buffers = [load_wav(p) for p in by_speaker[speaker]]
        rates = {b.sample_rate for b in buffers}
        if len(rates) > 1:
            raise ValueError(f"speaker {speaker}: mixed sample rates {sorted(rates)}")
        audio = AudioBuffer(np.concatenate([b.samples for b in buffers]),
                            buffers[0].sample_rate)
        return apply_functionals(compute_llds(audio))

    def standardize(train_x, test_x):
        # functional components mix units (Hz, nats, ratios); z-normalize
        # with training statistics so no single scale dominates the margin
        train_x = np.asarray(train_x, dtype=np.float64)
        test_x = np.asarray(test_x, dtype=np.float64)
        mean = train_x.mean(axis=0)
        std = train_x.std(axis=0)
        std[std == 0] = 1.0
        return (train_x - mean) / std, (test_x - mean) / std

    if config.fusion == "subject":
        train_ids = sorted(train_set)
        test_ids = sorted(test_set)
        _guard("functional back-end training", train_ids, test_ids)
        train_x, test_x = standardize([speaker_vector(s) for s in train_ids],
                                      [speaker_vector(s) for s in test_ids])
        preds, _ = _fit_backend(train_x, [labels[s] for s in train_ids],
                                test_x, config)
        return list(preds), [labels[s] for s in test_ids], test_ids

    # word-majority over per-word functional vectors
    vectors, owners = [], []
    for e in sorted(entries, key=lambda e: (e.speaker_id, e.word_id)):
        buf = load_wav(e.path)
        vectors.append(apply_functionals(compute_llds(buf)))
        owners.append(e.speaker_id)
    train_idx = [i for i, s in enumerate(owners) if s in train_set]
    test_idx = [i for i, s in enumerate(owners) if s in test_set]
    _guard("functional word back-end training",
           [owners[i] for i in train_idx], sorted(test_set))
    train_x, test_x = standardize([vectors[i] for i in train_idx],
                                  [vectors[i] for i in test_idx])
    word_preds, _ = _fit_backend(train_x,
                                 [labels[owners[i]] for i in train_idx],
                                 test_x, config)
    grouped = {}
    for i, p in zip(test_idx, word_preds):
        grouped.setdefault(owners[i], []).append(int(p))
    test_ids = sorted(test_set)
    preds = [be.majority_vote(grouped[s]) for s in test_ids]
    return preds, [labels[s] for s in test_ids], test_ids


def run_fold(entries, features, frame_labels, phone_labels, config,
             train_speakers, test_speakers, fold_seed, word_initials=None):
    """One cross-validation fold; returns (predictions, truths) per test speaker."""
    train_set, test_set = set(train_speakers), set(test_speakers)
    overlap = train_set & test_set
    if overlap:
        raise LeakError(f"fold plan assigns speakers to both sides: {sorted(overlap)}")
    diagnoses = speaker_diagnoses(entries)
    labels = {s: (1 if diagnoses[s] == "SSD" else 0) for s in diagnoses}

    if config.representation == "functional":
        return _run_functional(entries, config, train_set, test_set, labels)

    if config.cmvn:
        features = _speaker_cmvn(entries, features)

    if config.representation in ("ivector-phone-lpr", "ivector-attribute-lpr"):
        feats = _lpr_features(entries, features, frame_labels, phone_labels,
                              config, train_speakers, test_speakers, fold_seed)
        unit_cmvn = config.cmvn_lpr
    else:
        feats = features
        unit_cmvn = False  # speaker-level normalization already applied

    speaker_words = _speaker_words(entries)

    if config.fusion == "subject":
        units = {}
        for speaker in sorted(train_set | test_set):
            parts = [feats[utterance_id(speaker, w)] for w in speaker_words[speaker]
                     if utterance_id(speaker, w) in feats]
            if not parts:
                raise ValueError(f"no features found for speaker {speaker}")
            units[speaker] = _apply_cmvn(concat_feature_matrices(parts), unit_cmvn)
        ivectors = _extract_ivectors(units, sorted(train_set), sorted(test_set),
                                     {s: s for s in units}, config, fold_seed)
        train_ids = sorted(train_set)
        test_ids = sorted(test_set)
        _guard("back-end training", train_ids, test_ids)
        preds, _ = _fit_backend([ivectors[s] for s in train_ids],
                                [labels[s] for s in train_ids],
                                [ivectors[s] for s in test_ids], config)
        return list(preds), [labels[s] for s in test_ids], test_ids

    if config.fusion == "word-majority":
        units = {}
        id_speaker = {}
        for e in entries:
            utt = utterance_id(e.speaker_id, e.word_id)
            if utt in feats:
                units[utt] = _apply_cmvn(feats[utt], unit_cmvn)
                id_speaker[utt] = e.speaker_id
        train_ids = sorted(u for u in units if id_speaker[u] in train_set)
        test_ids_u = sorted(u for u in units if id_speaker[u] in test_set)
        ivectors = _extract_ivectors(units, train_ids, sorted(test_set),
                                     id_speaker, config, fold_seed)
        _guard("word-level back-end training",
               [id_speaker[u] for u in train_ids], sorted(test_set))
        # word-level labels are inherited from the speaker diagnosis; most
        # disordered words are actually produced correctly, so balance the
        # classes to keep the word classifier from collapsing to the majority
        word_preds, _ = _fit_backend(
            [ivectors[u] for u in train_ids],
            [labels[id_speaker[u]] for u in train_ids],
            [ivectors[u] for u in test_ids_u], config, balanced=True)
        by_speaker = {}
        for u, p in zip(test_ids_u, word_preds):
            by_speaker.setdefault(id_speaker[u], []).append(int(p))
        test_ids = sorted(test_set)
        preds = [be.majority_vote(by_speaker[s]) for s in test_ids]
        return preds, [labels[s] for s in test_ids], test_ids

    # phone-stack: pairwise comparison of initial-consonant segment embeddings
    if word_initials is None:
        raise ValueError("phone-stack fusion needs word initial-consonant targets")
    segment = {}
    for e in entries:
        utt = utterance_id(e.speaker_id, e.word_id)
        if utt not in feats or utt not in frame_labels or e.word_id not in word_initials:
            continue
        target = word_initials[e.word_id]
        lab = frame_labels[utt]
        frames = feats[utt].frames
        # segment embedding: mean over the word-initial frames (known alignment)
        n_head = int(np.sum(lab == lab[0])) if lab.size else 0
        emb = frames[:n_head].mean(axis=0) if n_head else frames.mean(axis=0)
        segment.setdefault(e.speaker_id, []).append((target, emb))

    consonant_order = sorted(set(word_initials.values()))
    reference_groups = {}
    ref_owner = {}
    for speaker in sorted(train_set):
        if diagnoses[speaker] != "TD":
            continue
        for cons, emb in segment.get(speaker, []):
            reference_groups.setdefault(cons, []).append(emb)
            ref_owner.setdefault(cons, []).append(speaker)
    _guard("pair classifier training",
           {s for owners in ref_owner.values() for s in owners}, sorted(test_set))
    pair_lr = be.train_pair_classifier(reference_groups, seed=fold_seed,
                                       negative_ratio=config.pair_negative_ratio)

    def stack_for(speaker, exclude_self):
        groups = reference_groups
        if exclude_self:
            groups = {}
            for cons in reference_groups:
                kept = [emb for emb, owner in zip(reference_groups[cons],
                                                  ref_owner[cons])
                        if owner != speaker]
                if kept:
                    groups[cons] = kept
        per_cons = be.pairwise_compare(
            [(c, e) for c, e in segment.get(speaker, []) if c in groups],
            groups, pair_lr)
        return be.stack_accuracies(per_cons, consonant_order).values

    train_ids = sorted(train_set)
    test_ids = sorted(test_set)
    train_x = [stack_for(s, exclude_self=True) for s in train_ids]
    test_x = [stack_for(s, exclude_self=False) for s in test_ids]
    _guard("stack back-end training", train_ids, test_ids)
    preds, _ = _fit_backend(train_x, [labels[s] for s in train_ids], test_x, config)
    return list(preds), [labels[s] for s in test_ids], test_ids


def run_crossval(entries, features, frame_labels, phone_labels, config,
                 splits=None, word_initials=None):
    """Full speaker-disjoint cross-validation; returns the report dict."""
    from .corpus import make_folds  # local import to avoid cycle at module load
    if splits is None:
        plan = make_folds(entries, config.n_folds, config.seed)
        splits = plan_to_splits(plan)
    if (config.fusion == "phone-stack" and word_initials is None
            and frame_labels is not None):
        from .attributes import DEFAULT_INITIALS
        word_initials = derive_word_initials(entries, features, frame_labels,
                                             phone_labels, set(DEFAULT_INITIALS))
    fold_rows = []
    for fold, (train_speakers, test_speakers) in enumerate(splits):
        fold_seed = config.seed * 1009 + fold
        preds, truths, _ = run_fold(entries, features, frame_labels, phone_labels,
                                    config, train_speakers, test_speakers,
                                    fold_seed, word_initials)
        metrics = be.evaluate(preds, truths)
        fold_rows.append({"fold": fold, "uar": metrics.uar,
                          "macro_f1": metrics.macro_f1, "tp": metrics.tp,
                          "fp": metrics.fp, "tn": metrics.tn, "fn": metrics.fn})
    uars = np.array([r["uar"] for r in fold_rows])
    f1s = np.array([r["macro_f1"] for r in fold_rows])
    return {
        "config_hash": config.config_hash(),
        "folds": fold_rows,
        "mean_uar": float(uars.mean()),
        "std_uar": float(uars.std()),
        "mean_macro_f1": float(f1s.mean()),
        "std_macro_f1": float(f1s.std()),
    }


def report_to_json(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def report_to_text(report):
    lines = [f"config {report['config_hash']}"]
    for row in report["folds"]:
        lines.append(f"fold {row['fold']}: UAR={row['uar']:.4f} "
                     f"macroF1={row['macro_f1']:.4f} "
                     f"tp={row['tp']} fp={row['fp']} tn={row['tn']} fn={row['fn']}")
    lines.append(f"mean UAR={report['mean_uar']:.4f} ({report['std_uar']:.4f}) "
                 f"macroF1={report['mean_macro_f1']:.4f} "
                 f"({report['std_macro_f1']:.4f})")
    return "\n".join(lines) + "\n"

"""Command-line orchestration of the screening pipeline.

Exit codes: 0 success, 1 pipeline/validation failure, 2 usage error.
"""

import argparse
import sys

import numpy as np

from . import archive, corpus, frontend, pipeline
from .attributes import (build_attribute_map, default_phone_inventory,
                         ingest_posteriors, lpr_transform, predict_posteriors,
                         train_frame_classifier, FrameClassifier)
from .backend import evaluate as evaluate_metrics
from .backend import lda_fit, logreg_train, svm_train
from .errors import PipelineError
from .ivector import (accumulate_stats, extract_ivector, read_model, train_tv,
                      train_ubm, write_model)


def _save_classifier(path, model):
    np.savez(path, weights=model.weights, bias=model.bias,
             task_kind=model.task_kind, class_names=np.array(model.class_names),
             categories=np.array(model.categories))


def _load_classifier(path):
    data = np.load(path, allow_pickle=False)
    return FrameClassifier(data["weights"], data["bias"], str(data["task_kind"]),
                           tuple(data["class_names"].tolist()),
                           tuple(data["categories"].tolist()))


def _cmd_synth(args):
    spec = corpus.SyntheticSpec(
        n_td=args.n_td, n_ssd=args.n_ssd, words_per_speaker=args.words,
        substitution_prob=args.substitution_prob, feature_dim=args.dim,
        seed=args.seed)
    synth = corpus.synth_generate(spec)
    corpus.save_manifest(args.manifest, synth.entries)
    archive.write_feature_archive(args.features, synth.features)
    archive.write_frame_labels(args.frame_labels, synth.phone_labels,
                               synth.frame_labels)
    print(f"wrote {len(synth.entries)} word utterances for "
          f"{spec.n_td} TD + {spec.n_ssd} SSD speakers")
    return 0


def _cmd_featurize(args):
    entries = corpus.load_manifest(args.manifest)
    config = frontend.FrontendConfig(n_mels=args.n_mels, n_ceps=args.n_ceps)
    out = {}
    for e in entries:
        utt = corpus.utterance_id(e.speaker_id, e.word_id)
        audio = frontend.load_wav(e.path)
        fbank = frontend.compute_filterbank(audio, config, utterance_id=utt)
        out[utt] = (frontend.compute_mfcc(fbank, config.n_ceps)
                    if args.kind == "mfcc" else fbank)
    archive.write_feature_archive(args.out, out)
    print(f"wrote {len(out)} feature matrices to {args.out}")
    return 0


def _cmd_train_posterior(args):
    feats = archive.read_feature_archive(args.features)
    phone_labels, seqs = archive.read_frame_labels(args.frame_labels)
    inventory = default_phone_inventory()
    if list(inventory.phones) != phone_labels:
        raise PipelineError("frame-label phone table does not match the inventory")
    pairs = [(feats[u], seqs[u]) for u in sorted(feats) if u in seqs]
    task = "phone_softmax" if args.task == "phone" else "attribute_multitask"
    model = train_frame_classifier(
        [p[0] for p in pairs], [p[1] for p in pairs], inventory,
        build_attribute_map(), task, learning_rate=args.learning_rate,
        epochs=args.epochs, seed=args.seed)
    _save_classifier(args.out, model)
    print(f"trained {args.task} classifier on {len(pairs)} utterances, "
          f"final loss {model.loss_history[-1]:.6f}")
    return 0


def _cmd_lpr(args):
    if args.model:
        feats = archive.read_feature_archive(args.features)
        model = _load_classifier(args.model)
        posteriors = {u: predict_posteriors(model, feats[u]) for u in feats}
    else:
        posteriors = ingest_posteriors(args.features, normalized=args.normalized)
    out = {u: lpr_transform(posteriors[u], clamp=args.clamp) for u in posteriors}
    archive.write_feature_archive(args.out, out)
    print(f"wrote {len(out)} LPR matrices to {args.out}")
    return 0


def _cmd_train_ubm(args):
    feats = archive.read_feature_archive(args.features)
    ubm = train_ubm([feats[u] for u in sorted(feats)], n_components=args.components,
                    n_iters=args.iters, seed=args.seed)
    write_model(args.out, ubm)
    print(f"trained {ubm.n_components}-component UBM, final log-likelihood "
          f"{ubm.log_likelihood_history[-1]:.2f}")
    return 0


def _cmd_train_tv(args):
    feats = archive.read_feature_archive(args.features)
    ubm, _ = read_model(args.model)
    stats = [accumulate_stats(ubm, feats[u]) for u in sorted(feats)]
    tv = train_tv(ubm, stats, rank=args.rank, n_iters=args.iters, seed=args.seed)
    write_model(args.out, ubm, tv)
    print(f"trained rank-{tv.rank} total-variability matrix")
    return 0


def _cmd_extract(args):
    feats = archive.read_feature_archive(args.features)
    ubm, tv = read_model(args.model)
    if tv is None:
        raise PipelineError(f"{args.model} has no total-variability matrix; "
                            "run train-tv first")
    if args.manifest:
        entries = corpus.load_manifest(args.manifest)
        by_speaker = {}
        for e in entries:
            by_speaker.setdefault(e.speaker_id, []).append(e)
        units = {s: corpus.assemble_subject_utterance(by_speaker[s], feats)
                 for s in sorted(by_speaker)}
    else:
        units = feats
    out = {}
    for uid in sorted(units):
        stats = accumulate_stats(ubm, units[uid])
        out[uid] = extract_ivector(tv, stats, source_id=uid).w
    archive.write_representation_archive(args.out, out, "ivector")
    print(f"extracted {len(out)} i-vectors to {args.out}")
    return 0


def _cmd_train_backend(args):
    vectors, _ = archive.read_representation_archive(args.representations)
    labels = archive.read_label_sidecar(args.labels)
    ids = sorted(u for u in vectors if u in labels)
    x = np.array([vectors[u] for u in ids])
    y = np.array([labels[u] for u in ids])
    saved = {}
    if args.lda:
        lda = lda_fit(x, y)
        x = lda.transform(x)
        saved["lda_projection"] = lda.projection
    model = (svm_train(x, y, c_param=args.c_param) if args.classifier == "svm"
             else logreg_train(x, y, c_param=args.c_param))
    saved.update(weights=model.weights, bias=np.array(model.bias),
                 classifier=args.classifier)
    np.savez(args.out, **saved)
    print(f"trained {args.classifier} back-end on {len(ids)} representations")
    return 0


def _cmd_evaluate(args):
    vectors, _ = archive.read_representation_archive(args.representations)
    labels = archive.read_label_sidecar(args.labels)
    data = np.load(args.backend, allow_pickle=False)
    ids = sorted(u for u in vectors if u in labels)
    x = np.array([vectors[u] for u in ids])
    if "lda_projection" in data:
        x = x @ data["lda_projection"]
    preds = (x @ data["weights"] + float(data["bias"]) >= 0).astype(int)
    truths = np.array([labels[u] for u in ids])
    metrics = evaluate_metrics(preds, truths)
    report = {"uar": metrics.uar, "macro_f1": metrics.macro_f1,
              "tp": metrics.tp, "fp": metrics.fp, "tn": metrics.tn,
              "fn": metrics.fn}
    text = pipeline.report_to_json({"config_hash": "single", "folds": [dict(fold=0, **report)],
                                    "mean_uar": metrics.uar, "std_uar": 0.0,
                                    "mean_macro_f1": metrics.macro_f1,
                                    "std_macro_f1": 0.0})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(f"UAR={metrics.uar:.4f} macroF1={metrics.macro_f1:.4f}")
    return 0


def _cmd_crossval(args):
    config = pipeline.parse_config_file(args.config)
    entries = corpus.load_manifest(args.manifest)
    features = (archive.read_feature_archive(args.features)
                if args.features else None)
    if args.frame_labels:
        phone_labels, frame_labels = archive.read_frame_labels(args.frame_labels)
    else:
        phone_labels, frame_labels = None, None
    report = pipeline.run_crossval(entries, features, frame_labels, phone_labels,
                                   config)
    text = pipeline.report_to_json(report)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(pipeline.report_to_text(report), end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ssd-screen",
        description="Subject-level speech sound disorder screening pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--frame-labels", required=True)
    p.add_argument("--n-td", type=int, default=40)
    p.add_argument("--n-ssd", type=int, default=24)
    p.add_argument("--words", type=int, default=30)
    p.add_argument("--substitution-prob", type=float, default=0.3)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("featurize", help="compute filter-bank/MFCC features from WAVs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["filterbank", "mfcc"], default="filterbank")
    p.add_argument("--n-mels", type=int, default=80)
    p.add_argument("--n-ceps", type=int, default=20)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train-posterior", help="train the frame posterior classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--frame-labels", required=True)
    p.add_argument("--task", choices=["phone", "attribute"], default="attribute")
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_posterior)

    p = sub.add_parser("lpr", help="log-posterior-ratio features from posteriors")
    p.add_argument("--features", required=True,
                   help="feature archive of inputs (posteriors unless --model)")
    p.add_argument("--model", help="posterior classifier to apply first")
    p.add_argument("--out", required=True)
    p.add_argument("--clamp", type=float, default=1e-6)
    p.add_argument("--normalized", action="store_true",
                   help="require ingested posterior rows to sum to 1")
    p.set_defaults(func=_cmd_lpr)

    p = sub.add_parser("train-ubm", help="EM-train the GMM-UBM")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--components", type=int, default=256)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_ubm)

    p = sub.add_parser("train-tv", help="EM-train the total-variability matrix")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int, default=100)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_tv)

    p = sub.add_parser("extract", help="extract i-vectors")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest",
                   help="assemble per-speaker long utterances before extraction")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train-backend", help="train LDA + SVM/LR back-end")
    p.add_argument("--representations", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", choices=["svm", "logreg"], default="svm")
    p.add_argument("--lda", action="store_true")
    p.add_argument("--c-param", type=float, default=1.0)
    p.set_defaults(func=_cmd_train_backend)

    p = sub.add_parser("evaluate", help="score representations against labels")
    p.add_argument("--representations", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("crossval", help="end-to-end speaker-disjoint cross-validation")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features")
    p.add_argument("--frame-labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_crossval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

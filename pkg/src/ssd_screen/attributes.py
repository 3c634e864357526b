"""Speech attributes, frame posterior classifiers and the LPR transform.

Ships a built-in Cantonese attribute table (6 manner + 2 aspiration +
7 place classes plus vowel/semi-vowel) over a 33-phone inventory, a
frame-wise linear multi-task classifier producing posteriors, and the
log-posterior-ratio transform LPR(p) = log(p / (1 - p)).
"""

from dataclasses import dataclass, field

import numpy as np

from .archive import read_feature_archive
from .errors import ArchiveFormatError
from .features import FeatureMatrix

MANNER = "manner"
ASPIRATION = "aspiration"
PLACE = "place"
VOWEL = "vowel"

# (category, attribute, phones) -- the built-in Cantonese grouping.
DEFAULT_ATTRIBUTE_TABLE = [
    (MANNER, "Plosive", ["p", "pʰ", "t", "tʰ", "k", "kʰ", "kʷ", "kʷʰ"]),
    (MANNER, "Nasal", ["m", "n", "ŋ"]),
    (MANNER, "Affricate", ["ts", "tsʰ"]),
    (MANNER, "Fricative", ["s", "f", "h"]),
    (MANNER, "Glide", ["j", "w"]),
    (MANNER, "Liquid", ["l"]),
    (ASPIRATION, "Aspirated", ["pʰ", "tʰ", "kʰ", "kʷʰ", "tsʰ"]),
    (ASPIRATION, "Unaspirated", ["p", "t", "k", "kʷ", "ts"]),
    (PLACE, "Alveolar", ["t", "tʰ", "ts", "tsʰ", "s", "j"]),
    (PLACE, "Lateral", ["l"]),
    (PLACE, "Labial", ["p", "pʰ", "w", "m"]),
    (PLACE, "Velar", ["k", "kʰ", "ŋ"]),
    (PLACE, "Labio-Velar", ["kʷ", "kʷʰ"]),
    (PLACE, "Labio-Dental", ["f"]),
    (PLACE, "Vocal", ["h"]),
    (VOWEL, "Vowel/Semi-vowel",
     ["aː", "iː", "ɛː", "e", "œː", "œ", "ɔː", "o", "uː", "yː", "ɐ", "ɪ", "ɵ", "ʊ"]),
]

DEFAULT_INITIALS = ["p", "pʰ", "t", "tʰ", "k", "kʰ", "kʷ", "kʷʰ", "m", "n", "ŋ",
                    "ts", "tsʰ", "s", "f", "h", "j", "w", "l"]
DEFAULT_VOWELS = ["aː", "iː", "ɛː", "e", "œː", "œ", "ɔː", "o", "uː", "yː",
                  "ɐ", "ɪ", "ɵ", "ʊ"]
# 19 initials + 14 vowels = 33 classes
DEFAULT_PHONES = DEFAULT_INITIALS + DEFAULT_VOWELS


@dataclass(frozen=True)
class PhoneInventory:
    phones: tuple

    def __post_init__(self):
        object.__setattr__(self, "phones", tuple(self.phones))
        if len(set(self.phones)) != len(self.phones):
            raise ValueError("phone labels must be unique")
        if not self.phones:
            raise ValueError("phone inventory is empty")

    def index(self, phone):
        return self.phones.index(phone)

    def __len__(self):
        return len(self.phones)


def default_phone_inventory():
    return PhoneInventory(DEFAULT_PHONES)


@dataclass(frozen=True)
class AttributeMap:
    """Ordered attribute names with category tags and the phone membership map."""

    attributes: tuple
    categories: tuple
    phone_to_attributes: dict

    def attribute_index(self, name):
        return self.attributes.index(name)

    def attributes_of(self, phone):
        """Attribute names for a phone, in canonical attribute order."""
        idx = self.phone_to_attributes[phone]
        return [self.attributes[i] for i in sorted(idx)]

    def indicator(self, phone):
        """Binary membership vector over the 16 attributes."""
        row = np.zeros(len(self.attributes))
        row[sorted(self.phone_to_attributes[phone])] = 1.0
        return row

    @property
    def n_attributes(self):
        return len(self.attributes)


def build_attribute_map(definition=None):
    """Validate an attribute table into an AttributeMap.

    `definition` is a list of (category, attribute, phones); defaults to the
    built-in Cantonese table. A phone may carry at most one manner, one
    aspiration and one place; vowels carry only the vowel/semi-vowel class.
    """
    if definition is None:
        definition = DEFAULT_ATTRIBUTE_TABLE
    attributes = []
    categories = []
    phone_map = {}
    for category, attribute, phones in definition:
        if attribute in attributes:
            raise ValueError(f"duplicate attribute {attribute!r}")
        attr_idx = len(attributes)
        attributes.append(attribute)
        categories.append(category)
        for phone in phones:
            phone_map.setdefault(phone, set()).add(attr_idx)
    for phone, idx in phone_map.items():
        per_category = {}
        for i in idx:
            per_category.setdefault(categories[i], []).append(attributes[i])
        for cat in (MANNER, ASPIRATION, PLACE):
            if len(per_category.get(cat, [])) > 1:
                raise ValueError(
                    f"phone {phone!r} assigned multiple {cat} classes: "
                    f"{sorted(per_category[cat])}"
                )
        if VOWEL in per_category and len(per_category) > 1:
            raise ValueError(f"vowel {phone!r} also carries consonant attributes")
    return AttributeMap(tuple(attributes), tuple(categories),
                        {p: frozenset(s) for p, s in phone_map.items()})


def load_attribute_table(path):
    """Parse the ``category<TAB>attribute<TAB>phone,phone,...`` text format."""
    definition = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            phones = [p for p in parts[2].split(",") if p]
            definition.append((parts[0], parts[1], phones))
    return build_attribute_map(definition)


def save_attribute_table(path, definition=None):
    if definition is None:
        definition = DEFAULT_ATTRIBUTE_TABLE
    with open(path, "w", encoding="utf-8") as fh:
        for category, attribute, phones in definition:
            fh.write(f"{category}\t{attribute}\t{','.join(phones)}\n")


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class FrameClassifier:
    """Frame-wise linear classifier: one phone softmax, or one softmax per
    attribute category (manner, aspiration, place, vowel).

    For the attribute task the output layer has one row per attribute plus
    one "other" row per category (a vowel has no manner, so its manner
    target is "other"); `categories` records the category tag of each
    attribute so the grouping can be rebuilt after deserialization.
    """

    weights: np.ndarray  # (n_out, D)
    bias: np.ndarray     # (n_out,)
    task_kind: str       # "phone_softmax" or "attribute_multitask"
    class_names: tuple
    categories: tuple = ()
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.categories = tuple(self.categories)
        if self.task_kind not in ("phone_softmax", "attribute_multitask"):
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite classifier parameters")
        if self.task_kind == "attribute_multitask":
            if len(self.categories) != len(self.class_names):
                raise ValueError("attribute task needs one category per attribute")
            n_out = len(self.class_names) + len(dict.fromkeys(self.categories))
            if self.weights.shape[0] != n_out:
                raise ValueError(
                    f"attribute task expects {n_out} output rows "
                    f"(attributes + one 'other' per category), got "
                    f"{self.weights.shape[0]}"
                )

    @property
    def input_dim(self):
        return self.weights.shape[1]

    def category_groups(self):
        """Output-row indices per category: ([attribute rows...], other_row)."""
        order = list(dict.fromkeys(self.categories))
        groups = []
        for g, cat in enumerate(order):
            rows = [i for i, c in enumerate(self.categories) if c == cat]
            groups.append((rows, len(self.class_names) + g))
        return groups


def _stack_training_data(features, frame_labels):
    xs, ys = [], []
    for fm, labels in zip(features, frame_labels):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[0] != fm.n_frames:
            raise ValueError(
                f"{fm.utterance_id or '<utterance>'}: {labels.shape[0]} labels "
                f"for {fm.n_frames} frames"
            )
        xs.append(fm.frames)
        ys.append(labels)
    if not xs:
        raise ValueError("empty training set")
    return np.vstack(xs), np.concatenate(ys)


def train_frame_classifier(features, frame_labels, inventory, attribute_map=None,
                           task_kind="phone_softmax", learning_rate=0.5,
                           epochs=200, seed=0):
    """Train the frame classifier by deterministic full-batch gradient descent.

    Cross-entropy objective: one softmax over the phone inventory, or one
    softmax per attribute category (a phone's target in each category is
    the attribute it carries there, or "other" if it carries none, as for
    vowels in the consonant categories). The step size is halved whenever a
    step would increase the loss, so the recorded per-epoch loss is
    non-increasing.
    """
    x, y = _stack_training_data(features, frame_labels)
    if y.min() < 0 or y.max() >= len(inventory):
        bad = y[(y < 0) | (y >= len(inventory))][0]
        raise ValueError(f"frame label {bad} outside the {len(inventory)}-phone inventory")

    if task_kind == "phone_softmax":
        if np.unique(y).size < 2:
            raise ValueError("phone task needs at least 2 distinct labels")
        n_out = len(inventory)
        class_names = tuple(inventory.phones)
        categories = ()
        group_cols = [np.arange(n_out)]
        group_targets = [y]
    elif task_kind == "attribute_multitask":
        if attribute_map is None:
            raise ValueError("attribute task needs an AttributeMap")
        class_names = tuple(attribute_map.attributes)
        categories = tuple(attribute_map.categories)
        order = list(dict.fromkeys(categories))
        n_attr = len(class_names)
        n_out = n_attr + len(order)
        indicator = np.array([attribute_map.indicator(p) for p in inventory.phones])
        frame_ind = indicator[y]          # (n, n_attr) membership per frame
        group_cols = []
        group_targets = []
        for g, cat in enumerate(order):
            rows = [i for i, c in enumerate(categories) if c == cat]
            cols = np.array(rows + [n_attr + g])
            # target = position of the carried attribute within the group,
            # or the trailing "other" class when none is carried
            member = frame_ind[:, rows]
            tg = np.where(member.any(axis=1), member.argmax(axis=1), len(rows))
            group_cols.append(cols)
            group_targets.append(tg)
    else:
        raise ValueError(f"unknown task_kind {task_kind!r}")

    rng = np.random.default_rng(seed)
    dim = x.shape[1]
    weights = 0.01 * rng.standard_normal((n_out, dim))
    bias = np.zeros(n_out)
    n = x.shape[0]

    def loss_and_grad(w, b):
        z = x @ w.T + b
        loss = 0.0
        delta = np.zeros_like(z)
        for cols, tg in zip(group_cols, group_targets):
            zg = z[:, cols]
            zmax = zg.max(axis=1, keepdims=True)
            logsumexp = zmax[:, 0] + np.log(np.exp(zg - zmax).sum(axis=1))
            loss += (logsumexp - zg[np.arange(n), tg]).mean()
            dg = _softmax(zg)
            dg[np.arange(n), tg] -= 1.0
            delta[:, cols] = dg
        gw = delta.T @ x / n
        gb = delta.mean(axis=0)
        return loss, gw, gb

    step = learning_rate
    loss, gw, gb = loss_and_grad(weights, bias)
    history = [loss]
    for _ in range(epochs):
        while True:
            new_w = weights - step * gw
            new_b = bias - step * gb
            new_loss, new_gw, new_gb = loss_and_grad(new_w, new_b)
            if new_loss <= loss or step < 1e-12:
                break
            step *= 0.5
        weights, bias = new_w, new_b
        loss, gw, gb = new_loss, new_gw, new_gb
        history.append(loss)
    return FrameClassifier(weights, bias, task_kind, class_names, categories,
                           history)


def predict_posteriors(model, features):
    """Per-frame posteriors from a trained classifier."""
    if features.dim != model.input_dim:
        raise ValueError(
            f"feature dim {features.dim} != classifier input dim {model.input_dim}"
        )
    z = features.frames @ model.weights.T + model.bias
    if model.task_kind == "phone_softmax":
        post = _softmax(z)
    else:
        post = np.empty((z.shape[0], len(model.class_names)))
        for rows, other in model.category_groups():
            cols = np.array(rows + [other])
            post[:, rows] = _softmax(z[:, cols])[:, :-1]
    return FeatureMatrix(post, features.frame_shift, "posterior", features.utterance_id)


def lpr_transform(posteriors, clamp=1e-6):
    """log(p / (1 - p)) per entry, after clamping p into [clamp, 1 - clamp]."""
    p = posteriors.frames
    if np.any(p < 0) or np.any(p > 1):
        t, c = np.unravel_index(np.argmax(np.abs(p - 0.5)), p.shape)
        raise ValueError(f"posterior entry {p[t, c]} at frame {t}, class {c} "
                         "outside [0, 1]")
    p = np.clip(p, clamp, 1.0 - clamp)
    lpr = np.log(p) - np.log1p(-p)
    return FeatureMatrix(lpr, posteriors.frame_shift, "lpr", posteriors.utterance_id)


def ingest_posteriors(path, normalized=False):
    """Load posterior matrices from a feature archive, validating invariants.

    With `normalized=True` each frame must additionally sum to 1 (phone-task
    posteriors); attribute-task entries are only range-checked.
    """
    matrices = read_feature_archive(path)
    for utt_id, fm in matrices.items():
        if fm.feature_kind != "posterior":
            raise ArchiveFormatError(
                f"{utt_id}: expected kind 'posterior', got {fm.feature_kind!r}"
            )
        p = fm.frames
        bad = (p < 0) | (p > 1)
        if np.any(bad):
            t, c = np.argwhere(bad)[0]
            raise ArchiveFormatError(
                f"{utt_id}: posterior entry {p[t, c]} at frame {t}, class {c} "
                "outside [0, 1]"
            )
        if normalized:
            sums = p.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-6):
                t = int(np.argmax(np.abs(sums - 1.0)))
                raise ArchiveFormatError(
                    f"{utt_id}: frame {t} posterior sum {sums[t]:.8f} != 1"
                )
    return matrices

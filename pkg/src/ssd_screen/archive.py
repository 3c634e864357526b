"""Binary archive formats shared across the pipeline.

Feature archive (magic ``SSDF``, version 1), little-endian:

    magic[4] version:u8 n_entries:u32
    per entry: id_len:u16 id:utf8 kind:u8 frame_shift:f64 T:u32 D:u32
               data: T*D float32, row-major

Representation archive (magic ``SSDR``, version 1):

    magic[4] version:u8 n_entries:u32
    per entry: id_len:u16 id:utf8 kind:u8 dim:u32 data: dim float64

Frame-label archive (magic ``SSDL``, version 1):

    magic[4] version:u8 n_labels:u16 [label_len:u16 label:utf8]... n_entries:u32
    per entry: id_len:u16 id:utf8 T:u32 indices: T int32

Label sidecar: UTF-8 text, one ``id<TAB>label`` line per speaker.
"""

import struct

import numpy as np

from .errors import ArchiveFormatError
from .features import FEATURE_KINDS, FeatureMatrix

FEATURE_MAGIC = b"SSDF"
REPR_MAGIC = b"SSDR"
LABEL_MAGIC = b"SSDL"
VERSION = 1

REPRESENTATION_KINDS = ("ivector", "functional", "accuracy_stack", "embedding")


def _write_str(fh, s):
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise ArchiveFormatError(f"id too long: {len(data)} bytes")
    fh.write(struct.pack("<H", len(data)))
    fh.write(data)


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise ArchiveFormatError(f"truncated archive while reading {what}")
    return data


def _read_str(fh, what):
    (n,) = struct.unpack("<H", _read_exact(fh, 2, what))
    return _read_exact(fh, n, what).decode("utf-8")


def _read_header(fh, magic, path):
    got = fh.read(4)
    if got != magic:
        raise ArchiveFormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<B", _read_exact(fh, 1, "version"))
    if version != VERSION:
        raise ArchiveFormatError(f"{path}: unsupported version {version}")


def write_feature_archive(path, matrices):
    """Write utterance_id -> FeatureMatrix mapping to `path`."""
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<BI", VERSION, len(matrices)))
        for utt_id in matrices:
            fm = matrices[utt_id]
            _write_str(fh, utt_id)
            fh.write(struct.pack("<Bd", FEATURE_KINDS.index(fm.feature_kind), fm.frame_shift))
            fh.write(struct.pack("<II", fm.n_frames, fm.dim))
            fh.write(np.ascontiguousarray(fm.frames, dtype="<f4").tobytes())


def read_feature_archive(path):
    """Read a feature archive back into an ordered dict of FeatureMatrix."""
    out = {}
    with open(path, "rb") as fh:
        _read_header(fh, FEATURE_MAGIC, path)
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        for _ in range(count):
            utt_id = _read_str(fh, "utterance id")
            kind_code, frame_shift = struct.unpack("<Bd", _read_exact(fh, 9, utt_id))
            if kind_code >= len(FEATURE_KINDS):
                raise ArchiveFormatError(f"{utt_id}: unknown kind code {kind_code}")
            n_frames, dim = struct.unpack("<II", _read_exact(fh, 8, utt_id))
            raw = _read_exact(fh, 4 * n_frames * dim, f"frames of {utt_id}")
            frames = np.frombuffer(raw, dtype="<f4").reshape(n_frames, dim)
            out[utt_id] = FeatureMatrix(
                frames.astype(np.float64), frame_shift, FEATURE_KINDS[kind_code], utt_id
            )
    return out


def write_representation_archive(path, vectors, kind):
    """Write id -> 1-D vector mapping; `kind` names the representation type."""
    code = REPRESENTATION_KINDS.index(kind)
    with open(path, "wb") as fh:
        fh.write(REPR_MAGIC)
        fh.write(struct.pack("<BI", VERSION, len(vectors)))
        for rid in vectors:
            vec = np.asarray(vectors[rid], dtype=np.float64).ravel()
            _write_str(fh, rid)
            fh.write(struct.pack("<BI", code, vec.size))
            fh.write(vec.astype("<f8").tobytes())


def read_representation_archive(path):
    """Return (vectors dict, kind)."""
    out = {}
    kinds = set()
    with open(path, "rb") as fh:
        _read_header(fh, REPR_MAGIC, path)
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        for _ in range(count):
            rid = _read_str(fh, "representation id")
            code, dim = struct.unpack("<BI", _read_exact(fh, 5, rid))
            if code >= len(REPRESENTATION_KINDS):
                raise ArchiveFormatError(f"{rid}: unknown representation kind {code}")
            kinds.add(REPRESENTATION_KINDS[code])
            raw = _read_exact(fh, 8 * dim, f"vector of {rid}")
            out[rid] = np.frombuffer(raw, dtype="<f8").copy()
    if len(kinds) > 1:
        raise ArchiveFormatError(f"{path}: mixed representation kinds {sorted(kinds)}")
    kind = kinds.pop() if kinds else None
    return out, kind


def write_frame_labels(path, phone_labels, label_seqs):
    """Write per-utterance integer frame labels plus the phone label table."""
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<BH", VERSION, len(phone_labels)))
        for label in phone_labels:
            _write_str(fh, label)
        fh.write(struct.pack("<I", len(label_seqs)))
        for utt_id in label_seqs:
            seq = np.asarray(label_seqs[utt_id], dtype="<i4")
            if seq.size and (seq.min() < 0 or seq.max() >= len(phone_labels)):
                raise ArchiveFormatError(f"{utt_id}: label index out of range")
            _write_str(fh, utt_id)
            fh.write(struct.pack("<I", seq.size))
            fh.write(seq.tobytes())


def read_frame_labels(path):
    """Return (phone label list, dict utterance_id -> int array)."""
    with open(path, "rb") as fh:
        _read_header(fh, LABEL_MAGIC, path)
        (n_labels,) = struct.unpack("<H", _read_exact(fh, 2, "label count"))
        phone_labels = [_read_str(fh, "phone label") for _ in range(n_labels)]
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        seqs = {}
        for _ in range(count):
            utt_id = _read_str(fh, "utterance id")
            (n,) = struct.unpack("<I", _read_exact(fh, 4, utt_id))
            raw = _read_exact(fh, 4 * n, f"labels of {utt_id}")
            seq = np.frombuffer(raw, dtype="<i4").copy()
            if seq.size and (seq.min() < 0 or seq.max() >= n_labels):
                raise ArchiveFormatError(f"{utt_id}: label index out of range")
            seqs[utt_id] = seq
    return phone_labels, seqs


def write_label_sidecar(path, labels):
    """Write the ``id<TAB>label`` sidecar."""
    with open(path, "w", encoding="utf-8") as fh:
        for rid in labels:
            fh.write(f"{rid}\t{labels[rid]}\n")


def read_label_sidecar(path):
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ArchiveFormatError(f"{path}:{lineno}: expected id<TAB>label")
            labels[parts[0]] = int(parts[1])
    return labels

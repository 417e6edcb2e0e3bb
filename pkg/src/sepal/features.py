"""Feature assembly: one atomic rule in, one encoded example out.

The wide side is a sparse index set: one-hot ids for the four rule fields,
the six subject flags, the privilege bucket, and four crossed features
hashed into a fixed bucket space. The deep side is four dense lookup ids for
the embedding tables plus the subject unit's two comment vectors. Encoding
is a pure function of its inputs; out-of-vocabulary names and missing
lookups degrade to reserved values instead of failing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .docvec import DocVector
from .policy import ALLOW, AtomicRule, PolicyDb
from .uids import UidBucket

DEFAULT_HASH_BUCKETS = 1 << 18
DEFAULT_UNTRUSTED = ("untrusted_app_all", "untrusted_app", "isolated_app")

FLAG_NAMES = ("domain", "mls", "core", "app", "net", "untrusted")
_FLAG_ATTRS = {
    "domain": "domain",
    "mls": "mlstrustedsubject",
    "core": "coredomain",
    "app": "appdomain",
    "net": "netdomain",
}

_UID_INDEX = {b: i for i, b in enumerate(UidBucket)}

COMMENT_DIM = 300


@dataclass(frozen=True)
class FlagSet:
    domain: bool = False
    mls: bool = False
    core: bool = False
    app: bool = False
    net: bool = False
    untrusted: bool = False

    def bits(self) -> str:
        return "".join("1" if getattr(self, n) else "0" for n in FLAG_NAMES)

    def as_byte(self) -> int:
        return int(self.bits(), 2)

    @classmethod
    def from_byte(cls, b: int) -> "FlagSet":
        bits = format(b, "06b")
        return cls(**{n: bit == "1" for n, bit in zip(FLAG_NAMES, bits)})


FIELDS = ("subject", "target", "klass", "perm")


@dataclass(frozen=True)
class Vocabulary:
    """Dense indices per field, built from training atomics only.
    Index 0 is reserved for names unseen in training."""

    subject: dict[str, int]
    target: dict[str, int]
    klass: dict[str, int]
    perm: dict[str, int]

    def sizes(self) -> tuple[int, int, int, int]:
        return (len(self.subject) + 1, len(self.target) + 1, len(self.klass) + 1, len(self.perm) + 1)


def build_vocab(train: set[AtomicRule]) -> Vocabulary:
    cols: dict[str, dict[str, int]] = {f: {} for f in FIELDS}
    for field_name in FIELDS:
        values = sorted({getattr(a, field_name) for a in train})
        cols[field_name] = {v: i + 1 for i, v in enumerate(values)}
    return Vocabulary(cols["subject"], cols["target"], cols["klass"], cols["perm"])


@dataclass(frozen=True)
class EncodedExample:
    wide_indices: tuple[int, ...]  # sorted, unique
    deep_ids: tuple[int, int, int, int]
    flags: FlagSet
    uid: UidBucket
    allow_vec: np.ndarray
    neverallow_vec: np.ndarray
    label: int  # 1 = allow, 0 = neverallow


# --- hashing -----------------------------------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a; chosen for portability and bit-exact reproducibility."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def crossed_index(kind: str, parts: tuple[str, ...], hash_buckets: int) -> int:
    return fnv1a64(kind + ":" + "|".join(parts)) % hash_buckets


# --- the encoder --------------------------------------------------------------


class Encoder:
    """Holds everything encoding needs so one atomic can be encoded at a time.

    `unit_map` redirects a subject to the TE unit its comments live under
    when the two names differ (several domains declared in one TE file).
    """

    def __init__(
        self,
        db: PolicyDb,
        vocab: Vocabulary,
        uid_map: dict[str, UidBucket] | None = None,
        doc_vecs: list[DocVector] | None = None,
        hash_buckets: int = DEFAULT_HASH_BUCKETS,
        untrusted_names: tuple[str, ...] = DEFAULT_UNTRUSTED,
        unit_map: dict[str, str] | None = None,
    ):
        self.db = db
        self.vocab = vocab
        self.uid_map = uid_map or {}
        self.hash_buckets = hash_buckets
        self.untrusted_names = untrusted_names
        self.unit_map = unit_map or {}
        self._vectors: dict[tuple[str, str], np.ndarray] = {}
        for dv in doc_vecs or []:
            self._vectors[(dv.unit, dv.polarity)] = np.asarray(dv.vector, dtype=np.float32)
        self._zero = np.zeros(COMMENT_DIM, dtype=np.float32)
        self._flag_members = self._resolve_flag_sets()
        ns, nt, nc, np_ = vocab.sizes()
        self._offsets = _wide_offsets(hash_buckets, (ns, nt, nc, np_))
        self.wide_dim = self._offsets[-1]

    def _resolve_flag_sets(self) -> dict[str, frozenset[str]]:
        out: dict[str, frozenset[str]] = {}
        for flag, attr in _FLAG_ATTRS.items():
            if attr in self.db.attributes:
                out[flag] = self.db.resolve_attr(attr)
            else:
                out[flag] = frozenset()
        # Only attribute membership counts: a bare type named in the list
        # contributes nothing unless some policy declares it as an attribute.
        untrusted: set[str] = set()
        for name in self.untrusted_names:
            if name in self.db.attributes:
                untrusted |= self.db.resolve_attr(name)
        out["untrusted"] = frozenset(untrusted)
        return out

    def flags_for(self, subject: str) -> FlagSet:
        return FlagSet(**{flag: subject in members for flag, members in self._flag_members.items()})

    def _vector(self, subject: str, polarity: str) -> np.ndarray:
        unit = self.unit_map.get(subject, subject)
        return self._vectors.get((unit, polarity), self._zero)

    def encode(self, atomic: AtomicRule) -> EncodedExample:
        flags = self.flags_for(atomic.subject)
        uid = self.uid_map.get(atomic.subject, UidBucket.UNKNOWN)
        deep_ids = (
            self.vocab.subject.get(atomic.subject, 0),
            self.vocab.target.get(atomic.target, 0),
            self.vocab.klass.get(atomic.klass, 0),
            self.vocab.perm.get(atomic.perm, 0),
        )
        hb = self.hash_buckets
        off = self._offsets
        wide = {
            crossed_index("tc", (atomic.target, atomic.klass), hb),
            crossed_index("cp", (atomic.klass, atomic.perm), hb),
            crossed_index("tcp", (atomic.target, atomic.klass, atomic.perm), hb),
            crossed_index("sf", (atomic.subject, flags.bits()), hb),
            off[0] + deep_ids[0],
            off[1] + deep_ids[1],
            off[2] + deep_ids[2],
            off[3] + deep_ids[3],
        }
        for i, name in enumerate(FLAG_NAMES):
            if getattr(flags, name):
                wide.add(off[4] + i)
        wide.add(off[5] + _UID_INDEX[uid])
        return EncodedExample(
            wide_indices=tuple(sorted(wide)),
            deep_ids=deep_ids,
            flags=flags,
            uid=uid,
            allow_vec=self._vector(atomic.subject, "allow"),
            neverallow_vec=self._vector(atomic.subject, "neverallow"),
            label=1 if atomic.label == ALLOW else 0,
        )

    def encode_all(self, atomics) -> list[EncodedExample]:
        return [self.encode(a) for a in atomics]


def _wide_offsets(hash_buckets: int, vocab_sizes: tuple[int, int, int, int]) -> tuple[int, ...]:
    ns, nt, nc, np_ = vocab_sizes
    o_subject = hash_buckets
    o_target = o_subject + ns
    o_klass = o_target + nt
    o_perm = o_klass + nc
    o_flags = o_perm + np_
    o_uid = o_flags + len(FLAG_NAMES)
    total = o_uid + len(UidBucket)
    return (o_subject, o_target, o_klass, o_perm, o_flags, o_uid, total)


# --- binary record file --------------------------------------------------------
#
# Layout (all little-endian):
#   header: magic "SEPF", version u16, hash_buckets u32,
#           subject/target/class/perm vocab sizes u32 each
#   record: n_wide u16, n_wide x u32 wide indices,
#           4 x u32 deep ids, flags u8, uid u8, label u8,
#           300 x f32 allow vector, 300 x f32 neverallow vector

SEPF_MAGIC = b"SEPF"
SEPF_VERSION = 1

_UID_LIST = list(UidBucket)


def write_examples(path, examples: list[EncodedExample], hash_buckets: int, vocab: Vocabulary) -> None:
    import struct

    with open(path, "wb") as fh:
        fh.write(SEPF_MAGIC)
        fh.write(struct.pack("<HI4I", SEPF_VERSION, hash_buckets, *vocab.sizes()))
        for ex in examples:
            fh.write(struct.pack("<H", len(ex.wide_indices)))
            fh.write(struct.pack(f"<{len(ex.wide_indices)}I", *ex.wide_indices))
            fh.write(struct.pack("<4I", *ex.deep_ids))
            fh.write(struct.pack("<3B", ex.flags.as_byte(), _UID_LIST.index(ex.uid), ex.label))
            fh.write(np.asarray(ex.allow_vec, dtype="<f4").tobytes())
            fh.write(np.asarray(ex.neverallow_vec, dtype="<f4").tobytes())


def read_examples(path) -> tuple[list[EncodedExample], int, tuple[int, int, int, int]]:
    import struct

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SEPF_MAGIC:
            raise ValueError(f"not an encoded-example file: bad magic {magic!r}")
        version, hash_buckets, ns, nt, nc, np_ = struct.unpack("<HI4I", fh.read(22))
        if version != SEPF_VERSION:
            raise ValueError(f"unsupported record version {version}")
        examples = []
        while True:
            head = fh.read(2)
            if not head:
                break
            (n_wide,) = struct.unpack("<H", head)
            wide = struct.unpack(f"<{n_wide}I", fh.read(4 * n_wide))
            deep = struct.unpack("<4I", fh.read(16))
            flags_b, uid_b, label = struct.unpack("<3B", fh.read(3))
            allow_vec = np.frombuffer(fh.read(4 * COMMENT_DIM), dtype="<f4").copy()
            never_vec = np.frombuffer(fh.read(4 * COMMENT_DIM), dtype="<f4").copy()
            examples.append(
                EncodedExample(
                    wide_indices=tuple(wide),
                    deep_ids=deep,
                    flags=FlagSet.from_byte(flags_b),
                    uid=_UID_LIST[uid_b],
                    allow_vec=allow_vec,
                    neverallow_vec=never_vec,
                    label=label,
                )
            )
    return examples, hash_buckets, (ns, nt, nc, np_)

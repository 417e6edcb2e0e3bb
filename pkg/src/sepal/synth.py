"""Synthetic policy corpus with a planted allow/neverallow boundary.

The generator builds a small universe of subjects (app-like, core-system,
hardware-service tiers), targets (sensitive and ordinary), and classes, then
labels every tuple with a fixed ground-truth predicate:

* core-system subjects may do anything except mutate sensitive targets,
* app subjects may only read ordinary targets,
* hardware-service subjects may drive sensitive device/file targets with
  any permission and read ordinary ones.

A sampled fraction of (subject, target) pairs becomes the labeled reference
corpus. A second fraction is withheld entirely: those pairs form the
unseen-pair holdout, where a memorizing classifier has no same-pair
neighbors to vote with. The device policy is the reference allow set plus
injected customized rules, some violating the planted boundary and some
benign, with the ground truth recorded for recall measurement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .policy import ALLOW, NEVERALLOW, AtomicRule, Name, Or, PolicyDb
from .uids import UidBucket

N_APP, N_SYS, N_HAL = 24, 16, 12
N_SENSITIVE, N_NORMAL = 20, 30

CLASS_PERMS = {
    "file": ("read", "write", "open", "getattr", "append"),
    "dir": ("search", "read", "write", "add_name"),
    "sock": ("bind", "connect", "send_msg", "recv_msg"),
    "chrf": ("read", "write", "ioctl", "open"),
    "svc": ("find", "add"),
}
READ_PERMS = frozenset({"read", "open", "getattr", "search", "recv_msg", "find", "connect"})
DEVICE_CLASSES = frozenset({"chrf"})

# Tier sizes and coverage are tuned together so reference labels land close
# to an even split (the boundary predicate is not symmetric per tier).
PAIR_COVERAGE = 0.55  # fraction of pairs labeled in the reference corpus
PAIR_HOLDOUT = 0.15  # fraction of pairs withheld as the unseen-pair holdout
TUPLES_PER_PAIR = 12  # (class, permission) samples per covered pair
N_VIOLATIONS = 400
N_BENIGN = 200


def subjects() -> list[str]:
    return (
        [f"app_{i:02d}" for i in range(N_APP)]
        + [f"sys_{i:02d}" for i in range(N_SYS)]
        + [f"hal_{i:02d}" for i in range(N_HAL)]
    )


def targets() -> list[str]:
    return [f"sens_{i:02d}" for i in range(N_SENSITIVE)] + [
        f"data_{i:02d}" for i in range(N_NORMAL)
    ]


def ground_truth(subject: str, target: str, klass: str, perm: str) -> str:
    """The planted boundary every generated label follows."""
    sensitive = target.startswith("sens_")
    writes = perm not in READ_PERMS
    if subject.startswith("sys_"):
        return NEVERALLOW if (sensitive and writes) else ALLOW
    if subject.startswith("app_"):
        return ALLOW if (not sensitive and not writes) else NEVERALLOW
    # hardware-service tier
    if sensitive:
        return ALLOW if klass in DEVICE_CLASSES else NEVERALLOW
    return ALLOW if not writes else NEVERALLOW


def build_db() -> PolicyDb:
    db = PolicyDb()
    for name in subjects() + targets():
        db.declare_type(name)
    members = {
        "domain": subjects(),
        "appdomain": [s for s in subjects() if s.startswith("app_")],
        "coredomain": [s for s in subjects() if s.startswith("sys_")],
        "netdomain": [s for s in subjects() if s.startswith("app_") and int(s[-2:]) % 2 == 0],
        "mlstrustedsubject": [f"sys_{i:02d}" for i in range(8)],
        "untrusted_app_all": [s for s in subjects() if s.startswith("app_")],
    }
    for attr, names in members.items():
        db.declare_attribute(attr)
        db.memberships[attr] = Or(tuple(Name(n) for n in names))
    return db


def uid_assignment() -> dict[str, UidBucket]:
    out = {}
    for s in subjects():
        if s.startswith("app_"):
            out[s] = UidBucket.APP
        elif s.startswith("sys_"):
            out[s] = UidBucket.SYSTEM
        else:
            out[s] = UidBucket.OTHER_DAEMON
    return out


@dataclass
class SynthCorpus:
    db: PolicyDb
    reference: set[AtomicRule]  # labeled training atomics
    device: set[AtomicRule]  # device allow atomics
    holdout: set[AtomicRule]  # labeled atomics over withheld pairs
    violations: set[AtomicRule]  # injected customized rules breaking the boundary
    benign: set[AtomicRule]  # injected customized rules consistent with it
    uid_map: dict[str, UidBucket]


def generate(seed: int) -> SynthCorpus:
    rng = np.random.default_rng(seed)
    subs = subjects()
    tgts = targets()
    cp_pairs = [(c, p) for c, perms in CLASS_PERMS.items() for p in perms]

    pairs = [(s, t) for s in subs for t in tgts]
    order = rng.permutation(len(pairs))
    n_cov = int(len(pairs) * PAIR_COVERAGE)
    n_hold = int(len(pairs) * PAIR_HOLDOUT)
    covered = [pairs[i] for i in order[:n_cov]]
    held = [pairs[i] for i in order[n_cov : n_cov + n_hold]]
    uncovered = [pairs[i] for i in order[n_cov + n_hold :]]

    reference: set[AtomicRule] = set()
    for s, t in covered:
        picks = rng.choice(len(cp_pairs), size=TUPLES_PER_PAIR, replace=False)
        for i in picks:
            c, p = cp_pairs[i]
            reference.add(AtomicRule(s, t, c, p, ground_truth(s, t, c, p)))

    holdout: set[AtomicRule] = set()
    for s, t in held:
        for c, p in cp_pairs:
            holdout.add(AtomicRule(s, t, c, p, ground_truth(s, t, c, p)))

    # Injected customized rules: violations flip a neverallow tuple to allow;
    # benign additions extend the device with allows over uncovered pairs.
    ref_keys = {a.key() for a in reference}
    violations: set[AtomicRule] = set()
    benign: set[AtomicRule] = set()
    pool = covered + uncovered
    pool_order = rng.permutation(len(pool))
    for i in pool_order:
        s, t = pool[i]
        if len(violations) >= N_VIOLATIONS and len(benign) >= N_BENIGN:
            break
        for c, p in cp_pairs:
            truth = ground_truth(s, t, c, p)
            # A forbidden tuple never sits in the reference allow set, so the
            # injected allow always survives the differential step.
            if truth == NEVERALLOW and len(violations) < N_VIOLATIONS:
                violations.add(AtomicRule(s, t, c, p, ALLOW))
                break
            if truth == ALLOW and (s, t, c, p) not in ref_keys and len(benign) < N_BENIGN:
                benign.add(AtomicRule(s, t, c, p, ALLOW))
                break

    device = {a for a in reference if a.label == ALLOW} | violations | benign
    return SynthCorpus(
        db=build_db(),
        reference=reference,
        device=device,
        holdout=holdout,
        violations=violations,
        benign=benign,
        uid_map=uid_assignment(),
    )


def write_corpus(corpus: SynthCorpus, outdir) -> None:
    from . import formats

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    formats.save_db(outdir / "db.json", corpus.db)
    formats.save_atomics(outdir / "reference.jsonl", corpus.reference)
    sources = {a: "injected" for a in corpus.violations | corpus.benign}
    formats.save_atomics(outdir / "device.jsonl", corpus.device, sources)
    formats.save_atomics(outdir / "holdout.jsonl", corpus.holdout)
    formats.save_uid_map(outdir / "uid_map.tsv", corpus.uid_map)
    truth = {
        "violations": sorted("|".join(a.key()) for a in corpus.violations),
        "benign": sorted("|".join(a.key()) for a in corpus.benign),
    }
    (outdir / "truth.json").write_text(json.dumps(truth, indent=1) + "\n")

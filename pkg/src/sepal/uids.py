"""Static association of process domains with privilege buckets.

No runtime device access: app domains are read off seapp_contexts, and
daemon domains follow the static chain
``typetransition(init, X_exec, process, D)`` -> file_contexts path labeled
``X_exec`` -> init service with that executable -> service user -> bucket.
"""

from __future__ import annotations

from enum import Enum

from .datadir import data_path
from .parsers import FileContextEntry, RcServiceEntry, SeappEntry
from .policy import PolicyDb


class UidBucket(Enum):
    ROOT = "root"
    SYSTEM = "system"
    SHELL = "shell"
    RADIO = "radio"
    MEDIA = "media"
    OTHER_DAEMON = "other_daemon"
    APP = "app"
    ISOLATED = "isolated"
    UNKNOWN = "unknown"


# Privilege tiers for reporting and ambiguity resolution; shell, radio,
# media and other daemons share a tier.
_TIER = {
    UidBucket.ROOT: 0,
    UidBucket.SYSTEM: 1,
    UidBucket.SHELL: 2,
    UidBucket.RADIO: 2,
    UidBucket.MEDIA: 2,
    UidBucket.OTHER_DAEMON: 2,
    UidBucket.APP: 3,
    UidBucket.ISOLATED: 4,
    UidBucket.UNKNOWN: 5,
}

BUCKET_ORDER = sorted(UidBucket, key=lambda b: (_TIER[b], b.value))


def privilege_rank(bucket: UidBucket) -> tuple[int, str]:
    """Sort key: lower sorts more privileged; name breaks ties within a tier."""
    return (_TIER[bucket], bucket.value)


def load_aid_map(path=None) -> dict[str, UidBucket]:
    p = path if path is not None else data_path("aid_map.tsv")
    table: dict[str, UidBucket] = {}
    for ln in p.read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        user, bucket = ln.split("\t")
        table[user] = UidBucket(bucket)
    return table


def bucket_for_user(user: str, aid_map: dict[str, UidBucket]) -> UidBucket:
    if user in aid_map:
        return aid_map[user]
    # Any other named init user is some daemon account.
    return UidBucket.OTHER_DAEMON if user else UidBucket.UNKNOWN


def _strip_regex_escapes(pattern: str) -> str:
    # file_contexts paths for executables are literal apart from escaped dots.
    return pattern.replace("\\.", ".")


def infer_users(
    db: PolicyDb,
    fc: list[FileContextEntry],
    rc: list[RcServiceEntry],
    seapp: list[SeappEntry],
    aid_map: dict[str, UidBucket] | None = None,
) -> dict[str, UidBucket]:
    """Map every domain appearing as a transition result or seapp domain to a bucket.

    Domains whose chain breaks anywhere map to UNKNOWN. When two init
    services give one domain different users, the higher-privilege bucket
    wins and a warning is recorded.
    """
    aid = aid_map if aid_map is not None else load_aid_map()
    out: dict[str, UidBucket] = {}

    paths_by_exec: dict[str, list[str]] = {}
    for entry in fc:
        paths_by_exec.setdefault(entry.label_type, []).append(_strip_regex_escapes(entry.path_pattern))
    services_by_path: dict[str, list[RcServiceEntry]] = {}
    for svc in rc:
        services_by_path.setdefault(svc.executable_path, []).append(svc)

    for tr in db.transitions:
        if tr.source != "init" or tr.klass != "process":
            continue
        candidates: list[UidBucket] = []
        for path in paths_by_exec.get(tr.exec_type, []):
            for svc in services_by_path.get(path, []):
                candidates.append(bucket_for_user(svc.user, aid))
        bucket = UidBucket.UNKNOWN
        if candidates:
            distinct = sorted(set(candidates), key=privilege_rank)
            bucket = distinct[0]
            if len(distinct) > 1:
                db.warnings.append(
                    f"domain {tr.result!r} has services under multiple users; "
                    f"keeping {bucket.value}"
                )
        out[tr.result] = _keep_higher(out.get(tr.result), bucket)

    for entry in seapp:
        user = entry.assigned_user_class
        if user == "_app":
            bucket = UidBucket.APP
        elif user == "_isolated":
            bucket = UidBucket.ISOLATED
        elif user == "system":
            bucket = UidBucket.SYSTEM
        else:
            bucket = bucket_for_user(user, aid)
        out[entry.domain] = _keep_higher(out.get(entry.domain), bucket)

    return out


def _keep_higher(current: UidBucket | None, new: UidBucket) -> UidBucket:
    if current is None or current is UidBucket.UNKNOWN:
        return new
    if new is UidBucket.UNKNOWN:
        return current
    return min(current, new, key=privilege_rank)

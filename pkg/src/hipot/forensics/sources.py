"""Per-source aggregation and the disjoint source classification."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from ..eventlog import AuthAttempt, EventKind, Record, Session, SessionizedLog

DICT_THRESHOLD = 10


class SourceClass(str, Enum):
    INTRUDER = "Intruder"
    DICTIONARY = "DictionaryAttacker"
    SCANNER = "Scanner"
    UNKNOWN = "Unknown"


CLASS_ORDER = (SourceClass.INTRUDER, SourceClass.DICTIONARY, SourceClass.SCANNER, SourceClass.UNKNOWN)


@dataclass
class SourceProfile:
    ip: str
    first_seen: datetime
    last_seen: datetime
    auth_attempts: int = 0
    distinct_pairs: int = 0
    successes: int = 0
    connections: int = 0
    sessions: list[str] = field(default_factory=list)
    intrusions: list[str] = field(default_factory=list)
    classification: SourceClass | None = None
    pairs: set = field(default_factory=set, repr=False)

    def to_dict(self) -> dict:
        from ..eventlog import format_ts
        return {
            "ip": self.ip, "first_seen": format_ts(self.first_seen), "last_seen": format_ts(self.last_seen),
            "auth_attempts": self.auth_attempts, "distinct_pairs": self.distinct_pairs,
            "successes": self.successes, "connections": self.connections,
            "sessions": list(self.sessions), "intrusions": list(self.intrusions),
            "classification": self.classification.value if self.classification else None,
        }


def _touch(profiles: dict[str, SourceProfile], ip: str, ts: datetime) -> SourceProfile:
    p = profiles.get(ip)
    if p is None:
        p = profiles[ip] = SourceProfile(ip, ts, ts)
    else:
        p.first_seen = min(p.first_seen, ts)
        p.last_seen = max(p.last_seen, ts)
    return p


def build_profiles(log: SessionizedLog) -> dict[str, SourceProfile]:
    """Aggregate per source address; orphans with an address still count as contact."""
    profiles: dict[str, SourceProfile] = {}
    for a in log.attempts:
        p = _touch(profiles, a.source_ip, a.ts)
        p.auth_attempts += 1
        p.pairs.add((a.username, a.password))
        p.successes += a.success
    for s in log.sessions:
        p = _touch(profiles, s.source_ip, s.start_ts)
        _touch(profiles, s.source_ip, s.end_ts)
        p.connections += 1
        if s.authenticated:
            p.sessions.append(s.session_id)
            if s.is_intrusion:
                p.intrusions.append(s.session_id)
    for rec in log.orphans:
        ip = _record_ip(rec)
        if ip is not None:
            _touch(profiles, ip, rec.ts)
    for p in profiles.values():
        p.distinct_pairs = len(p.pairs)
    return profiles


def _record_ip(rec: Record) -> str | None:
    if isinstance(rec, AuthAttempt):
        return rec.source_ip
    if rec.kind in (EventKind.CONNECT, EventKind.DISCONNECT):
        return rec.ip
    return None


def detect_dictionary(profile: SourceProfile | int, threshold: int = DICT_THRESHOLD) -> bool:
    """More than ``threshold`` distinct (username, password) pairs."""
    n = profile if isinstance(profile, int) else profile.distinct_pairs
    return n > threshold


def classify_source(profile: SourceProfile, sessions: list[Session] | None = None,
                    threshold: int = DICT_THRESHOLD) -> SourceClass:
    """Intruder > DictionaryAttacker > Scanner > Unknown.

    Scanner: contact without a successful login (port probes, or a handful of
    guesses under the dictionary threshold). A successful login that never
    ran a command and is not part of a dictionary run is left Unknown.
    """
    if sessions is not None:
        intrusion = any(s.is_intrusion for s in sessions if s.source_ip == profile.ip)
    else:
        intrusion = bool(profile.intrusions)
    if intrusion:
        return SourceClass.INTRUDER
    if detect_dictionary(profile, threshold):
        return SourceClass.DICTIONARY
    if profile.successes == 0:
        return SourceClass.SCANNER
    return SourceClass.UNKNOWN


def classify_all(log: SessionizedLog, threshold: int = DICT_THRESHOLD) -> dict[str, SourceProfile]:
    profiles = build_profiles(log)
    for p in profiles.values():
        p.classification = classify_source(p, threshold=threshold)
    return profiles

"""Group intrusion sessions on one account into probable single-person clusters."""
from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..eventlog import Session, b2s
from .trace import SessionTrace

log = logging.getLogger(__name__)

PREFIX_LEN = 16


class RegionMap:
    """Optional ``CIDR<TAB>label`` mapping; longest prefix wins."""

    def __init__(self, entries: list[tuple[ipaddress.IPv4Network, str]] = ()):
        self.entries = sorted(entries, key=lambda e: -e[0].prefixlen)

    @classmethod
    def load(cls, path: str | Path | None) -> "RegionMap | None":
        if path is None:
            return None
        p = Path(path)
        if not p.exists():
            log.warning("region map %s not found; falling back to the /%d prefix rule", p, PREFIX_LEN)
            return None
        entries = []
        for n, raw in enumerate(p.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cidr, sep, label = line.partition("\t")
            if not sep:
                cidr, _, label = line.partition(" ")
            try:
                entries.append((ipaddress.ip_network(cidr.strip(), strict=False), label.strip()))
            except ValueError:
                log.warning("%s:%d: bad CIDR %r skipped", p, n, cidr)
        return cls(entries)

    def label(self, ip: str) -> str | None:
        try:
            addr = ipaddress.ip_address(ip)
        except ValueError:
            return None
        for net, label in self.entries:
            if addr in net:
                return label
        return None


def same_prefix(a: str, b: str, prefix_len: int = PREFIX_LEN) -> bool:
    try:
        na = ipaddress.ip_network(f"{a}/{prefix_len}", strict=False)
        return ipaddress.ip_address(b) in na
    except ValueError:
        return a == b


def close(a: str, b: str, regions: RegionMap | None = None, prefix_len: int = PREFIX_LEN) -> bool:
    if a == b or same_prefix(a, b, prefix_len):
        return True
    if regions is not None:
        la, lb = regions.label(a), regions.label(b)
        return la is not None and la == lb
    return False


@dataclass
class Cluster:
    cluster_id: str
    account: bytes
    session_ids: list[str] = field(default_factory=list)
    ips: list[str] = field(default_factory=list)
    passwords: list[bytes] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"id": self.cluster_id, "account": b2s(self.account), "sessions": self.session_ids,
                "ips": self.ips, "passwords": [b2s(p) for p in self.passwords]}


def session_keys(trace: SessionTrace, changed: set[bytes]) -> set[bytes]:
    """Passwords that identify the holder: ones set through passwd by someone.

    The original weak password is public knowledge (it was in a dictionary),
    so it links nobody."""
    keys = {c.new for c in trace.password_changes if c.ok and c.new}
    if trace.session.password in changed:
        keys.add(trace.session.password)
    return keys


def link_intruders(traces: list[SessionTrace], *, regions: RegionMap | None = None,
                   prefix_len: int = PREFIX_LEN) -> list[Cluster]:
    """Union-find over each account's intrusion sessions (ordered by start)."""
    by_account: dict[bytes, list[SessionTrace]] = {}
    for t in traces:
        by_account.setdefault(t.session.account, []).append(t)
    clusters: list[Cluster] = []
    for account in sorted(by_account):
        group = sorted(by_account[account], key=lambda t: (t.session.start_ts, t.session.session_id))
        changed = {c.new for t in group for c in t.password_changes if c.ok and c.new}
        keys = [session_keys(t, changed) for t in group]
        parent = list(range(len(group)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                if keys[i] & keys[j] and close(group[i].session.source_ip, group[j].session.source_ip,
                                                regions, prefix_len):
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
        roots: dict[int, Cluster] = {}
        for i, t in enumerate(group):
            r = find(i)
            if r not in roots:
                roots[r] = Cluster(f"{b2s(account)}#{len(roots) + 1}", account)
            c = roots[r]
            c.session_ids.append(t.session.session_id)
            if t.session.source_ip not in c.ips:
                c.ips.append(t.session.source_ip)
            if t.session.password is not None and t.session.password not in c.passwords:
                c.passwords.append(t.session.password)
        clusters.extend(roots.values())
    return clusters


def cluster_index(clusters: list[Cluster]) -> dict[str, str]:
    return {sid: c.cluster_id for c in clusters for sid in c.session_ids}


def sessions_by_cluster(clusters: list[Cluster], sessions: dict[str, Session]) -> dict[str, list[Session]]:
    return {c.cluster_id: [sessions[s] for s in c.session_ids] for c in clusters}

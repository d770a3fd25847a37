"""Aggregate tables, cross-sensor correlation, and deterministic rendering."""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from . import LOG_FORMAT, __version__
from .eventlog import AuthAttempt, Session, b2s
from .forensics.linkage import Cluster
from .forensics.pipeline import Analysis
from .forensics.sources import CLASS_ORDER, SourceClass, SourceProfile
from .forensics.timeline import coarse_duration

CENT = Decimal("0.01")


def percent(part: int, whole: int) -> Decimal:
    """part/whole as a percentage, half-up to two decimals."""
    if whole == 0:
        return Decimal("0.00")
    return (Decimal(part) * 100 / Decimal(whole)).quantize(CENT, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class AccountRow:
    account: bytes
    attempts: int
    percentage: Decimal
    passwords: int

    def to_dict(self) -> dict:
        return {"account": b2s(self.account), "attempts": self.attempts,
                "percentage": f"{self.percentage}", "passwords": self.passwords}


def top_accounts(attempts: list[AuthAttempt], k: int | None = 10) -> list[AccountRow]:
    """Most-tried accounts; ties broken by account name for stable output."""
    counts: Counter = Counter()
    pwds: dict[bytes, set] = defaultdict(set)
    for a in attempts:
        counts[a.username] += 1
        pwds[a.username].add(a.password)
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if k is not None:
        ranked = ranked[:k]
    return [AccountRow(u, n, percent(n, total), len(pwds[u])) for u, n in ranked]


def attempt_totals(attempts: list[AuthAttempt]) -> dict:
    return {"attempts": len(attempts), "successes": sum(a.success for a in attempts),
            "accounts": len({a.username for a in attempts})}


def partition_report(profiles: dict[str, SourceProfile] | list[SourceProfile]) -> dict:
    items = profiles.values() if isinstance(profiles, dict) else profiles
    counts = {c.value: 0 for c in CLASS_ORDER}
    succeeded = 0
    for p in items:
        counts[p.classification.value] += 1
        if p.classification is SourceClass.DICTIONARY and p.successes:
            succeeded += 1
    total = sum(counts.values())
    return {
        "total": total, **counts,
        "other": counts[SourceClass.SCANNER.value] + counts[SourceClass.UNKNOWN.value],
        "dictionary_succeeded": succeeded,
        "dictionary_failed": counts[SourceClass.DICTIONARY.value] - succeeded,
    }


@dataclass(frozen=True)
class IntrusionRow:
    account: bytes
    intrusions: int
    passwords: int
    ips: int
    clusters: int

    def to_dict(self) -> dict:
        return {"account": b2s(self.account), "intrusions": self.intrusions, "passwords": self.passwords,
                "ips": self.ips, "clusters": self.clusters}


def intrusions_per_account(sessions: list[Session], clusters: list[Cluster] = ()) -> list[IntrusionRow]:
    per: dict[bytes, list[Session]] = defaultdict(list)
    for s in sessions:
        if s.is_intrusion:
            per[s.account].append(s)
    n_clusters = Counter(c.account for c in clusters)
    rows = []
    for acct in sorted(per):
        ss = per[acct]
        rows.append(IntrusionRow(acct, len(ss), len({s.password for s in ss}), len({s.source_ip for s in ss}),
                                 n_clusters.get(acct, 0)))
    return rows


def correlate_sensors(a: dict[str, SourceProfile], b: dict[str, SourceProfile] | set[str]) -> dict:
    """For each class in A: its size and how many of its addresses appear anywhere in B."""
    seen_b = set(b)
    out = {}
    for cls in CLASS_ORDER:
        ips = [ip for ip, p in a.items() if p.classification is cls]
        out[cls.value] = {"size": len(ips), "overlap": sum(1 for ip in ips if ip in seen_b)}
    return out


# --- rendering ----------------------------------------------------------------

def build_report(analysis: Analysis, *, peer: Analysis | None = None, top: int = 10) -> dict:
    attempts = analysis.log.attempts
    doc = {
        "tool": f"hipot {__version__}", "log_format": LOG_FORMAT,
        "totals": attempt_totals(attempts),
        "top_accounts": [r.to_dict() for r in top_accounts(attempts, top)],
        "partition": partition_report(analysis.profiles),
        "intrusions_per_account": [r.to_dict() for r in
                                   intrusions_per_account(analysis.log.sessions, analysis.clusters)],
        "timelines": [t.to_dict() for t in analysis.timelines],
        "operators": dict(sorted(Counter(r.operator.verdict.value for r in analysis.intrusions).items())),
        "skills": dict(sorted(Counter(r.skill.skill.value for r in analysis.intrusions).items())),
        "tags": dict(sorted(Counter(t.value for r in analysis.intrusions for t in r.tags).items())),
        "intrusions": [r.to_dict() for r in analysis.intrusions],
    }
    if peer is not None:
        doc["correlation"] = correlate_sensors(analysis.profiles, peer.profiles)
    return doc


def render_report(doc: dict, fmt: str = "text") -> bytes:
    if fmt == "json":
        return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    return _render_text(doc).encode()


def _table(headers: list[str], rows: list[list]) -> list[str]:
    cells = [headers] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return [fmt(cells[0]), "  ".join("-" * w for w in widths)] + [fmt(r) for r in cells[1:]]


def _render_text(doc: dict) -> str:
    from datetime import timedelta
    out = [f"{doc['tool']} report ({doc['log_format']})", ""]
    t = doc["totals"]
    out.append(f"Connection attempts: {t['attempts']}  successful: {t['successes']}  accounts tried: {t['accounts']}")
    if doc["top_accounts"]:
        out += ["", "Most tried accounts"]
        out += _table(["Account", "Attempts", "Percent", "Passwords"],
                      [[r["account"], r["attempts"], r["percentage"] + "%", r["passwords"]]
                       for r in doc["top_accounts"]])
    p = doc["partition"]
    out += ["", "Source addresses"]
    out += _table(["Class", "Addresses"], [[k, p[k]] for k in
                                           ("DictionaryAttacker", "Intruder", "Scanner", "Unknown", "total")])
    out.append(f"Dictionary sources that found a password: {p['dictionary_succeeded']}")
    if "correlation" in doc:
        out += ["", "Also seen on peer sensor"]
        out += _table(["Class", "Addresses", "Overlap"],
                      [[k, v["size"], v["overlap"]] for k, v in doc["correlation"].items()])
    if doc["intrusions_per_account"]:
        out += ["", "Intrusions per account"]
        out += _table(["Account", "Intrusions", "Passwords", "Addresses", "Clusters"],
                      [[r["account"], r["intrusions"], r["passwords"], r["ips"], r["clusters"]]
                       for r in doc["intrusions_per_account"]])
    if doc["timelines"]:
        def dur(s):
            return coarse_duration(None if s is None else timedelta(seconds=s))
        out += ["", "Account compromise timeline"]
        out += _table(["Account", "Creation to first login", "First login to intrusion"],
                      [[r["account"], dur(r["d1_seconds"]) if r["first_success"] else "-",
                        dur(r["d2_seconds"]) if r["first_intrusion"] else "-"] for r in doc["timelines"]])
    if doc["operators"]:
        out += ["", "Operators: " + ", ".join(f"{k} {v}" for k, v in doc["operators"].items())]
        out.append("Skill: " + ", ".join(f"{k} {v}" for k, v in doc["skills"].items()))
        out.append("Activities: " + ", ".join(f"{k} {v}" for k, v in doc["tags"].items()))
    return "\n".join(out) + "\n"

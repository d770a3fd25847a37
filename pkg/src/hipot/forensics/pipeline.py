"""Full analysis of one log: sources, intrusion sessions, clusters, timelines."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable

from ..eventlog import Record, SessionizedLog, b2s, format_ts, sessionize
from ..shellbox.fixtures import Catalog, default_catalog
from .activity import SkillAssessment, SkillWeights, blocked_downloads, score_trace, tag_trace
from .linkage import PREFIX_LEN, Cluster, RegionMap, cluster_index, link_intruders
from .operator import CHAR_CHUNKS, MIN_PASTE, OperatorVerdict, classify_operator
from .sources import DICT_THRESHOLD, SourceProfile, classify_all
from .timeline import AccountTimeline, compute_account_timeline
from .trace import SessionTrace, build_trace


@dataclass
class ForensicsConfig:
    dict_threshold: int = DICT_THRESHOLD
    char_chunks: int = CHAR_CHUNKS
    min_paste: int = MIN_PASTE
    prefix_len: int = PREFIX_LEN
    weights: SkillWeights = field(default_factory=SkillWeights)
    regions: RegionMap | None = None
    catalog: Catalog | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "ForensicsConfig":
        cfg = cls()
        for key in ("dict_threshold", "char_chunks", "min_paste", "prefix_len"):
            if key in data:
                setattr(cfg, key, int(data[key]))
        if "weights" in data:
            cfg.weights = SkillWeights(**data["weights"])
        return cfg


@dataclass
class IntrusionReport:
    session_id: str
    source_ip: str
    account: bytes
    start_ts: datetime
    end_ts: datetime
    operator: OperatorVerdict
    tags: set
    skill: SkillAssessment
    cluster: str | None
    password_changes: list[tuple[bytes, bytes]]

    def to_dict(self) -> dict:
        return {
            "session": self.session_id, "ip": self.source_ip, "account": b2s(self.account),
            "start": format_ts(self.start_ts), "end": format_ts(self.end_ts),
            "operator": self.operator.to_dict(), "tags": sorted(t.value for t in self.tags),
            "skill": self.skill.to_dict(), "cluster": self.cluster,
            "password_changes": [b2s(new) for _, new in self.password_changes],
        }


@dataclass
class Analysis:
    log: SessionizedLog
    profiles: dict[str, SourceProfile]
    intrusions: list[IntrusionReport]
    clusters: list[Cluster]
    timelines: list[AccountTimeline]
    traces: dict[str, SessionTrace] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "sources": [self.profiles[ip].to_dict() for ip in sorted(self.profiles, key=_ip_key)],
            "intrusions": [r.to_dict() for r in self.intrusions],
            "clusters": [c.to_dict() for c in self.clusters],
            "timelines": [t.to_dict() for t in self.timelines],
            "counts": {
                "records": sum(len(s.events) for s in self.log.sessions) + len(self.log.failed)
                + len(self.log.orphans),
                "sessions": len(self.log.sessions), "failed_auth": len(self.log.failed),
                "orphans": len(self.log.orphans),
            },
        }


def _ip_key(ip: str):
    parts = ip.split(".")
    if len(parts) == 4 and all(p.isdigit() for p in parts):
        return (0, tuple(int(p) for p in parts), ip)
    return (1, (), ip)


def analyze(records: Iterable[Record] | SessionizedLog, *, accounts: dict[bytes, datetime] | None = None,
            config: ForensicsConfig | None = None) -> Analysis:
    cfg = config or ForensicsConfig()
    catalog = cfg.catalog or default_catalog()
    log = records if isinstance(records, SessionizedLog) else sessionize(records)
    profiles = classify_all(log, cfg.dict_threshold)
    intrusion_sessions = [s for s in log.sessions if s.is_intrusion]
    traces = {s.session_id: build_trace(s) for s in intrusion_sessions}
    clusters = link_intruders(list(traces.values()), regions=cfg.regions, prefix_len=cfg.prefix_len)
    where = cluster_index(clusters)
    # blocked downloads seen earlier in the same cluster, for the retry penalty
    prior: dict[str, int] = {}
    for c in clusters:
        running = 0
        for sid in c.session_ids:
            prior[sid] = running
            running += blocked_downloads(traces[sid])
    reports = []
    for s in intrusion_sessions:
        tr = traces[s.session_id]
        verdict = classify_operator(s, char_chunks=cfg.char_chunks, min_paste=cfg.min_paste)
        tags = tag_trace(tr, catalog)
        skill = score_trace(tr, tags, verdict, prior_blocked=prior.get(s.session_id, 0), weights=cfg.weights)
        reports.append(IntrusionReport(
            s.session_id, s.source_ip, s.account, s.start_ts, s.end_ts, verdict, tags, skill,
            where.get(s.session_id), [(c.old, c.new) for c in tr.password_changes if c.ok]))
    timelines = compute_account_timeline(log.attempts, log.sessions, accounts) if accounts else []
    return Analysis(log, profiles, reports, clusters, timelines, traces)

"""Scenario documents (JSON) and their validation.

Times anywhere in a scenario are either RFC-3339 UTC strings or numbers of
seconds after the scenario ``start``; internally everything is integer
milliseconds since the Unix epoch.
"""
from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

from ..eventlog import UTC, parse_ts
from ..shellbox.fixtures import Catalog, default_catalog
from . import scripts as script_lib

KINDS = ("Scanner", "DictBot", "HumanIntruder", "ScriptIntruder")
DEFAULT_PREFIX = {
    "Scanner": "172.16.0.0/12",
    "DictBot": "198.18.0.0/15",
    "HumanIntruder": "100.64.0.0/10",
    "ScriptIntruder": "100.64.0.0/10",
}
EPOCH = datetime(1970, 1, 1, tzinfo=UTC)


class ScenarioError(ValueError):
    pass


def to_ms(ts: datetime) -> int:
    return (ts - EPOCH) // timedelta(milliseconds=1)


def from_ms(ms: int) -> datetime:
    return EPOCH + timedelta(milliseconds=ms)


@dataclass
class AccountSpec:
    name: str
    password: str
    weak: bool = True
    created_ms: int = 0


@dataclass
class ResetSpec:
    account: str
    password: str
    at_ms: int


@dataclass
class Visit:
    at_ms: int
    commands: list[str]
    passwd: bool = False
    ip: int | None = None
    typo: bool | None = None  # force (True) or forbid (False) a typo in this visit
    tags: list[str] | None = None  # expected activity tags, when the visit uses only named scripts


@dataclass
class PersonaSpec:
    kind: str
    count: int = 1
    prefix: str | None = None
    ips: list[str] = field(default_factory=list)
    n_ips: int = 1
    at_ms: int = 0
    spread_ms: int = 0
    peer: int = 0  # how many instances are also seen by the peer sensor
    label: str | None = None
    # Scanner
    probe: tuple[int, int] = (0, 0)
    # DictBot
    attempts: tuple[int, int] = (30, 30)
    users: list[str] = field(default_factory=list)
    interval_ms: int = 2000
    per_conn: int = 1
    hits: list[dict] = field(default_factory=list)
    recheck_ms: list[int] = field(default_factory=list)
    histogram: dict[str, tuple[int, int]] = field(default_factory=dict)
    tail: dict | None = None
    # intruders
    account: str | None = None
    password: str | None = None
    new_password: str | None = None
    visits: list[Visit] = field(default_factory=list)
    typo_prob: float = 0.0
    force_typo: bool = False
    key_delay_ms: float = 180.0
    think_ms: float = 2500.0


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    start_ms: int = 0
    accounts: list[AccountSpec] = field(default_factory=list)
    resets: list[ResetSpec] = field(default_factory=list)
    windows: list[tuple[str, int, int]] = field(default_factory=list)
    shell: dict = field(default_factory=dict)
    population: list[PersonaSpec] = field(default_factory=list)
    operator_thresholds: tuple[int, int] = (4, 8)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def bait(self) -> str:
        return self.shell.get("bait_address", "10.0.0.23")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict, catalog: Catalog | None = None) -> "Scenario":
        return _parse(data, catalog or default_catalog())

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=1) + "\n"


def _time(value, start_ms: int, where: str) -> int:
    if isinstance(value, bool):
        raise ScenarioError(f"{where}: bad time {value!r}")
    if isinstance(value, (int, float)):
        return start_ms + round(value * 1000)
    if isinstance(value, str):
        try:
            return to_ms(parse_ts(value))
        except ValueError:
            raise ScenarioError(f"{where}: bad time {value!r}") from None
    raise ScenarioError(f"{where}: bad time {value!r}")


def _range(value, where: str) -> tuple[int, int]:
    if isinstance(value, int) and not isinstance(value, bool):
        return value, value
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value):
        lo, hi = value
        if lo > hi:
            raise ScenarioError(f"{where}: empty range {value}")
        return lo, hi
    raise ScenarioError(f"{where}: expected an int or [lo, hi]")


_PERSONA_KEYS = {
    "kind", "count", "prefix", "ips", "n_ips", "at", "spread", "peer", "label", "probe", "attempts", "users",
    "interval", "per_conn", "hit", "recheck", "histogram", "tail", "account", "password", "new_password",
    "visits", "typo_prob", "force_typo", "key_delay", "think",
}


def _parse(data: dict, catalog: Catalog) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    start_ms = to_ms(parse_ts(data["start"])) if "start" in data else to_ms(datetime(2006, 3, 1, tzinfo=UTC))
    sc = Scenario(name=str(data.get("name", "scenario")), seed=int(data.get("seed", 0)), start_ms=start_ms,
                  shell=dict(data.get("shell", {})), raw=data)
    if "operator_thresholds" in data:
        lo, hi = data["operator_thresholds"]
        sc.operator_thresholds = (int(lo), int(hi))
    names = set()
    for i, a in enumerate(data.get("accounts", [])):
        where = f"accounts[{i}]"
        if "name" not in a or "password" not in a:
            raise ScenarioError(f"{where}: needs name and password")
        if a["name"] in names:
            raise ScenarioError(f"{where}: duplicate account {a['name']!r}")
        names.add(a["name"])
        sc.accounts.append(AccountSpec(a["name"], a["password"], bool(a.get("weak", True)),
                                       _time(a.get("created", 0), start_ms, where)))
    for i, r in enumerate(data.get("resets", [])):
        where = f"resets[{i}]"
        if r.get("account") not in names:
            raise ScenarioError(f"{where}: unknown account {r.get('account')!r}")
        sc.resets.append(ResetSpec(r["account"], r["password"], _time(r["at"], start_ms, where)))
    for i, w in enumerate(data.get("egress_windows", [])):
        where = f"egress_windows[{i}]"
        sc.windows.append((w.get("proto", "*"), _time(w["start"], start_ms, where), _time(w["end"], start_ms, where)))
    for i, p in enumerate(data.get("population", [])):
        sc.population.append(_persona(p, i, start_ms, names, catalog, sc.bait))
    return sc


def _persona(p: dict, i: int, start_ms: int, accounts: set, catalog: Catalog, bait: str) -> PersonaSpec:
    where = f"population[{i}]"
    if not isinstance(p, dict):
        raise ScenarioError(f"{where}: persona must be an object")
    unknown = set(p) - _PERSONA_KEYS
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    kind = p.get("kind")
    if kind not in KINDS:
        raise ScenarioError(f"{where}: kind must be one of {KINDS}, got {kind!r}")
    spec = PersonaSpec(kind=kind, count=int(p.get("count", 1)), label=p.get("label"))
    if spec.count < 0:
        raise ScenarioError(f"{where}: negative count")
    spec.prefix = p.get("prefix", DEFAULT_PREFIX[kind])
    try:
        ipaddress.ip_network(spec.prefix, strict=False)
        spec.ips = [str(ipaddress.ip_address(x)) for x in p.get("ips", [])]
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None
    spec.n_ips = int(p.get("n_ips", max(1, len(spec.ips))))
    spec.at_ms = _time(p.get("at", 0), start_ms, where)
    spec.spread_ms = round(float(p.get("spread", 0)) * 1000)
    peer = p.get("peer", 0)
    spec.peer = spec.count if peer is True else int(peer or 0)
    if kind == "Scanner":
        spec.probe = _range(p.get("probe", 0), f"{where}.probe")
        if spec.probe[1] > 10:
            raise ScenarioError(f"{where}: scanners probe at most 10 pairs")
        spec.users = list(p.get("users", []))
    elif kind == "DictBot":
        spec.attempts = _range(p.get("attempts", 30), f"{where}.attempts")
        spec.users = list(p.get("users", []))
        spec.interval_ms = round(float(p.get("interval", 2.0)) * 1000)
        spec.per_conn = int(p.get("per_conn", 1))
        if spec.per_conn < 1 or spec.interval_ms < 1:
            raise ScenarioError(f"{where}: per_conn and interval must be positive")
        hits = p.get("hit", [])
        spec.hits = [hits] if isinstance(hits, dict) else list(hits)
        for h in spec.hits:
            if h.get("account") not in accounts:
                raise ScenarioError(f"{where}: hit names unknown account {h.get('account')!r}")
            if "at" in h:
                h["at_ms"] = _time(h["at"], start_ms, where)
        if len(spec.hits) > spec.count:
            raise ScenarioError(f"{where}: more hits than bots")
        spec.recheck_ms = [round(float(x) * 1000) for x in p.get("recheck", [])]
        for u, v in p.get("histogram", {}).items():
            if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) for x in v)):
                raise ScenarioError(f"{where}: histogram[{u}] must be [attempts, passwords]")
            n, d = v
            if d > n or d < 1:
                raise ScenarioError(f"{where}: histogram[{u}] needs 1 <= passwords <= attempts")
            spec.histogram[u] = (n, d)
        spec.tail = p.get("tail")
        if not spec.histogram and not spec.tail and spec.attempts[0] <= 10:
            raise ScenarioError(f"{where}: a dictionary bot tries more than 10 pairs")
    else:
        spec.account = p.get("account")
        if spec.account not in accounts:
            raise ScenarioError(f"{where}: unknown account {spec.account!r}")
        spec.password = p.get("password")
        if spec.password is None:
            raise ScenarioError(f"{where}: intruder needs the password it knows")
        spec.new_password = p.get("new_password")
        spec.typo_prob = float(p.get("typo_prob", 0.0))
        spec.force_typo = bool(p.get("force_typo", False))
        spec.key_delay_ms = float(p.get("key_delay", 0.18)) * 1000
        spec.think_ms = float(p.get("think", 2.5)) * 1000
        if not 0.0 <= spec.typo_prob <= 1.0:
            raise ScenarioError(f"{where}: typo_prob outside [0, 1]")
        for j, v in enumerate(p.get("visits", [])):
            vw = f"{where}.visits[{j}]"
            try:
                cmds = script_lib.expand(v.get("scripts", []), bait) + list(v.get("commands", []))
            except KeyError as exc:
                raise ScenarioError(f"{vw}: unknown script {exc.args[0]!r}") from None
            for c in cmds:
                for fx in script_lib.referenced_fixtures(c):
                    if fx not in catalog:
                        raise ScenarioError(f"{vw}: command {c!r} references unknown fixture {fx!r}")
            if v.get("passwd") and not spec.new_password:
                raise ScenarioError(f"{vw}: passwd visit needs new_password")
            tags = None if v.get("commands") else script_lib.expected_tags(v.get("scripts", []), bool(v.get("passwd")))
            spec.visits.append(Visit(_time(v.get("at", 0), start_ms, vw), cmds, bool(v.get("passwd", False)),
                                     v.get("ip"), v.get("typo"), tags))
    if spec.ips and len(spec.ips) < spec.count * (spec.n_ips if kind.endswith("Intruder") else 1):
        raise ScenarioError(f"{where}: not enough explicit ips for {spec.count} instances")
    return spec

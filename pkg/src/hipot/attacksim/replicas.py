"""Builders for the replica scenarios used by the acceptance suite.

Each builder returns a plain scenario document (dict) that can be dumped to
JSON and fed to ``hipot simulate --scenario``.
"""
from __future__ import annotations

import random

DAY = 86400
START = "2006-03-01T00:00:00Z"
ROOT = {"name": "root", "password": "9f!Qz#77-LkR", "weak": False, "created": 0}

# source population of the "fig3" replica
FIG3_DICT, FIG3_DICT_HITS, FIG3_INTRUDERS, FIG3_SCANNERS = 197, 18, 35, 248

# most-tried accounts: account -> (attempts, distinct passwords)
TABLE1_TOP = {
    "root": (34251, 12027), "admin": (4007, 1425), "test": (3109, 561), "user": (1247, 267),
    "guest": (1128, 201), "info": (886, 203), "mysql": (870, 211), "oracle": (857, 226),
    "postgres": (834, 194), "webmaster": (728, 170),
}
TABLE1_TOTAL = 248717
TABLE1_ACCOUNTS = 41530

# ua<i> -> (creation to first success, first success to first intrusion) in seconds
TABLE2 = {
    1: (1 * DAY, 4 * DAY), 2: (DAY // 2, 4 * 60), 3: (15 * DAY, 1 * DAY), 4: (5 * DAY, 10 * DAY),
    5: (5 * DAY, None), 6: (1 * DAY, 4 * DAY), 7: (5 * DAY, 8 * DAY), 8: (1 * DAY, 9 * DAY),
    9: (1 * DAY, 12 * DAY), 10: (3 * DAY, 2 * 60), 11: (7 * DAY, 4 * DAY), 12: (1 * DAY, 8 * DAY),
    13: (5 * DAY, 17 * DAY), 14: (5 * DAY, 13 * DAY), 15: (9 * DAY, 7 * DAY), 16: (1 * DAY, 14 * DAY),
    17: (1 * DAY, 12 * DAY),
}

# compromised account -> (intrusions, passwords, addresses)
TABLE3 = {
    "ua2": (1, 1, 1), "ua4": (13, 2, 2), "ua5": (1, 1, 1), "ua8": (1, 1, 1),
    "ua10": (9, 2, 2), "ua13": (6, 1, 5), "ua16": (5, 1, 3), "ua17": (2, 1, 1),
}

# activity menu for intrusion visits; each entry is a list of script names
MENU = [
    ["recon", "wget_fail"],
    ["wget_fail", "cleanup_unset"],
    ["recon", "scan"],
    ["ircbot", "cleanup_unset"],
    ["cpuinfo", "rootkit_a"],
    ["rootkit_b", "cleanup_rm"],
    ["wget_retry"],
    ["psybnc", "cleanup_unset"],
    ["passwd_look", "scan_home"],
    ["phish"],
    ["clueless", "wget_fail"],
    ["bait", "vm_probe"],
    ["connectivity", "scan"],
]


def _ua(i: int) -> dict:
    return {"name": f"ua{i}", "password": f"ua{i}", "weak": True, "created": 0}


def fig3(seed: int = 1, *, peer_dict: int = 0, peer_scan: int = 0) -> dict:
    accounts = [_ua(i) for i in range(1, 18)]
    pop = []
    hits = [{"account": f"ua{1 + k % 17}", "password": f"ua{1 + k % 17}", "at": DAY + k * 12 * 3600}
            for k in range(FIG3_DICT_HITS)]
    pop.append({"kind": "DictBot", "count": FIG3_DICT_HITS, "hit": hits, "attempts": [20, 300],
                "interval": 1.5, "peer": min(peer_dict, FIG3_DICT_HITS), "label": "dict-hit"})
    pop.append({"kind": "DictBot", "count": FIG3_DICT - FIG3_DICT_HITS, "attempts": [11, 400],
                "interval": 1.5, "at": 0, "spread": 30 * DAY, "per_conn": 3,
                "peer": max(0, peer_dict - FIG3_DICT_HITS), "label": "dict"})
    pop.append({"kind": "Scanner", "count": FIG3_SCANNERS // 2, "probe": 0, "spread": 30 * DAY,
                "peer": min(peer_scan, FIG3_SCANNERS // 2), "label": "port-scan"})
    pop.append({"kind": "Scanner", "count": FIG3_SCANNERS - FIG3_SCANNERS // 2, "probe": [1, 10],
                "spread": 30 * DAY, "peer": max(0, peer_scan - FIG3_SCANNERS // 2), "label": "probe"})
    new_pw: dict[str, str] = {}
    for i in range(FIG3_INTRUDERS):
        acct = f"ua{1 + i % 17}"
        first = acct not in new_pw
        if first:
            new_pw[acct] = f"Zr{i}!{acct}#q8"
        scripts = MENU[i % len(MENU)]
        visit = {"at": 14 * DAY + i * 9 * 3600, "scripts": scripts + ["exit"], "passwd": first}
        pop.append({
            "kind": "ScriptIntruder" if i % 7 == 3 else "HumanIntruder",
            "account": acct, "password": acct if first else new_pw[acct], "new_password": new_pw[acct],
            "prefix": f"100.{64 + i % 17}.0.0/16", "typo_prob": 0.3, "force_typo": i % 5 != 4,
            "visits": [visit], "label": f"intruder-{acct}",
        })
    return {"name": "fig3", "seed": seed, "start": START, "accounts": [ROOT] + accounts, "population": pop}


def two_sensor(seed: int = 1) -> dict:
    doc = fig3(seed, peer_dict=182, peer_scan=231)
    doc["name"] = "two-sensor"
    return doc


def table1(seed: int = 1, bots: int = 120) -> dict:
    tail_accounts = TABLE1_ACCOUNTS - len(TABLE1_TOP)
    tail_attempts = TABLE1_TOTAL - sum(n for n, _ in TABLE1_TOP.values())
    smallest = min(n for n, _ in TABLE1_TOP.values())
    return {
        "name": "table1", "seed": seed, "start": START, "accounts": [ROOT],
        "population": [{
            "kind": "DictBot", "count": bots, "interval": 2, "per_conn": 6, "spread": 130 * DAY,
            "histogram": {u: list(v) for u, v in TABLE1_TOP.items()},
            "tail": {"accounts": tail_accounts, "attempts": tail_attempts, "max": smallest - 1,
                     "name": "acct{:05d}"},
        }],
    }


def table2(seed: int = 1) -> dict:
    """Each UA row: dictionary hit at creation+d1, first intrusion at hit+d2.

    UA5 is broken by the UA4 intruder (who read /etc/passwd) shortly after
    the UA4 intrusion, so that its first login is the intrusion itself."""
    accounts, pop = [ROOT], []
    created = {i: (i - 1) * 3600 for i in TABLE2}
    d1_4, d2_4 = TABLE2[4]
    ua4_intrusion = created[4] + d1_4 + d2_4
    created[5] = ua4_intrusion + 3600 - TABLE2[5][0]
    for i, (d1, d2) in TABLE2.items():
        name = f"ua{i}"
        accounts.append({"name": name, "password": name, "weak": True, "created": created[i]})
        success = created[i] + d1
        prefix = f"100.{64 + (4 if i == 5 else i)}.0.0/16"
        if d2 is None:
            visits = [{"at": success - 0.8, "scripts": ["recon", "exit"], "passwd": True}]
        else:
            pop.append({"kind": "DictBot", "count": 1, "attempts": [15, 60], "interval": 2,
                        "hit": {"account": name, "password": name, "at": success}, "label": f"dict-{name}"})
            scripts = ["passwd_look", "recon", "exit"] if i == 4 else ["recon", "exit"]
            visits = [{"at": success + d2 - 0.8, "scripts": scripts, "passwd": True}]
        pop.append({"kind": "HumanIntruder", "account": name, "password": name, "new_password": f"{name}-Str0ng!",
                    "prefix": prefix, "force_typo": True, "visits": visits, "label": f"intruder-{name}"})
    return {"name": "table2", "seed": seed, "start": START, "accounts": accounts, "population": pop}


# (account, visit) -> operator profile for the 38-session replica
_SHORT = {("ua4", 3), ("ua4", 9), ("ua10", 4), ("ua13", 2), ("ua16", 1)}
_CLEAN_TYPED = {("ua4", 5), ("ua4", 11), ("ua10", 2), ("ua10", 7), ("ua13", 4), ("ua16", 3), ("ua17", 0)}


def operators(seed: int = 1) -> dict:
    """38 intrusions laid out as the per-account table: 26 sessions with typing
    mistakes, 7 typed cleanly character by character, 5 with a single short command."""
    accounts, pop = [ROOT], []
    slot = 0
    for k, (acct, (n, n_pw, n_ip)) in enumerate(TABLE3.items()):
        accounts.append({"name": acct, "password": acct, "weak": True, "created": 0})
        # two passwords: change on the first visit; one password: change on the last
        change_at = 0 if n_pw == 2 else n - 1
        visits = []
        for v in range(n):
            key = (acct, v)
            at = DAY * (2 + 3 * v) + k * 5400
            ip = (v * n_ip) // n
            if key in _SHORT:
                visits.append({"at": at, "scripts": ["short"], "typo": False, "ip": ip})
                continue
            scripts = MENU[slot % len(MENU)] + ["exit"]
            slot += 1
            visits.append({"at": at, "scripts": scripts, "passwd": v == change_at,
                           "typo": key not in _CLEAN_TYPED, "ip": ip})
        pop.append({"kind": "HumanIntruder", "account": acct, "password": acct, "new_password": f"{acct}#N3w!pw",
                    "prefix": f"100.{80 + k}.0.0/16", "n_ips": n_ip, "visits": visits, "label": f"intruder-{acct}"})
    return {"name": "operators", "seed": seed, "start": START, "accounts": accounts, "population": pop}


def lifecycle(seed: int) -> dict:
    """Randomized guess -> intrusion -> passwd run, with the dictionary bot
    re-testing its find before and after the change."""
    rng = random.Random(f"lifecycle/{seed}")
    n_acc = rng.randint(1, 3)
    accounts = [ROOT] + [{"name": f"acct{i}", "password": rng.choice(["123456", "test", f"acct{i}", "qwerty1"]),
                          "weak": True, "created": 0} for i in range(n_acc)]
    pop = []
    for i, acct in enumerate(accounts[1:]):
        hit_at = rng.randint(1, 5) * DAY + rng.randint(0, 3600)
        intrude_at = hit_at + rng.randint(60, 10 * DAY)
        rechecks = sorted(rng.sample(range(30, 20 * DAY, 600), rng.randint(2, 6)))
        pop.append({"kind": "DictBot", "count": 1, "attempts": [11, 80], "interval": rng.choice([1, 2, 5]),
                    "hit": {"account": acct["name"], "password": acct["password"], "at": hit_at},
                    "recheck": rechecks, "label": f"dict-{acct['name']}"})
        visits = [{"at": intrude_at, "scripts": [rng.choice(["recon", "wget_fail", "scan", "short"])],
                   "passwd": True}]
        for _ in range(rng.randint(0, 2)):
            visits.append({"at": visits[-1]["at"] + rng.randint(3600, 5 * DAY),
                           "scripts": [rng.choice(["recon", "wget_retry", "ircbot", "cleanup_unset"]), "exit"]})
        kind = rng.choice(["HumanIntruder", "ScriptIntruder"])
        pop.append({"kind": kind, "account": acct["name"], "password": acct["password"],
                    "new_password": f"N3w-{seed}-{i}-{rng.randrange(10**6)}", "typo_prob": rng.random(),
                    "prefix": f"100.{64 + i}.0.0/16", "n_ips": rng.randint(1, 2), "visits": visits})
    pop.append({"kind": "Scanner", "count": rng.randint(0, 5), "probe": [0, 10], "spread": 10 * DAY})
    return {"name": f"lifecycle-{seed}", "seed": seed, "start": START, "accounts": accounts, "population": pop}


def tiny(seed: int = 1) -> dict:
    """One account, one intruder visit; handy for smoke tests."""
    return {"name": "tiny", "seed": seed, "start": START, "accounts": [ROOT, _ua(1)], "population": [
        {"kind": "HumanIntruder", "account": "ua1", "password": "ua1", "new_password": "Ua1-Str0ng!",
         "visits": [{"at": 60, "scripts": ["recon", "exit"], "passwd": True}]}]}


REPLICAS = {
    "fig3": fig3, "two-sensor": two_sensor, "table1": table1, "table2": table2, "operators": operators,
    "lifecycle": lifecycle, "tiny": tiny,
}


def build(name: str, seed: int = 1) -> dict:
    try:
        fn = REPLICAS[name]
    except KeyError:
        raise KeyError(f"unknown replica {name!r}; choose from {sorted(REPLICAS)}") from None
    return fn(seed)

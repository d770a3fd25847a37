"""Credential and egress policies."""
from __future__ import annotations

import bisect
import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from ..eventlog import UTC, b2s, format_ts, parse_ts, s2b

log = logging.getLogger(__name__)

EPOCH = datetime(1970, 1, 1, tzinfo=UTC)


class PolicyError(ValueError):
    pass


@dataclass
class Account:
    name: bytes
    weak: bool
    created_ts: datetime
    # (valid_from, password), ascending by valid_from
    history: list[tuple[datetime, bytes]] = field(default_factory=list)

    def password_at(self, ts: datetime) -> bytes | None:
        i = bisect.bisect_right([h[0] for h in self.history], ts)
        return self.history[i - 1][1] if i else None

    @property
    def current_password(self) -> bytes | None:
        return self.history[-1][1] if self.history else None


class CredentialPolicy:
    """Account table with timestamped password history. No lockout, unlimited retries."""

    def __init__(self, accounts: list[Account] = ()):
        self._lock = threading.RLock()
        self.accounts: dict[bytes, Account] = {a.name: a for a in accounts}

    @classmethod
    def from_simple(cls, spec: dict[str, tuple[str, bool]] | dict[str, str],
                    created: datetime = EPOCH) -> "CredentialPolicy":
        """``{"ua2": ("123456", True), "root": ("x9!...", False)}``, or name -> password (weak)."""
        out = []
        for name, val in spec.items():
            pw, weak = (val, True) if isinstance(val, str) else val
            out.append(Account(s2b(name), weak, created, [(created, s2b(pw))]))
        return cls(out)

    @classmethod
    def load(cls, path: str | Path) -> "CredentialPolicy":
        """Accounts file: ``user:password:weak|strong[:created]`` per line; ``#`` comments."""
        out = []
        for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(":")
            # the created timestamp itself contains colons
            if len(parts) < 3:
                raise PolicyError(f"{path}:{n}: expected user:password:weak|strong")
            user, pw, strength = parts[0], parts[1], parts[2]
            created = EPOCH
            if len(parts) > 3:
                try:
                    created = parse_ts(":".join(parts[3:]))
                except ValueError as exc:
                    raise PolicyError(f"{path}:{n}: {exc}") from None
            if strength not in ("weak", "strong"):
                raise PolicyError(f"{path}:{n}: strength must be weak or strong, got {strength!r}")
            out.append(Account(s2b(user), strength == "weak", created, [(created, s2b(pw))]))
        return cls(out)

    def dump_accounts(self) -> str:
        lines = []
        for a in sorted(self.accounts.values(), key=lambda a: a.name):
            pw = a.history[0][1] if a.history else b""
            lines.append(f"{b2s(a.name)}:{b2s(pw)}:{'weak' if a.weak else 'strong'}:{format_ts(a.created_ts)}")
        return "".join(x + "\n" for x in lines)

    @property
    def usernames(self) -> list[str]:
        return sorted(b2s(n) for n in self.accounts)

    def check(self, username: bytes, password: bytes, ts: datetime) -> bool:
        with self._lock:
            acct = self.accounts.get(username)
            if acct is None or ts < acct.created_ts:
                return False
            return acct.password_at(ts) == password

    def change_password(self, username: bytes, old: bytes, new: bytes, ts: datetime) -> bool:
        """Atomic compare-and-set: succeeds only if ``old`` is the password valid at ``ts``."""
        with self._lock:
            acct = self.accounts.get(username)
            if acct is None or not new or acct.password_at(ts) != old:
                return False
            self._set(acct, new, ts)
            return True

    def reset_password(self, username: bytes, new: bytes, ts: datetime) -> None:
        """Administrative reset (e.g. an operator re-weakening a burnt account)."""
        with self._lock:
            acct = self.accounts.get(username)
            if acct is None:
                raise PolicyError(f"unknown account {b2s(username)!r}")
            self._set(acct, new, ts)

    @staticmethod
    def _set(acct: Account, new: bytes, ts: datetime) -> None:
        # a change is effective from ts onwards; later history (if any) is superseded
        keep = [h for h in acct.history if h[0] < ts]
        keep.append((ts, new))
        acct.history = keep

    # --- persistence ------------------------------------------------------

    def to_state(self) -> dict:
        with self._lock:
            return {
                b2s(a.name): [[format_ts(t), b2s(p)] for t, p in a.history]
                for a in sorted(self.accounts.values(), key=lambda a: a.name)
            }

    def apply_state(self, state: dict) -> None:
        with self._lock:
            for name, hist in state.items():
                acct = self.accounts.get(s2b(name))
                if acct is None:
                    log.warning("state file names unknown account %r; ignored", name)
                    continue
                acct.history = [(parse_ts(t), s2b(p)) for t, p in hist]

    def save_state(self, path: str | Path) -> None:
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(json.dumps(self.to_state(), sort_keys=True, indent=1))
        tmp.replace(path)

    def load_state(self, path: str | Path) -> None:
        p = Path(path)
        if p.exists():
            self.apply_state(json.loads(p.read_text()))


@dataclass(frozen=True)
class AllowWindow:
    proto: str
    start: datetime
    end: datetime

    def covers(self, proto: str, ts: datetime) -> bool:
        return self.proto in (proto, "*") and self.start <= ts < self.end


@dataclass
class EgressPolicy:
    """Default deny; in-band transfer over the open channel is always allowed."""

    windows: list[AllowWindow] = field(default_factory=list)
    bait_address: str | None = None

    def verdict(self, dst: str, port: int, proto: str, ts: datetime) -> str:
        if proto == "inband":
            return "allow"
        if self.bait_address is not None and dst == self.bait_address:
            return "deny"
        if any(w.covers(proto, ts) for w in self.windows):
            return "allow"
        return "deny"

    def is_bait(self, dst: str) -> bool:
        return self.bait_address is not None and dst == self.bait_address

    @classmethod
    def load(cls, path: str | Path, bait_address: str | None = None) -> "EgressPolicy":
        """Egress file: ``proto start end`` per line (RFC-3339 UTC); ``*`` matches any proto."""
        windows = []
        for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise PolicyError(f"{path}:{n}: expected 'proto start end'")
            try:
                start, end = parse_ts(parts[1]), parse_ts(parts[2])
            except ValueError as exc:
                raise PolicyError(f"{path}:{n}: {exc}") from None
            if end <= start:
                raise PolicyError(f"{path}:{n}: window ends before it starts")
            windows.append(AllowWindow(parts[0], start, end))
        return cls(windows, bait_address)

"""Per-account compromise timeline: creation -> first successful login -> first intrusion."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

from ..eventlog import AuthAttempt, Session, b2s, format_ts


@dataclass(frozen=True)
class AccountTimeline:
    account: bytes
    created_ts: datetime
    first_success_ts: datetime | None = None
    first_intrusion_ts: datetime | None = None
    d1: timedelta | None = None
    d2: timedelta | None = None
    same_event: bool = False

    def to_dict(self) -> dict:
        def secs(d):
            return None if d is None else int(d.total_seconds()) if d.total_seconds().is_integer() \
                else d.total_seconds()
        return {
            "account": b2s(self.account), "created": format_ts(self.created_ts),
            "first_success": format_ts(self.first_success_ts) if self.first_success_ts else None,
            "first_intrusion": format_ts(self.first_intrusion_ts) if self.first_intrusion_ts else None,
            "d1_seconds": secs(self.d1), "d2_seconds": secs(self.d2),
        }


def compute_account_timeline(attempts: list[AuthAttempt], sessions: list[Session],
                             accounts: dict[bytes, datetime]) -> list[AccountTimeline]:
    """One row per configured account, in account-name order.

    d2 is None both when the account was never intruded and when the first
    successful login was itself the first intrusion (``same_event``).
    """
    first_ok: dict[bytes, AuthAttempt] = {}
    for a in sorted(attempts, key=lambda a: (a.ts, a.seq)):
        if a.success and a.username not in first_ok:
            first_ok[a.username] = a
    first_intr: dict[bytes, Session] = {}
    for s in sorted(sessions, key=lambda s: (s.login_ts or s.start_ts, s.session_id)):
        if s.is_intrusion and s.account not in first_intr:
            first_intr[s.account] = s
    rows = []
    for acct in sorted(accounts):
        created = accounts[acct]
        ok = first_ok.get(acct)
        intr = first_intr.get(acct)
        if ok is None:
            rows.append(AccountTimeline(acct, created))
            continue
        d1 = ok.ts - created
        intr_ts = intr.login_ts if intr is not None else None
        same = intr is not None and ok.session_id == intr.session_id
        d2 = None if intr is None or same else intr_ts - ok.ts
        rows.append(AccountTimeline(acct, created, ok.ts, intr_ts, d1, d2, same))
    return rows


def coarse_duration(d: timedelta | None) -> str:
    """Human wording with coarse units, as an analyst would write it in a table."""
    if d is None:
        return "null"
    s = int(d.total_seconds())
    if s < 3600:
        m = round(s / 60)
        return f"{m} minute" + ("s" if m != 1 else "")
    if s < 86400:
        if s == 43200:
            return "Half a day"
        h = round(s / 3600)
        return f"{h} hour" + ("s" if h != 1 else "")
    days = round(s / 86400)
    return f"{days} day" + ("s" if days != 1 else "")

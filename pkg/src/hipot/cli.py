"""``hipot`` command line: sense, simulate, replay, ingest, analyze, report.

Exit status is 0 on success, 1 on an operational error (missing file, bad
log, unreachable sensor) and 2 on a usage error. Data goes to files or
stdout; diagnostics go to stderr. Input logs are only ever opened for reading.
"""
from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from . import LOG_FORMAT, __version__
from .eventlog import LogError, LogWriter, format_ts, load_log, sessionize
from .forensics import ForensicsConfig, RegionMap, analyze
from .report import build_report, render_report
from .sensor import CredentialPolicy, EgressPolicy, PolicyError, Sensor, SensorError

log = logging.getLogger("hipot")


class CliError(Exception):
    """Operational failure; reported on stderr with exit status 1."""


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(f"config file {path}: expected a JSON object")
    return data


def _pick(flag, section: dict, key: str, default=None):
    """Flags beat the config file, which beats the built-in default."""
    if flag is not None:
        return flag
    return section.get(key, default)


def _write(data: bytes, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)


def _read_log(path: str):
    try:
        loaded = load_log(path)
    except FileNotFoundError:
        raise CliError(f"log file {path} not found") from None
    except IsADirectoryError:
        raise CliError(f"{path} is a directory") from None
    except LogError as exc:
        raise CliError(f"{path}: {exc}") from None
    if loaded.partial_tail is not None:
        log.warning("%s: ignoring truncated final record (%d bytes)", path, len(loaded.partial_tail))
    return loaded


def _accounts_created(path: str | None) -> dict | None:
    if not path:
        return None
    try:
        policy = CredentialPolicy.load(path)
    except FileNotFoundError:
        raise CliError(f"accounts file {path} not found") from None
    except PolicyError as exc:
        raise CliError(str(exc)) from None
    return {a.name: a.created_ts for a in policy.accounts.values()}


def _forensics_config(args, cfg: dict) -> ForensicsConfig:
    section = dict(cfg.get("forensics", {}))
    try:
        fc = ForensicsConfig.from_mapping(section)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad forensics config: {exc}") from None
    region_path = _pick(getattr(args, "region_map", None), cfg, "region_map")
    try:
        fc.regions = RegionMap.load(region_path)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return fc


def _address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise CliError(f"expected host:port, got {text!r}")
    return host or "0.0.0.0", int(port)


# --- subcommands ------------------------------------------------------------------

def cmd_sense(args, cfg: dict) -> int:
    section = cfg.get("sense", {})
    listen = _pick(args.listen, section, "listen", "127.0.0.1:2222")
    mode = _pick(args.mode, section, "mode", "plain")
    accounts = _pick(args.accounts, section, "accounts")
    if not accounts:
        raise CliError("sense needs --accounts")
    egress_path = _pick(args.egress, section, "egress")
    log_path = _pick(args.log, section, "log", "hipot.log")
    motd_path = _pick(args.motd, section, "motd")
    state_path = _pick(args.state, section, "state")
    trust = bool(_pick(args.trust_client_meta or None, section, "trust_client_meta", False))

    from .shellbox import ShellConfig
    try:
        policy = CredentialPolicy.load(accounts)
        egress = EgressPolicy.load(egress_path) if egress_path else EgressPolicy()
        shell_cfg = ShellConfig(motd=Path(motd_path).read_text() if motd_path else None,
                                bait_address=egress.bait_address)
    except FileNotFoundError as exc:
        raise CliError(f"{exc.filename}: not found") from None
    except PolicyError as exc:
        raise CliError(str(exc)) from None
    if state_path:
        policy.load_state(state_path)
    address = _address(listen)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    with LogWriter(log_path) as writer:
        sensor = Sensor(policy, egress, writer, shell_cfg, state_path=state_path)
        if mode == "plain":
            from .sensor import PlainServer
            server = PlainServer(address, sensor, trust_client_meta=trust)
            server.serve_in_thread()
            print(f"listening on {server.server_address[0]}:{server.server_address[1]} (plain)",
                  file=sys.stderr, flush=True)
            try:
                stop.wait()
            except KeyboardInterrupt:
                pass
            server.shutdown()
            server.server_close()
        else:
            from .sensor.ssh import load_host_key, serve_ssh
            try:
                key = load_host_key(_pick(args.host_key, section, "host_key"))
            except SensorError as exc:
                raise CliError(str(exc)) from None
            print(f"listening on {address[0]}:{address[1]} (ssh)", file=sys.stderr, flush=True)
            try:
                serve_ssh(address, sensor, key, stop)
            except KeyboardInterrupt:
                stop.set()
        for sid in list(sensor.open_connections):
            sensor.disconnect(sid, reason="shutdown")
    return 0


def cmd_simulate(args, cfg: dict) -> int:
    from .attacksim import REPLICAS, Scenario, ScenarioError, build_replica, generate
    seed = _pick(args.seed, cfg, "seed")
    if args.replica:
        if args.replica not in REPLICAS:
            raise CliError(f"unknown replica {args.replica!r}; choose from {', '.join(sorted(REPLICAS))}")
        doc = build_replica(args.replica, 1 if seed is None else seed)
    else:
        try:
            doc = json.loads(Path(args.scenario).read_text())
        except FileNotFoundError:
            raise CliError(f"scenario file {args.scenario} not found") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.scenario}: {exc}") from None
        if seed is not None:
            doc["seed"] = seed
    if args.emit_scenario:
        _write((json.dumps(doc, sort_keys=True, indent=1) + "\n").encode(), args.emit_scenario)
        if not args.out:
            return 0
    if not args.out:
        raise CliError("simulate needs --out (or --emit-scenario)")
    try:
        sc = Scenario.from_dict(doc)
        corpus = generate(sc, args.out)
    except (ScenarioError, ValueError) as exc:
        raise CliError(f"scenario: {exc}") from None
    r = corpus.report
    print(f"{sc.name}: {r.connections} connections, {r.auth_attempts} auth attempts, {r.granted} granted "
          f"-> {args.out}", file=sys.stderr)
    return 0


def cmd_replay(args, cfg: dict) -> int:
    from .attacksim import replay
    loaded = _read_log(args.log)
    host, port = _address(args.target)
    report = replay(loaded.records, host, port, timeout=args.timeout)
    for msg in report.errors:
        print(f"hipot replay: {msg}", file=sys.stderr)
    _write((json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode(), args.out)
    return 1 if report.aborted else 0


def cmd_ingest(args, cfg: dict) -> int:
    loaded = _read_log(args.log)
    slog = sessionize(loaded.records)
    kinds: dict[str, int] = {}
    for rec in loaded.records:
        kinds[rec.kind.value] = kinds.get(rec.kind.value, 0) + 1
    summary = {
        "log": str(args.log), "log_format": LOG_FORMAT, "records": len(loaded.records),
        "truncated_tail_bytes": len(loaded.partial_tail) if loaded.partial_tail is not None else 0,
        "kinds": dict(sorted(kinds.items())), "sessions": len(slog.sessions),
        "authenticated_sessions": sum(s.authenticated for s in slog.sessions),
        "intrusions": sum(s.is_intrusion for s in slog.sessions),
        "failed_auth": len(slog.failed), "orphan_events": len(slog.orphans),
        "first_ts": format_ts(loaded.records[0].ts) if loaded.records else None,
        "last_ts": format_ts(loaded.records[-1].ts) if loaded.records else None,
    }
    _write((json.dumps(summary, sort_keys=True, indent=2) + "\n").encode(), args.out)
    return 0


def cmd_analyze(args, cfg: dict) -> int:
    loaded = _read_log(args.log)
    result = analyze(loaded.records, accounts=_accounts_created(_pick(args.accounts, cfg, "accounts")),
                     config=_forensics_config(args, cfg))
    doc = {"tool": f"hipot {__version__}", "log_format": LOG_FORMAT, **result.to_dict()}
    _write((json.dumps(doc, sort_keys=True, indent=2) + "\n").encode(), args.out)
    return 0


def cmd_report(args, cfg: dict) -> int:
    section = cfg.get("report", {})
    fmt = _pick(args.format, section, "format", "text")
    if fmt not in ("text", "json"):
        raise CliError(f"unknown report format {fmt!r}")
    fc = _forensics_config(args, cfg)
    accounts = _accounts_created(_pick(args.accounts, cfg, "accounts"))
    main = analyze(_read_log(args.log).records, accounts=accounts, config=fc)
    peer = analyze(_read_log(args.peer_log).records, config=fc) if args.peer_log else None
    doc = build_report(main, peer=peer, top=_pick(args.top, section, "top", 10))
    _write(render_report(doc, fmt), args.out)
    return 0


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags take precedence)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")

    p = argparse.ArgumentParser(prog="hipot", description="High-interaction ssh honeypot toolkit.")
    p.add_argument("--version", action="version", version=f"hipot {__version__} ({LOG_FORMAT})")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("sense", parents=[common], help="run the sensor")
    s.add_argument("--listen", help="address:port (default 127.0.0.1:2222)")
    s.add_argument("--mode", choices=("ssh", "plain"))
    s.add_argument("--accounts", help="user:password:weak|strong[:created] per line")
    s.add_argument("--egress", help="allow windows, 'proto start end' per line")
    s.add_argument("--log", help="event log to append to (default hipot.log)")
    s.add_argument("--motd", help="file shown at login")
    s.add_argument("--state", help="file persisting password changes across restarts")
    s.add_argument("--host-key", help="RSA host key for ssh mode (ephemeral if omitted)")
    s.add_argument("--trust-client-meta", action="store_true",
                   help="plain mode: honour FROM/TS from clients (for replay)")
    s.set_defaults(func=cmd_sense)

    s = sub.add_parser("simulate", parents=[common], help="generate a labelled corpus from a scenario")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--replica", help="built-in replica scenario name")
    s.add_argument("--out", help="output directory")
    s.add_argument("--emit-scenario", metavar="PATH", help="write the scenario document ('-' for stdout)")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("replay", parents=[common], help="play a log against a running plain-mode sensor")
    s.add_argument("--log", required=True)
    s.add_argument("--target", required=True, help="sensor host:port")
    s.add_argument("--timeout", type=float, default=10.0)
    s.add_argument("--out", help="transmission report (default stdout)")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("ingest", parents=[common], help="validate a log and summarize it")
    s.add_argument("--log", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("analyze", parents=[common], help="run the forensics pipeline")
    s.add_argument("--log", required=True)
    s.add_argument("--out")
    s.add_argument("--accounts", help="accounts file, for creation times")
    s.add_argument("--region-map", help="CIDR<TAB>label per line")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("report", parents=[common], help="render the aggregate report")
    s.add_argument("--log", required=True)
    s.add_argument("--peer-log")
    s.add_argument("--format", choices=("text", "json"))
    s.add_argument("--out")
    s.add_argument("--accounts", help="accounts file, for creation times")
    s.add_argument("--region-map")
    s.add_argument("--top", type=int)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="hipot: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, _load_config(args.config))
    except CliError as exc:
        print(f"hipot {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"hipot {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Fixture catalog: the stand-in binaries and archives intruders can fetch.

Manifest format (JSON object)::

    name -> {behavior, size, kernel?, targets?, contents?, server?, port?,
             recipients?, executable?}

``behavior`` is one of scan-tool, irc-bot, rootkit-A, rootkit-B, mailer,
inert, or archive (an archive lists the fixture names it unpacks to).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

BEHAVIORS = ("scan-tool", "irc-bot", "rootkit-A", "rootkit-B", "mailer", "inert", "archive")
ROOTKITS = ("rootkit-A", "rootkit-B")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class Fixture:
    name: str
    behavior: str
    size: int = 0
    kernel: str | None = None
    targets: str | None = None
    contents: tuple[str, ...] = ()
    server: str | None = None
    port: int | None = None
    recipients: tuple[str, ...] = ()
    executable: bool = True


@dataclass
class Catalog:
    fixtures: dict[str, Fixture] = field(default_factory=dict)

    def __contains__(self, name: str) -> bool:
        return name in self.fixtures

    def get(self, name: str | None) -> Fixture | None:
        if name is None:
            return None
        return self.fixtures.get(name)

    def behavior(self, name: str | None) -> str | None:
        fx = self.get(name)
        return fx.behavior if fx else None

    @classmethod
    def from_mapping(cls, data: dict) -> "Catalog":
        out: dict[str, Fixture] = {}
        for name, spec in data.items():
            if not isinstance(spec, dict):
                raise CatalogError(f"fixture {name!r}: entry must be an object")
            behavior = spec.get("behavior")
            if behavior not in BEHAVIORS:
                raise CatalogError(f"fixture {name!r}: unknown behavior {behavior!r}")
            if behavior == "rootkit-A" and not spec.get("kernel"):
                raise CatalogError(f"fixture {name!r}: rootkit-A needs a declared kernel version")
            executable = spec.get("executable", behavior not in ("inert", "archive"))
            out[name] = Fixture(
                name=name,
                behavior=behavior,
                size=int(spec.get("size", 0)),
                kernel=spec.get("kernel"),
                targets=spec.get("targets"),
                contents=tuple(spec.get("contents", ())),
                server=spec.get("server"),
                port=spec.get("port"),
                recipients=tuple(spec.get("recipients", ())),
                executable=bool(executable),
            )
        for fx in out.values():
            missing = [c for c in fx.contents if c not in out]
            if missing:
                raise CatalogError(f"archive {fx.name!r} lists unknown members {missing}")
        return cls(out)

    @classmethod
    def load(cls, path: str | Path) -> "Catalog":
        return cls.from_mapping(json.loads(Path(path).read_text()))


def default_catalog() -> Catalog:
    text = resources.files("hipot").joinpath("data/fixtures.json").read_text()
    return Catalog.from_mapping(json.loads(text))

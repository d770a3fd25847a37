"""Emulated sandboxed shell: virtual filesystem, process table, command vocabulary."""
from __future__ import annotations

from .fixtures import Catalog, CatalogError, Fixture, default_catalog
from .shell import (
    ExecContext, ExecRecord, ExecResult, PendingInput, builtin_passwd, execute, run_fixture_binary,
)
from .state import SandboxState, ShellConfig, login, logout, new_sandbox
from .vfs import VFS, FsError, Identity, Node

__all__ = [
    "Catalog", "CatalogError", "Fixture", "default_catalog", "ExecContext", "ExecRecord", "ExecResult",
    "PendingInput", "builtin_passwd", "execute", "run_fixture_binary", "SandboxState", "ShellConfig",
    "login", "logout", "new_sandbox", "VFS", "FsError", "Identity", "Node",
]

"""In-memory filesystem with a two-level (root / non-root) permission model."""
from __future__ import annotations

import posixpath
from dataclasses import dataclass, field

STICKY = 0o1000
WORLD_WRITABLE_DIRS = ("/tmp", "/var/tmp", "/dev/shm")


class FsError(Exception):
    """Carries the strerror text a real tool would print."""

    def __init__(self, strerror: str):
        super().__init__(strerror)
        self.strerror = strerror


ENOENT = "No such file or directory"
EACCES = "Permission denied"
EPERM = "Operation not permitted"
EISDIR = "Is a directory"
ENOTDIR = "Not a directory"
EEXIST = "File exists"


@dataclass
class Node:
    is_dir: bool
    owner: str = "root"
    mode: int = 0o644
    data: bytes = b""
    fixture: str | None = None
    size: int | None = None

    @property
    def length(self) -> int:
        return self.size if self.size is not None else len(self.data)


@dataclass
class Identity:
    user: str
    root: bool  # effective root (a partial root is NOT root here)


@dataclass
class VFS:
    nodes: dict[str, Node] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes.setdefault("/", Node(True, "root", 0o755))

    @staticmethod
    def resolve(cwd: str, path: str, home: str = "/") -> str:
        if path == "~" or path.startswith("~/"):
            path = home + path[1:]
        if not path.startswith("/"):
            path = posixpath.join(cwd, path)
        path = posixpath.normpath(path)
        if path.startswith("//"):
            path = "/" + path.lstrip("/")
        return path

    def get(self, path: str) -> Node | None:
        return self.nodes.get(path)

    def exists(self, path: str) -> bool:
        return path in self.nodes

    def isdir(self, path: str) -> bool:
        n = self.nodes.get(path)
        return bool(n and n.is_dir)

    def children(self, path: str) -> list[str]:
        prefix = path.rstrip("/") + "/"
        out = []
        for p in self.nodes:
            if p != "/" and p.startswith(prefix) and "/" not in p[len(prefix):]:
                out.append(p[len(prefix):])
        return sorted(out)

    # --- permission checks -------------------------------------------------

    @staticmethod
    def can_read(node: Node, who: Identity) -> bool:
        if who.root:
            return True
        if node.owner == who.user:
            return bool(node.mode & 0o400)
        return bool(node.mode & 0o004)

    @staticmethod
    def can_write(node: Node, who: Identity) -> bool:
        if who.root:
            return True
        if node.owner == who.user:
            return bool(node.mode & 0o200)
        return bool(node.mode & 0o002)

    @staticmethod
    def can_exec(node: Node, who: Identity) -> bool:
        if who.root:
            return bool(node.mode & 0o111)
        if node.owner == who.user:
            return bool(node.mode & 0o100)
        return bool(node.mode & 0o001)

    def _parent_for_write(self, path: str, who: Identity) -> Node:
        parent = self.nodes.get(posixpath.dirname(path))
        if parent is None:
            raise FsError(ENOENT)
        if not parent.is_dir:
            raise FsError(ENOTDIR)
        if not self.can_write(parent, who):
            raise FsError(EACCES)
        return parent

    # --- mutations ---------------------------------------------------------

    def read(self, path: str, who: Identity) -> bytes:
        node = self.nodes.get(path)
        if node is None:
            raise FsError(ENOENT)
        if node.is_dir:
            raise FsError(EISDIR)
        if not self.can_read(node, who):
            raise FsError(EACCES)
        return node.data

    def write(self, path: str, data: bytes, who: Identity, *, append: bool = False,
              mode: int = 0o644, fixture: str | None = None, size: int | None = None) -> Node:
        node = self.nodes.get(path)
        if node is not None:
            if node.is_dir:
                raise FsError(EISDIR)
            if not self.can_write(node, who):
                raise FsError(EACCES)
            node.data = node.data + data if append else data
            if not append:
                node.fixture, node.size = fixture, size
            return node
        self._parent_for_write(path, who)
        owner = "root" if who.root else who.user
        node = self.nodes[path] = Node(False, owner, mode, data, fixture, size)
        return node

    def mkdir(self, path: str, who: Identity, *, parents: bool = False, mode: int = 0o755) -> None:
        if path in self.nodes:
            if parents and self.nodes[path].is_dir:
                return
            raise FsError(EEXIST)
        parent = posixpath.dirname(path)
        if parents and parent not in self.nodes:
            self.mkdir(parent, who, parents=True, mode=mode)
        self._parent_for_write(path, who)
        self.nodes[path] = Node(True, "root" if who.root else who.user, mode)

    def remove(self, path: str, who: Identity, *, recursive: bool = False) -> None:
        node = self.nodes.get(path)
        if node is None:
            raise FsError(ENOENT)
        if path == "/":
            raise FsError(EPERM)
        if node.is_dir and not recursive:
            raise FsError(EISDIR)
        parent = self._parent_for_write(path, who)
        if parent.mode & STICKY and not who.root and node.owner != who.user:
            raise FsError(EPERM)
        doomed = [path]
        if node.is_dir:
            prefix = path + "/"
            doomed += [p for p in self.nodes if p.startswith(prefix)]
        for p in doomed:
            del self.nodes[p]

    def move(self, src: str, dst: str, who: Identity) -> str:
        node = self.nodes.get(src)
        if node is None:
            raise FsError(ENOENT)
        if self.isdir(dst):
            dst = posixpath.join(dst, posixpath.basename(src))
        sparent = self._parent_for_write(src, who)
        if sparent.mode & STICKY and not who.root and node.owner != who.user:
            raise FsError(EPERM)
        self._parent_for_write(dst, who)
        moved = {src: dst}
        if node.is_dir:
            prefix = src + "/"
            for p in list(self.nodes):
                if p.startswith(prefix):
                    moved[p] = dst + p[len(src):]
        for old, new in moved.items():
            self.nodes[new] = self.nodes.pop(old)
        return dst

    def chmod(self, path: str, mode: int, who: Identity) -> None:
        node = self.nodes.get(path)
        if node is None:
            raise FsError(ENOENT)
        if not who.root and node.owner != who.user:
            raise FsError(EPERM)
        node.mode = (node.mode & ~0o7777) | (mode & 0o7777)

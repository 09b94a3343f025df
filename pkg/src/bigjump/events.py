"""Declarative rare-event menu on scaled paths.

Every event kind is decidable in one node scan.  ``dk_separation`` reports
the positive radius by which the event stays away from the cone of paths
with at most k jumps, or None when it does not (in which case the order-k
limit of the event diverges and the ratio harness refuses it).
"""
from __future__ import annotations

from dataclasses import dataclass

from .m1 import exceeds_dk_proxy, kth_largest_jump
from .paths import CadlagPath, path_sup, path_value, terminal

__all__ = [
    "PathEvent",
    "TerminalExceed",
    "ValueAt",
    "SupExceed",
    "JumpCount",
    "DkProxy",
    "parse_event",
    "format_event",
]


@dataclass(frozen=True)
class PathEvent:
    def decide(self, path: CadlagPath) -> bool:
        raise NotImplementedError

    def dk_separation(self, k: int) -> float | None:
        raise NotImplementedError


@dataclass(frozen=True)
class TerminalExceed(PathEvent):
    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("threshold must be positive")

    def decide(self, path: CadlagPath) -> bool:
        return terminal(path) > self.c

    def dk_separation(self, k: int) -> float | None:
        # a single limit jump must carry the whole excess; k >= 1 leaves
        # free coordinates and the order-k limit diverges
        return self.c / 2.0 if k == 0 else None


@dataclass(frozen=True)
class ValueAt(PathEvent):
    s: float
    c: float

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError("evaluation time must lie in [0, 1]")
        if self.c <= 0:
            raise ValueError("threshold must be positive")

    def decide(self, path: CadlagPath) -> bool:
        return path_value(path, self.s) > self.c

    def dk_separation(self, k: int) -> float | None:
        return self.c / 2.0 if k == 0 else None


@dataclass(frozen=True)
class SupExceed(PathEvent):
    c: float

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("threshold must be nonnegative")

    def decide(self, path: CadlagPath) -> bool:
        return path_sup(path) > self.c

    def dk_separation(self, k: int) -> float | None:
        if k == 0 and self.c > 0:
            return self.c / 2.0
        return None


@dataclass(frozen=True)
class JumpCount(PathEvent):
    m: int
    r: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("jump count must be >= 1")
        if self.r <= 0:
            raise ValueError("jump threshold must be positive")

    def decide(self, path: CadlagPath) -> bool:
        return kth_largest_jump(path, self.m) > self.r

    def dk_separation(self, k: int) -> float | None:
        # needs all k+1 limit jumps pinned: at least k+1 jumps above r
        return self.r / 2.0 if self.m >= k + 1 else None


@dataclass(frozen=True)
class DkProxy(PathEvent):
    k: int
    r: float

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("order must be >= 0")
        if self.r <= 0:
            raise ValueError("radius must be positive")

    def decide(self, path: CadlagPath) -> bool:
        return exceeds_dk_proxy(path, self.k, self.r)

    def dk_separation(self, k: int) -> float | None:
        return self.r if self.k >= k else None


_KINDS = {
    "terminal_exceed": (TerminalExceed, ("c",)),
    "value_at": (ValueAt, ("s", "c")),
    "sup_exceed": (SupExceed, ("c",)),
    "jump_count": (JumpCount, ("m", "r")),
    "dk_proxy": (DkProxy, ("k", "r")),
}


def parse_event(text: str) -> PathEvent:
    """Parse ``kind:arg[,arg]`` event descriptions."""
    kind, _, rest = text.strip().partition(":")
    if kind not in _KINDS:
        raise ValueError(f"unknown event kind {kind!r}; choices: {sorted(_KINDS)}")
    cls, fields = _KINDS[kind]
    parts = [p for p in rest.split(",") if p != ""]
    if len(parts) != len(fields):
        raise ValueError(f"event {kind!r} takes {len(fields)} parameters, got {len(parts)}")
    args = []
    for name, raw in zip(fields, parts):
        args.append(int(raw) if name in ("m", "k") else float(raw))
    return cls(*args)


def format_event(event: PathEvent) -> str:
    for kind, (cls, fields) in _KINDS.items():
        if type(event) is cls:
            vals = ",".join(repr(getattr(event, f)) if isinstance(getattr(event, f), float)
                            else str(getattr(event, f)) for f in fields)
            return f"{kind}:{vals}"
    raise TypeError(f"not a path event: {event!r}")

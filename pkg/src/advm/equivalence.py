"""Essential-trace comparison.

Two executions are equivalent when they contain the same multiset of action
firings, where a firing is identified by its scope, action, consumed and
produced values, and (recursively) by the firings that produced the tokens it
consumed. Interleaving and token ids are ignored.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

ROOT = "ROOT"


@dataclass
class Firing:
    id: int
    scope: str
    action: str
    consumed: list[tuple[Optional[str], str]] = field(default_factory=list)
    produced: list[tuple[Optional[str], str]] = field(default_factory=list)
    preds: set = field(default_factory=set)


@dataclass
class EquivalenceResult:
    equivalent: bool
    left_count: int
    right_count: int
    divergence: Optional[str] = None

    def __bool__(self) -> bool:
        return self.equivalent


def _canon(type_: Optional[str], value: dict) -> tuple[Optional[str], str]:
    return type_, json.dumps(value, sort_keys=True, default=str)


def _event_fields(event) -> tuple[str, dict]:
    if isinstance(event, dict):
        return event["kind"], event["payload"]
    return event.kind, event.payload


def essential_firings(trace: Iterable) -> dict[int, Firing]:
    firings: dict[int, Firing] = {}
    for event in trace:
        kind, p = _event_fields(event)
        if kind == "ActionStarted":
            f = Firing(p["firing"], p["scope"], p["action"])
            for c in p["consumed"]:
                f.consumed.append(_canon(c["type"], c["value"]))
                f.preds.update(c["origins"])
            firings[f.id] = f
        elif kind == "TokenCreated" and "firing" in p:
            firings[p["firing"]].produced.append(_canon(p["type"], p["value"]))
    return firings


def causal_keys(firings: dict[int, Firing]) -> dict[int, str]:
    keys: dict[int, str] = {}

    def key(fid: int) -> str:
        if fid == 0:
            return ROOT
        if fid in keys:
            return keys[fid]
        if fid not in firings:
            # producer absent from a truncated trace
            return f"MISSING:{fid}"
        f = firings[fid]
        body = json.dumps([
            f.scope,
            f.action,
            sorted(f.consumed, key=repr),
            sorted(f.produced, key=repr),
            sorted(key(p) for p in f.preds),
        ], default=str)
        keys[fid] = hashlib.sha1(body.encode()).hexdigest()
        return keys[fid]

    for fid in sorted(firings):
        key(fid)
    return keys


def essential_signature(trace: Iterable) -> Counter:
    firings = essential_firings(trace)
    return Counter(causal_keys(firings).values())


def compare_essential_traces(left: Iterable, right: Iterable) -> EquivalenceResult:
    left, right = list(left), list(right)
    lf, rf = essential_firings(left), essential_firings(right)
    lk, rk = causal_keys(lf), causal_keys(rf)
    lc, rc = Counter(lk.values()), Counter(rk.values())
    if lc == rc:
        return EquivalenceResult(True, len(lf), len(rf))
    missing = lc - rc
    extra = rc - lc
    note = None
    for fid in sorted(lf):
        if lk[fid] in missing:
            f = lf[fid]
            note = f"left firing {fid} ({f.scope}:{f.action}) has no match on the right"
            break
    if note is None:
        for fid in sorted(rf):
            if rk[fid] in extra:
                f = rf[fid]
                note = f"right firing {fid} ({f.scope}:{f.action}) has no match on the left"
                break
    return EquivalenceResult(False, len(lf), len(rf), note)

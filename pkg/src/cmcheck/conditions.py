"""Search-restricting condition monitors.

Two kinds: path-shaped component states carried inside composite states
(repeating locations, path length / assume-edge counters, merged by max
when paths join), and the global monitor polled by the engine loop (fuel,
reached-set size, soft wall-clock limit, busy edges).  None of them affect
coverage; exceeding a threshold makes the strengthen operator exclude the
current path instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from . import lang

CONTINUE = "continue"
HALT_GLOBAL = "halt"
PROCEED = "proceed"
SKIP_WITH_ASSUMPTION = "skip"


# ---------------------------------------------------------------------------
# Repeating locations in path
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RepeatState:
    counts: tuple[tuple[int, int], ...]  # (location, occurrences), sorted
    exceeded: bool


def repeat_transfer(state: RepeatState, edge: lang.Edge, k: int) -> RepeatState:
    counts = dict(state.counts)
    counts[edge.target] = counts.get(edge.target, 0) + 1
    exceeded = any(c > k for c in counts.values())
    return RepeatState(tuple(sorted(counts.items())), exceeded)


def repeat_merge(a: RepeatState, b: RepeatState) -> RepeatState:
    counts = dict(a.counts)
    for loc, c in b.counts:
        if c > counts.get(loc, 0):
            counts[loc] = c
    items = tuple(sorted((l, c) for l, c in counts.items() if c))
    return RepeatState(items, a.exceeded or b.exceeded)


def repeat_stop(state: RepeatState, reached) -> bool:
    """Always true: coverage never depends on condition bookkeeping."""
    return True


class RepeatComponent:
    def __init__(self, k: int):
        self.k = k

    def initial(self) -> RepeatState:
        return RepeatState((), False)

    def transfer(self, state, edge):
        return repeat_transfer(state, edge, self.k)

    def merge(self, a, b):
        return repeat_merge(a, b)

    def exceeded(self, state) -> bool:
        return state.exceeded


# ---------------------------------------------------------------------------
# Path length / assume edges in path
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class PathStatsState:
    path_length: int
    assume_edges: int
    exceeded: bool


def pathstats_transfer(state: PathStatsState, edge: lang.Edge,
                       max_length: Optional[int],
                       max_assumes: Optional[int]) -> PathStatsState:
    length = state.path_length + 1
    assumes = state.assume_edges + (1 if isinstance(edge.op, lang.Assume) else 0)
    exceeded = ((max_length is not None and length > max_length)
                or (max_assumes is not None and assumes > max_assumes))
    return PathStatsState(length, assumes, exceeded)


def pathstats_merge(a: PathStatsState, b: PathStatsState) -> PathStatsState:
    return PathStatsState(max(a.path_length, b.path_length),
                          max(a.assume_edges, b.assume_edges),
                          a.exceeded or b.exceeded)


class PathStatsComponent:
    def __init__(self, max_length: Optional[int] = None,
                 max_assumes: Optional[int] = None):
        self.max_length = max_length
        self.max_assumes = max_assumes

    def initial(self) -> PathStatsState:
        return PathStatsState(1, 0, False)  # the root counts itself

    def transfer(self, state, edge):
        return pathstats_transfer(state, edge, self.max_length, self.max_assumes)

    def merge(self, a, b):
        return pathstats_merge(a, b)

    def exceeded(self, state) -> bool:
        return state.exceeded


# ---------------------------------------------------------------------------
# Global progress monitor
# ---------------------------------------------------------------------------

@dataclass
class GlobalMonitor:
    """Soft limits polled by the engine; counters are monotone.

    Fuel (a deterministic cap on transfer computations) is the test-facing
    twin of the wall-clock soft limit: with only fuel set, runs are exactly
    reproducible.
    """

    max_fuel: Optional[int] = None
    max_reached: Optional[int] = None
    soft_time_seconds: Optional[float] = None
    busy_edge_limit: Optional[int] = None
    path_formula_atom_limit: Optional[int] = None

    fuel_spent: int = 0
    edge_posts: dict[int, int] = field(default_factory=dict)
    halted: bool = False
    started_at: float = field(default_factory=time.monotonic)

    def should_halt(self, reached_size: int) -> bool:
        if self.halted:
            return True
        if self.max_fuel is not None and self.fuel_spent >= self.max_fuel:
            self.halted = True
        elif self.max_reached is not None and reached_size > self.max_reached:
            self.halted = True
        elif (self.soft_time_seconds is not None
              and time.monotonic() - self.started_at > self.soft_time_seconds):
            self.halted = True
        return self.halted

    def pre_post(self, edge_id: int) -> str:
        """Gate one transfer computation along an edge."""
        if self.max_fuel is not None and self.fuel_spent >= self.max_fuel:
            self.halted = True
            return HALT_GLOBAL
        if self.busy_edge_limit is not None:
            n = self.edge_posts.get(edge_id, 0) + 1
            self.edge_posts[edge_id] = n
            if n > self.busy_edge_limit:
                return SKIP_WITH_ASSUMPTION
        self.fuel_spent += 1
        return PROCEED


def monitor_should_halt(monitor: GlobalMonitor, reached_size: int) -> str:
    return HALT_GLOBAL if monitor.should_halt(reached_size) else CONTINUE


def busy_edge_check(monitor: GlobalMonitor, edge: lang.Edge) -> str:
    r = monitor.pre_post(edge.id)
    return SKIP_WITH_ASSUMPTION if r == SKIP_WITH_ASSUMPTION else PROCEED

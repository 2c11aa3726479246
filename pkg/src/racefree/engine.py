"""Worklist fixpoint over the sync-CFG, and exact collecting fixpoints.

The analyses differ only in the domain and the granularity of the mix
applied at lock acquires: value-set analysis uses intervals with a plain
join, the relational analysis uses octagons with a variable-granular mix
(all correlations forgotten across threads), and its region variant keeps
correlations inside each declared region.

Facts are sound only under owned-variable projection; the engine itself
just computes a post-fixpoint of the transfer system and leaves the
projection to the assertion checker.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

from .absdom import (
    BOTTOM,
    EnvSetDomain,
    IntervalDomain,
    OctagonDomain,
    RecencyFact,
    is_bottom,
    recency_admit_sync,
    singleton_partition,
)
from .lang import Acquire, Assign, Assume, Instruction, Program, RegionMap, Release
from .syncfg import SyncCFG, build_syncfg

ANALYSES = ("valset", "rel", "regrel")
DOMAINS = ("interval", "octagon", "envset")


class AnalysisLimitError(Exception):
    def __init__(self, location: int, cap: int):
        super().__init__(f"iteration cap {cap} exceeded while processing location {location}")
        self.location = location


class PostFixpointError(AssertionError):
    pass


@dataclass
class AnalysisConfig:
    analysis: str = "rel"
    domain: str = "octagon"
    recency: bool = False
    regions: Optional[RegionMap] = None  # defaults to the program's partition
    widen_delay: int = 2
    gamma: str = "default"
    iteration_cap: int = 10_000
    havoc_values: tuple[int, ...] = (0, 1, 2)
    value_box: tuple[int, int] = (-4, 4)

    def validate(self) -> None:
        if self.analysis not in ANALYSES:
            raise ValueError(f"unknown analysis {self.analysis!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.analysis == "valset" and self.domain == "octagon":
            raise ValueError("the value-set analysis pairs with the interval domain")


LocationFacts = dict[int, Union[object, RecencyFact]]


def make_domain(cfg: AnalysisConfig, variables: tuple[str, ...]):
    if cfg.domain == "interval":
        return IntervalDomain(variables)
    if cfg.domain == "octagon":
        return OctagonDomain(variables)
    return EnvSetDomain(variables, value_box=cfg.value_box, havoc_values=cfg.havoc_values)


def mix_partition(cfg: AnalysisConfig, p: Program) -> tuple[tuple[int, ...], ...]:
    if cfg.analysis == "regrel":
        regions = cfg.regions or p.regions
        return regions.index_partition(p.variables)
    return singleton_partition(len(p.variables))


class _Frame:
    """One analysis run: domain, recency plumbing, and fact bookkeeping."""

    def __init__(self, p: Program, g: SyncCFG, cfg: AnalysisConfig):
        cfg.validate()
        self.p = p
        self.g = g
        self.cfg = cfg
        self.domain = make_domain(cfg, p.variables)
        self.partition = mix_partition(cfg, p)
        self.value_set = cfg.analysis == "valset" and cfg.domain == "envset"
        self.tid_of_loc = {}
        for tid, t in enumerate(p.threads):
            for loc in t.locations:
                self.tid_of_loc[loc] = tid
        self.by_source: dict[int, list[Instruction]] = {}
        for i in p.instructions:
            self.by_source.setdefault(i.source, []).append(i)
        # acquire sources to re-enqueue when a release-point fact changes
        self.dependents: dict[int, list[int]] = {}
        for rel, acq, _m in g.sync_edges:
            self.dependents.setdefault(rel, []).append(acq)
        self.widen_points = self._widen_points()

    # --- recency-transparent element operations

    def wrap(self, elem, tids=frozenset()):
        if self.cfg.recency:
            return RecencyFact(elem, tids)
        return elem

    def base(self, fact):
        return fact.elem if isinstance(fact, RecencyFact) else fact

    def tids(self, fact):
        return fact.tids if isinstance(fact, RecencyFact) else frozenset()

    def fact_bottom(self, fact) -> bool:
        return is_bottom(self.base(fact))

    def join(self, a, b):
        j = self.domain.join(self.base(a), self.base(b))
        return self.wrap(j, self.tids(a) | self.tids(b))

    def widen(self, a, b):
        if self.cfg.domain == "envset":
            return self.join(a, b)  # finite domain: plain join suffices
        w = self.domain.widen(self.base(a), self.base(b))
        return self.wrap(w, self.tids(a) | self.tids(b))

    def equal(self, a, b) -> bool:
        return self.domain.equal(self.base(a), self.base(b)) and self.tids(a) == self.tids(b)

    def leq(self, a, b) -> bool:
        return self.domain.leq(self.base(a), self.base(b)) and self.tids(a) <= self.tids(b)

    def _postprocess(self, elem):
        if self.value_set and not is_bottom(elem):
            return self.domain.product_closure(elem)
        return elem

    def transfer(self, instr: Instruction, fact, facts: LocationFacts):
        """Abstract effect of one instruction on the fact at its source."""
        c = instr.command
        tid = self.tid_of_loc[instr.source]
        if isinstance(c, Acquire):
            inputs = [fact]
            for rel in self.g.release_points_feeding(instr.source, c.lock):
                incoming = facts[rel]
                if self.fact_bottom(incoming):
                    continue
                if self.cfg.recency and not recency_admit_sync(
                    tid, RecencyFact(self.base(incoming), self.tids(incoming))
                ):
                    continue
                inputs.append(incoming)
            live = [self.base(f) for f in inputs if not self.fact_bottom(f)]
            if not live:
                return self.wrap(BOTTOM)
            mixed = self.domain.mix(live, self.partition)
            tids = frozenset().union(*(self.tids(f) for f in inputs))
            return self.wrap(self._postprocess(mixed), tids)
        if self.fact_bottom(fact):
            return self.wrap(BOTTOM)
        if isinstance(c, Assign):
            out = self.domain.assign(self.base(fact), c.var, c.expr)
            return self.wrap(self._postprocess(out), self.tids(fact) | {tid})
        if isinstance(c, Assume):
            out = self.domain.assume(self.base(fact), c.cond)
            return self.wrap(self._postprocess(out), self.tids(fact))
        if isinstance(c, Release):
            return fact
        raise TypeError(f"not a command: {c!r}")

    def initial_facts(self) -> LocationFacts:
        facts: LocationFacts = {}
        for t in self.p.threads:
            for loc in t.locations:
                facts[loc] = self.wrap(BOTTOM)
        for t in self.p.threads:
            facts[t.entry] = self.wrap(self.domain.initial())
        return facts

    def _widen_points(self) -> frozenset[int]:
        """Back-edge targets under per-thread DFS, plus acquire targets
        (inter-thread cycles through sync edges close at acquire targets)."""
        points: set[int] = set()
        for t in self.p.threads:
            succs: dict[int, list[int]] = {}
            for i in t.instructions:
                succs.setdefault(i.source, []).append(i.target)
            color: dict[int, int] = {}

            def dfs(n: int):
                color[n] = 1
                for s in succs.get(n, ()):
                    if color.get(s, 0) == 1:
                        points.add(s)
                    elif color.get(s, 0) == 0:
                        dfs(s)
                color[n] = 2

            dfs(t.entry)
        for i in self.p.instructions:
            if isinstance(i.command, Acquire):
                points.add(i.target)
        return frozenset(points)


def analyze_fixpoint(p: Program, g: SyncCFG, cfg: AnalysisConfig) -> LocationFacts:
    """Deterministic worklist fixpoint; returns a verified post-fixpoint."""
    frame = _Frame(p, g, cfg)
    facts = frame.initial_facts()
    use_widening = cfg.domain != "envset"

    worklist = deque(sorted(t.entry for t in p.threads))
    queued = set(worklist)
    update_count: dict[int, int] = {}
    visits = 0

    while worklist:
        loc = worklist.popleft()
        queued.discard(loc)
        visits += 1
        if visits > cfg.iteration_cap:
            raise AnalysisLimitError(loc, cfg.iteration_cap)
        for instr in frame.by_source.get(loc, ()):
            new = frame.transfer(instr, facts[loc], facts)
            if frame.fact_bottom(new):
                continue
            tgt = instr.target
            cur = facts[tgt]
            joined = frame.join(cur, new)
            if use_widening and tgt in frame.widen_points:
                if update_count.get(tgt, 0) >= cfg.widen_delay:
                    joined = frame.widen(cur, joined)
            if frame.equal(joined, cur):
                continue
            facts[tgt] = joined
            update_count[tgt] = update_count.get(tgt, 0) + 1
            if tgt not in queued:
                worklist.append(tgt)
                queued.add(tgt)
            for acq_src in frame.dependents.get(tgt, ()):
                if acq_src not in queued:
                    worklist.append(acq_src)
                    queued.add(acq_src)

    if use_widening:
        facts = _narrow(frame, facts)
    check_postfixpoint(p, g, cfg, facts, frame=frame)
    return facts


_NARROW_CAP = 8


def _narrow(frame: _Frame, facts: LocationFacts) -> LocationFacts:
    """Descending Jacobi rounds without widening, to stabilization (capped).

    Applying the global transfer to a post-fixpoint descends and stays a
    post-fixpoint, so every round is sound; a single round would leave
    join-accumulation artifacts at nodes downstream of widening points.
    """
    for _ in range(_NARROW_CAP):
        out: LocationFacts = dict(frame.initial_facts())
        for loc in sorted(facts):
            for instr in frame.by_source.get(loc, ()):
                new = frame.transfer(instr, facts[loc], facts)
                out[instr.target] = frame.join(out[instr.target], new)
        # never go above the old facts (defensive; holds by construction)
        if any(not frame.leq(out[loc], facts[loc]) for loc in out):
            return facts
        if all(frame.equal(out[loc], facts[loc]) for loc in out):
            return facts
        facts = out
    return facts


def check_postfixpoint(
    p: Program,
    g: SyncCFG,
    cfg: AnalysisConfig,
    facts: LocationFacts,
    frame: Optional[_Frame] = None,
) -> None:
    """Assert the per-instruction transfer inequality exhaustively."""
    frame = frame or _Frame(p, g, cfg)
    for instr in p.instructions:
        new = frame.transfer(instr, facts[instr.source], facts)
        if not frame.leq(new, facts[instr.target]):
            raise PostFixpointError(
                f"transfer of {instr.source}->{instr.target} exceeds the stored fact"
            )


@dataclass
class CollectingResult:
    facts: LocationFacts
    clamped: bool
    value_box: tuple[int, int]


def collecting_fixpoint(
    p: Program,
    cfg: AnalysisConfig,
    value_box: tuple[int, int],
    g: Optional[SyncCFG] = None,
) -> CollectingResult:
    """Exact least fixpoint of the set-based transfer system over a finite
    value box (environments escaping the box are dropped and reported)."""
    run = AnalysisConfig(
        analysis=cfg.analysis,
        domain="envset",
        recency=cfg.recency,
        regions=cfg.regions,
        gamma=cfg.gamma,
        iteration_cap=cfg.iteration_cap,
        havoc_values=cfg.havoc_values,
        value_box=value_box,
    )
    graph = g or build_syncfg(p)
    frame = _Frame(p, graph, run)
    facts = frame.initial_facts()
    worklist = deque(sorted(t.entry for t in p.threads))
    queued = set(worklist)
    visits = 0
    while worklist:
        loc = worklist.popleft()
        queued.discard(loc)
        visits += 1
        if visits > run.iteration_cap:
            raise AnalysisLimitError(loc, run.iteration_cap)
        for instr in frame.by_source.get(loc, ()):
            new = frame.transfer(instr, facts[loc], facts)
            if frame.fact_bottom(new):
                continue
            tgt = instr.target
            joined = frame.join(facts[tgt], new)
            if frame.equal(joined, facts[tgt]):
                continue
            facts[tgt] = joined
            if tgt not in queued:
                worklist.append(tgt)
                queued.add(tgt)
            for acq_src in frame.dependents.get(tgt, ()):
                if acq_src not in queued:
                    worklist.append(acq_src)
                    queued.add(acq_src)
    check_postfixpoint(p, graph, run, facts, frame=frame)
    return CollectingResult(facts=facts, clamped=frame.domain.clamped, value_box=value_box)


def facts_to_json(p: Program, cfg: AnalysisConfig, facts: LocationFacts) -> list[dict]:
    domain = make_domain(cfg, p.variables)
    rows = []
    for loc in sorted(facts):
        fact = facts[loc]
        elem = fact.elem if isinstance(fact, RecencyFact) else fact
        tids = sorted(fact.tids) if isinstance(fact, RecencyFact) else []
        rows.append({
            "location": loc,
            "thread": p.thread_of_location(loc),
            "constraints": domain.constraints(elem),
            "recency_tids": [p.threads[t].name for t in tids],
        })
    return rows

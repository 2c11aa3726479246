"""Standard interleaving semantics, bounded exploration, and race checking.

States are immutable tuples, so exploration can deduplicate and memoize
freely.  Race verdicts are always bounded: an empty report means "no race
found up to the given depth", never "race free".
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterator, Optional

from .lang import (
    Acquire,
    Assign,
    Assume,
    BinExpr,
    BoolOp,
    Cmp,
    Instruction,
    NotExpr,
    Program,
    RegionMap,
    Release,
    ScaledExpr,
    Thread,
    VarRef,
    eval_bool,
    eval_expr,
    havoc_slots,
    instr_accesses,
    print_command,
    vars_of_bool,
    vars_of_expr,
)

DEFAULT_HAVOC = (0, 1, 2)
DEFAULT_BUDGET = 500_000


class ExplorationLimitError(Exception):
    """The configured exploration budget was exhausted."""


@dataclass(frozen=True)
class StdState:
    pc: tuple[int, ...]
    mu: tuple[Optional[int], ...]
    phi: tuple[int, ...]


@dataclass(frozen=True)
class Transition:
    tid: int
    instr: Instruction
    choices: tuple[int, ...]
    pre: StdState
    post: StdState


@dataclass(frozen=True)
class Execution:
    initial: StdState
    steps: tuple[Transition, ...]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> StdState:
        return self.steps[-1].post if self.steps else self.initial


class ProgramIndex:
    """Derived lookup tables for one desugared program."""

    def __init__(self, program: Program):
        if not program.is_desugared:
            raise ValueError("program must be desugared")
        self.program = program
        self.var_index = {v: i for i, v in enumerate(program.variables)}
        self.lock_index = {m: i for i, m in enumerate(program.locks)}
        self.thread_names = tuple(t.name for t in program.threads)
        self.by_source: dict[int, tuple[Instruction, ...]] = {}
        self.tid_of_instr: dict[Instruction, int] = {}
        for tid, t in enumerate(program.threads):
            for i in t.instructions:
                self.by_source.setdefault(i.source, ())
                self.by_source[i.source] = self.by_source[i.source] + (i,)
                self.tid_of_instr[i] = tid
        self.accesses: dict[Instruction, tuple[frozenset[str], frozenset[str]]] = {
            i: instr_accesses(i) for i in program.instructions
        }

    def env_of(self, s: StdState) -> dict[str, int]:
        return {v: s.phi[i] for v, i in self.var_index.items()}


def initial_state(p: Program) -> StdState:
    return StdState(
        pc=tuple(t.entry for t in p.threads),
        mu=(None,) * len(p.locks),
        phi=(0,) * len(p.variables),
    )


def std_step(
    p: Program,
    s: StdState,
    instr: Instruction,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    index: Optional[ProgramIndex] = None,
) -> tuple[tuple[tuple[int, ...], StdState], ...]:
    """Successors of `s` under `instr`, one per havoc choice; empty = disabled."""
    idx = index or ProgramIndex(p)
    tid = idx.tid_of_instr[instr]
    if s.pc[tid] != instr.source:
        return ()
    pc2 = tuple(instr.target if k == tid else loc for k, loc in enumerate(s.pc))
    c = instr.command
    if isinstance(c, Assign):
        env = idx.env_of(s)
        vi = idx.var_index[c.var]
        out = []
        slots = havoc_slots(c.expr)
        for choices in product(tuple(sorted(set(havoc_values))), repeat=slots):
            value = eval_expr(c.expr, env, choices)
            phi2 = tuple(value if k == vi else v for k, v in enumerate(s.phi))
            out.append((choices, StdState(pc2, s.mu, phi2)))
        return tuple(out)
    if isinstance(c, Assume):
        if eval_bool(c.cond, idx.env_of(s)):
            return (((), StdState(pc2, s.mu, s.phi)),)
        return ()
    if isinstance(c, Acquire):
        mi = idx.lock_index[c.lock]
        if s.mu[mi] is not None:
            return ()
        mu2 = tuple(tid if k == mi else h for k, h in enumerate(s.mu))
        return (((), StdState(pc2, mu2, s.phi)),)
    if isinstance(c, Release):
        mi = idx.lock_index[c.lock]
        if s.mu[mi] != tid:
            return ()
        mu2 = tuple(None if k == mi else h for k, h in enumerate(s.mu))
        return (((), StdState(pc2, mu2, s.phi)),)
    raise TypeError(f"not a command: {c!r}")


def _successor_transitions(p, idx, s, havoc_values) -> Iterator[Transition]:
    for tid, t in enumerate(p.threads):
        for instr in t.instructions:
            if instr.source != s.pc[tid]:
                continue
            for choices, post in std_step(p, s, instr, havoc_values, idx):
                yield Transition(tid, instr, choices, s, post)


def successor_transitions(
    p: Program,
    s: StdState,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    index: Optional[ProgramIndex] = None,
) -> tuple[Transition, ...]:
    """All enabled transitions out of `s`, in canonical order."""
    idx = index or ProgramIndex(p)
    return tuple(_successor_transitions(p, idx, s, havoc_values))


def enumerate_executions(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
) -> Iterator[Execution]:
    """Every execution of length <= depth, each exactly once, canonical order.

    Order is depth-first by (thread index, instruction order, havoc value);
    every prefix is itself yielded.  Raises ExplorationLimitError when more
    than `budget` executions would be produced.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    idx = ProgramIndex(p)
    init = initial_state(p)
    produced = 0

    def walk(state: StdState, steps: list[Transition]) -> Iterator[Execution]:
        nonlocal produced
        produced += 1
        if produced > budget:
            raise ExplorationLimitError(f"exploration budget {budget} exceeded")
        yield Execution(init, tuple(steps))
        if len(steps) >= depth:
            return
        for tr in _successor_transitions(p, idx, state, havoc_values):
            steps.append(tr)
            yield from walk(tr.post, steps)
            steps.pop()

    yield from walk(init, [])


def reachable_states(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
) -> set[StdState]:
    """Distinct states reachable within `depth` steps (visited-set pruned)."""
    idx = ProgramIndex(p)
    init = initial_state(p)
    seen = {init}
    frontier = [init]
    for _ in range(depth):
        nxt = []
        for s in frontier:
            for tr in _successor_transitions(p, idx, s, havoc_values):
                if tr.post not in seen:
                    seen.add(tr.post)
                    nxt.append(tr.post)
                    if len(seen) > budget:
                        raise ExplorationLimitError(f"state budget {budget} exceeded")
        frontier = nxt
        if not frontier:
            break
    return seen


# ---------------------------------------------------------------------------
# Happens-before


@dataclass(frozen=True)
class HappensBefore:
    """hb = (po U sw)* over the step indices of one execution."""

    clocks: tuple[tuple[int, ...], ...]
    tids: tuple[int, ...]
    po_edges: tuple[tuple[int, int], ...]
    sw_edges: tuple[tuple[int, int], ...]

    def ordered(self, i: int, j: int) -> bool:
        """True iff step i happens-before step j (reflexive)."""
        if i == j:
            return True
        if i > j:
            return False
        return self.clocks[i][self.tids[i]] <= self.clocks[j][self.tids[i]]

    def unordered(self, i: int, j: int) -> bool:
        return not self.ordered(i, j) and not self.ordered(j, i)

    def as_relation(self) -> frozenset[tuple[int, int]]:
        n = len(self.tids)
        return frozenset(
            (i, j) for i in range(n) for j in range(n)
            if (i <= j and self.ordered(i, j))
        )


def happens_before(e: Execution, index: Optional[ProgramIndex] = None) -> HappensBefore:
    if not e.steps:
        return HappensBefore((), (), (), ())
    n_threads = len(e.initial.pc)
    lock_names = sorted({tr.instr.command.lock for tr in e.steps
                         if isinstance(tr.instr.command, (Acquire, Release))})
    thread_clock = [[0] * n_threads for _ in range(n_threads)]
    lock_clock = {m: [0] * n_threads for m in lock_names}
    clocks: list[tuple[int, ...]] = []
    tids: list[int] = []
    po_edges: list[tuple[int, int]] = []
    sw_edges: list[tuple[int, int]] = []
    last_of_thread: dict[int, int] = {}
    last_release: dict[str, int] = {}
    for k, tr in enumerate(e.steps):
        t = tr.tid
        cmd = tr.instr.command
        if isinstance(cmd, Acquire):
            lm = lock_clock[cmd.lock]
            thread_clock[t] = [max(a, b) for a, b in zip(thread_clock[t], lm)]
            if cmd.lock in last_release:
                sw_edges.append((last_release.pop(cmd.lock), k))
        thread_clock[t][t] += 1
        clocks.append(tuple(thread_clock[t]))
        tids.append(t)
        if isinstance(cmd, Release):
            lock_clock[cmd.lock] = list(thread_clock[t])
            last_release[cmd.lock] = k
        if t in last_of_thread:
            po_edges.append((last_of_thread[t], k))
        last_of_thread[t] = k
    return HappensBefore(tuple(clocks), tuple(tids), tuple(po_edges), tuple(sw_edges))


# ---------------------------------------------------------------------------
# Race detection


@dataclass(frozen=True)
class RaceReport:
    execution: Execution
    first: int
    second: int
    subject: str  # variable or region name


def _conflicts(a_reads, a_writes, b_reads, b_writes) -> frozenset[str]:
    return (a_writes & (b_reads | b_writes)) | (b_writes & a_reads)


def _find_races(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...],
    budget: int,
    subjects_of: Callable[[Instruction], tuple[frozenset[str], frozenset[str]]],
    involving: Optional[Instruction] = None,
    stop_at_first: bool = False,
) -> list[RaceReport]:
    """DFS over the execution tree, reporting hb-unordered conflicting pairs.

    A pair is reported at the tree node where its second access is appended,
    so each distinct (instruction, instruction, subject) triple is witnessed
    once, by its canonically first execution.
    """
    idx = ProgramIndex(p)
    init = initial_state(p)
    n_threads = len(p.threads)
    lock_names = list(p.locks)
    reported: dict[tuple, RaceReport] = {}
    visits = 0

    subj_cache: dict[Instruction, tuple[frozenset[str], frozenset[str]]] = {}

    def subjects(instr):
        if instr not in subj_cache:
            subj_cache[instr] = subjects_of(instr)
        return subj_cache[instr]

    # stacks maintained incrementally along the DFS
    steps: list[Transition] = []
    clocks: list[tuple[int, ...]] = []
    thread_clock = [[0] * n_threads for _ in range(n_threads)]
    lock_clock = {m: [0] * n_threads for m in lock_names}

    def walk(state: StdState) -> bool:
        nonlocal visits
        visits += 1
        if visits > budget:
            raise ExplorationLimitError(f"exploration budget {budget} exceeded")
        if len(steps) >= depth:
            return False
        for tr in _successor_transitions(p, idx, state, havoc_values):
            t = tr.tid
            cmd = tr.instr.command
            saved_thread = list(thread_clock[t])
            saved_lock = None
            if isinstance(cmd, Acquire):
                lm = lock_clock[cmd.lock]
                thread_clock[t] = [max(a, b) for a, b in zip(thread_clock[t], lm)]
            thread_clock[t][t] += 1
            if isinstance(cmd, Release):
                saved_lock = lock_clock[cmd.lock]
                lock_clock[cmd.lock] = list(thread_clock[t])
            k = len(steps)
            vc_k = tuple(thread_clock[t])
            clocks.append(vc_k)
            steps.append(tr)

            k_reads, k_writes = subjects(tr.instr)
            if k_reads or k_writes:
                for i in range(k):
                    prior = steps[i]
                    if prior.tid == t:
                        continue
                    if involving is not None and (
                        prior.instr is not involving and tr.instr is not involving
                    ):
                        continue
                    i_reads, i_writes = subjects(prior.instr)
                    conflict = _conflicts(i_reads, i_writes, k_reads, k_writes)
                    if not conflict:
                        continue
                    if clocks[i][prior.tid] <= vc_k[prior.tid]:
                        continue  # ordered by happens-before
                    for subject in sorted(conflict):
                        key = (prior.instr, tr.instr, subject)
                        if key not in reported:
                            witness = Execution(init, tuple(steps))
                            reported[key] = RaceReport(witness, i, k, subject)
                            if stop_at_first:
                                return True
            done = walk(tr.post)
            steps.pop()
            clocks.pop()
            thread_clock[t] = saved_thread
            if saved_lock is not None:
                lock_clock[cmd.lock] = saved_lock
            if done:
                return True
        return False

    walk(init)
    return sorted(
        reported.values(),
        key=lambda r: (r.subject, r.first, r.second, len(r.execution.steps)),
    )


def find_data_races(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
) -> list[RaceReport]:
    """All hb-unordered conflicting same-variable access pairs up to depth."""
    return _find_races(p, depth, havoc_values, budget, instr_accesses)


def find_region_races(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
    regions: Optional[RegionMap] = None,
) -> list[RaceReport]:
    """Like find_data_races, with accesses lifted to the region partition."""
    rg = regions or p.regions

    def region_subjects(instr: Instruction):
        reads, writes = instr_accesses(instr)
        return (
            frozenset(rg.region_of(v) for v in reads),
            frozenset(rg.region_of(v) for v in writes),
        )

    return _find_races(p, depth, havoc_values, budget, region_subjects)


# ---------------------------------------------------------------------------
# Owned variables (bounded semantic oracle)


def _probe_program(p: Program, thread: str, location: int, var: str) -> tuple[Program, Instruction]:
    """Insert a dead-end `assume(var == var)` branch at `location`."""
    fresh = max(max(t.locations) for t in p.threads) + 1
    probe = Instruction(location, Assume(Cmp("==", VarRef(var), VarRef(var))), fresh)
    threads = []
    for t in p.threads:
        if t.name == thread:
            threads.append(Thread(t.name, t.body, t.entry, t.instructions + (probe,)))
        else:
            threads.append(t)
    return (
        Program(p.variables, p.locks, p.regions, tuple(threads), p.assertions),
        probe,
    )


def owned_vars_oracle(
    p: Program,
    thread: str,
    location: int,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
) -> frozenset[str]:
    """Variables whose probe read at (thread, location) races in no execution
    explored up to the given depth.  Over-approximates the true owned set when
    the depth is too small to expose a race."""
    tindex = p.thread_index(thread)
    if location not in p.threads[tindex].locations:
        raise ValueError(f"location {location} is not in thread {thread!r}")
    owned = set()
    for var in p.variables:
        probed, probe = _probe_program(p, thread, location, var)
        races = _find_races(
            probed, depth + 1, havoc_values, budget, instr_accesses,
            involving=probe, stop_at_first=True,
        )
        if not races:
            owned.add(var)
    return frozenset(owned)


# ---------------------------------------------------------------------------
# Region-race reduction to data races


def translate_for_region_races(p: Program) -> Program:
    """Rewrite `p` so data races on per-region witness variables correspond to
    region races of `p`.

    Assume conditions (and registered assertion reads) are first localized
    through fresh per-thread copies, then every assignment writing region r_w
    and reading regions r_1..r_n is preceded by X_{r_w} := X_{r_1}; ...;
    X_{r_w} := X_{r_n} (X_{r_w} := X_{r_w} when nothing is read, so pure
    writes still mark their region).
    """
    if not p.is_desugared:
        raise ValueError("program must be desugared")
    rg = p.regions

    # fresh per-thread locals for variables read inside assume conditions;
    # each local forms a singleton region of its own
    locals_of: dict[str, dict[str, str]] = {}
    local_names: list[str] = []
    for t in p.threads:
        table: dict[str, str] = {}
        for i in t.instructions:
            if isinstance(i.command, Assume):
                for v in sorted(vars_of_bool(i.command.cond) | i.assert_reads):
                    if v not in table:
                        table[v] = f"__{t.name}_{v}"
                        local_names.append(table[v])
        locals_of[t.name] = table

    def region_of(v: str) -> str:
        return v if v in set(local_names) else rg.region_of(v)

    region_names = list(rg.names) + local_names
    region_var = {name: f"__rg_{name}" for name in region_names}
    fresh_loc = max(max(t.locations) for t in p.threads) + 1

    def alloc_loc() -> int:
        nonlocal fresh_loc
        loc = fresh_loc
        fresh_loc += 1
        return loc

    threads = []
    for t in p.threads:
        instrs: list[Instruction] = []
        table = locals_of[t.name]

        def emit_region_prefix(entry: int, write_var: str, read_vars) -> int:
            rw = region_var[region_of(write_var)]
            read_regions = sorted({region_of(v) for v in read_vars}) or [
                region_of(write_var)
            ]
            cur = entry
            for r in read_regions:
                nxt = alloc_loc()
                instrs.append(Instruction(cur, Assign(rw, VarRef(region_var[r])), nxt))
                cur = nxt
            return cur

        for i in t.instructions:
            if isinstance(i.command, Assign):
                reads = sorted(vars_of_expr(i.command.expr))
                cur = emit_region_prefix(i.source, i.command.var, reads)
                instrs.append(Instruction(cur, i.command, i.target))
            elif isinstance(i.command, Assume):
                shared_reads = sorted(vars_of_bool(i.command.cond) | i.assert_reads)
                if not shared_reads:
                    instrs.append(Instruction(i.source, i.command, i.target))
                    continue
                # localize: l_v := v for each read, then assume on the copies
                cur = i.source
                for v in shared_reads:
                    lv = table[v]
                    mid = emit_region_prefix(cur, lv, [v])
                    nxt = alloc_loc()
                    instrs.append(Instruction(mid, Assign(lv, VarRef(v)), nxt))
                    cur = nxt
                cond = _substitute_bool(i.command.cond, table)
                instrs.append(Instruction(cur, Assume(cond), i.target))
            else:
                instrs.append(Instruction(i.source, i.command, i.target))
        threads.append(Thread(t.name, t.body, t.entry, tuple(instrs)))

    all_vars = tuple(
        list(p.variables) + local_names + [region_var[n] for n in region_names]
    )
    declared = {name: vs for name, vs in rg.members if len(vs) > 1}
    regions = RegionMap.from_declared(all_vars, declared)
    return Program(all_vars, p.locks, regions, tuple(threads), p.assertions)


def _substitute_bool(b, mapping):
    if isinstance(b, Cmp):
        return Cmp(b.op, _substitute_expr(b.left, mapping), _substitute_expr(b.right, mapping))
    if isinstance(b, BoolOp):
        return BoolOp(b.op, _substitute_bool(b.left, mapping), _substitute_bool(b.right, mapping))
    if isinstance(b, NotExpr):
        return NotExpr(_substitute_bool(b.expr, mapping))
    return b


def _substitute_expr(e, mapping):
    if isinstance(e, VarRef):
        return VarRef(mapping.get(e.name, e.name))
    if isinstance(e, BinExpr):
        return BinExpr(e.op, _substitute_expr(e.left, mapping), _substitute_expr(e.right, mapping))
    if isinstance(e, ScaledExpr):
        return ScaledExpr(e.coef, _substitute_expr(e.expr, mapping))
    return e


def racy_regions_via_translation(
    p: Program,
    depth: int,
    havoc_values: tuple[int, ...] = DEFAULT_HAVOC,
    budget: int = DEFAULT_BUDGET,
) -> frozenset[str]:
    """Regions of `p` whose witness variable races in the translated program."""
    translated = translate_for_region_races(p)
    races = find_data_races(translated, depth, havoc_values, budget)
    out = set()
    for r in races:
        if r.subject.startswith("__rg_"):
            out.add(r.subject[len("__rg_"):])
    return frozenset(out)


# ---------------------------------------------------------------------------
# Trace dump


def format_execution(e: Execution, p: Program) -> str:
    """One line per transition, then po/sw edge lists."""
    hb = happens_before(e)
    lines = []
    for tr in e.steps:
        name = p.threads[tr.tid].name
        cmd = print_command(tr.instr.command)
        if tr.choices:
            cmd += " {" + ",".join(map(str, tr.choices)) + "}"
        lines.append(f"{name} {tr.instr.source} -[{cmd}]-> {tr.instr.target}")
    lines.append("po: " + " ".join(f"{i}->{j}" for i, j in hb.po_edges))
    lines.append("sw: " + " ".join(f"{i}->{j}" for i, j in hb.sw_edges))
    return "\n".join(lines)
